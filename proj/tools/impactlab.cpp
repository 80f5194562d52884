// impactlab: run one experiment command and write CSV, summary.txt and the
// resolved config. Exit 0 iff every tolerance passes, 1 on a failed
// tolerance, 2 on any error (with one "error: kind=... message=..." line).

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "impactlab/cli.hpp"
#include "impactlab/config.hpp"
#include "impactlab/errors.hpp"

namespace {

std::string keys_help() {
    std::string s = "\nConfig keys (key=value, '#' comments; --set overrides):\n";
    for (const auto& k : impactlab::config_keys()) {
        s += "  " + std::string(k.name) + " (default " + (k.default_value.empty() ? "empty" : std::string(k.default_value)) +
             "): " + std::string(k.help) + "\n";
    }
    return s;
}

const char* error_kind(const std::exception& e) {
    if (dynamic_cast<const impactlab::ConfigError*>(&e)) return "config";
    if (dynamic_cast<const impactlab::DomainError*>(&e)) return "domain";
    if (dynamic_cast<const impactlab::OverflowError*>(&e)) return "overflow";
    if (dynamic_cast<const impactlab::ConvergenceError*>(&e)) return "convergence";
    if (dynamic_cast<const impactlab::EmbeddingError*>(&e)) return "embedding";
    if (dynamic_cast<const impactlab::BinPopulationError*>(&e)) return "bin_population";
    if (dynamic_cast<const impactlab::PathError*>(&e)) return "path";
    return "runtime";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte-Carlo and closed-form market impact of a Bayesian market maker"};
    app.footer(keys_help());

    std::string command;
    std::string config_path;
    std::string out_dir;
    std::string seed;
    std::string workers;
    std::string curve;
    std::string grid;
    std::vector<std::string> sets;
    app.add_option("command", command,
                   "simulate | impact | decay | reverse | crossover | estimate | kyle | variance | spread | theory | validate")
        ->required();
    app.add_option("--config", config_path, "flat key=value config file");
    app.add_option("--out", out_dir, "output directory (default $IMPACTLAB_OUT, else ./impactlab_out)");
    app.add_option("--seed", seed, "master seed (same as --set seed=U64)");
    app.add_option("--workers", workers, "worker threads, 0 = all cores (same as --set workers=N)");
    app.add_option("--curve", curve, "theory curve name (same as --set curve=NAME)");
    app.add_option("--grid", grid, "record grid (same as --set grid=SPEC)");
    app.add_option("--set", sets, "key=value override, repeatable")->take_all();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: kind=usage message=" << e.what() << '\n';
        return 2;
    }

    try {
        const auto cmd = impactlab::parse_command(command);
        if (!cmd) throw impactlab::DomainError("unknown command '" + command + "'");
        impactlab::RunManifest manifest;
        manifest.command = *cmd;
        manifest.config_path = config_path;
        if (out_dir.empty()) {
            const char* env = std::getenv("IMPACTLAB_OUT");
            out_dir = env != nullptr && *env != '\0' ? env : "impactlab_out";
        }
        manifest.output_path = out_dir;
        for (const auto& s : sets) manifest.overrides.push_back(impactlab::parse_override(s));
        if (!seed.empty()) manifest.overrides.emplace_back("seed", seed);
        if (!workers.empty()) manifest.overrides.emplace_back("workers", workers);
        if (!curve.empty()) manifest.overrides.emplace_back("curve", curve);
        if (!grid.empty()) manifest.overrides.emplace_back("grid", grid);
        const auto result = impactlab::dispatch(manifest, std::cout);
        return result.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: kind=" << error_kind(e) << " message=" << e.what() << '\n';
        return 2;
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "impactlab/cli.hpp"
#include "impactlab/config.hpp"
#include "impactlab/errors.hpp"

using namespace impactlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("impactlab_test_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Lines of a curve CSV whose source column starts with the prefix.
std::string rows_with_source(const std::string& csv, const std::string& prefix) {
    std::istringstream is(csv);
    std::string line;
    std::string out;
    while (std::getline(is, line)) {
        const auto comma = line.rfind(',');
        if (comma != std::string::npos && line.compare(comma + 1, prefix.size(), prefix) == 0) out += line + '\n';
    }
    return out;
}

ConfigError config_error(std::string_view text, const std::vector<Override>& overrides = {}) {
    try {
        parse_config(text, overrides);
    } catch (const ConfigError& e) {
        return e;
    }
    FAIL("expected a ConfigError");
    return ConfigError(ConfigError::Kind::syntax, "", 0, "");
}

int run_exe(const std::string& args) {
    const std::string cmd = std::string(IMPACTLAB_EXE) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("well-formed config") {
    const auto rc = parse_config("nu=0.1\ntheta=1\nt_max=1000\nn_paths=100000\nprior=flat\nseed=42");
    CHECK(rc.experiment.market.nu == 0.1);
    CHECK(rc.experiment.market.theta == 1.0);
    CHECK(rc.experiment.t_max == 1000);
    CHECK(rc.experiment.n_paths == 100000);
    CHECK(rc.experiment.market.prior == PriorSpec::flat());
    CHECK(rc.experiment.master_seed == 42);
    const auto defaults = parse_config("");
    CHECK(defaults.experiment == ExperimentConfig{});
    CHECK(defaults.driver == DriverOptions{});
    CHECK(parse_config("# comment\n\n  nu = 0.2  # trailing\n").experiment.market.nu == 0.2);
}

TEST_CASE("config errors name the key and line") {
    const auto e = config_error("theta=1\nnu=1.5\n");
    CHECK(e.kind() == ConfigError::Kind::constraint_violation);
    CHECK(e.key() == "nu");
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("nu must lie in (0,1)") != std::string::npos);

    const auto u = config_error("nuu=0.1");
    CHECK(u.kind() == ConfigError::Kind::unknown_key);
    CHECK(u.key() == "nuu");
    CHECK(u.line() == 1);

    const auto t = config_error("t_max=lots");
    CHECK(t.kind() == ConfigError::Kind::type_mismatch);
    CHECK(t.key() == "t_max");

    const auto s = config_error("\n\nnu 0.1");
    CHECK(s.kind() == ConfigError::Kind::syntax);
    CHECK(s.line() == 3);

    const auto o = config_error("nu=0.1", {{"theta", "-2"}});
    CHECK(o.key() == "theta");
    CHECK(o.line() == 0);

    // Cross-field failures are blamed on a key.
    const auto x = config_error("pricing=cutoff_asym");
    CHECK(x.kind() == ConfigError::Kind::constraint_violation);
    CHECK(x.key() == "pricing");
    CHECK_THROWS_AS(parse_override("nu"), ConfigError);
    CHECK(parse_override("grid=1:10:lin") == Override{"grid", "1:10:lin"});
}

TEST_CASE("serialize and parse round-trip") {
    const auto cut = parse_config("prior=cutoff\nnu_bar=0.2");
    CHECK(cut.experiment.market.prior == PriorSpec::cutoff(0.2));
    CHECK(parse_config(serialize_config(cut)) == cut);

    RunConfig rc;
    rc.experiment.market.nu = 0.035;
    rc.experiment.market.horizon = 400;
    rc.experiment.market.after_mode = AfterMode::reverse;
    rc.experiment.market.direction = -1;
    rc.experiment.market.flow = CorrelatedPower{1.3, 0.45};
    rc.experiment.market.chi = 0.0123456789;
    rc.experiment.pricing_rule = PricingRule::correlated;
    rc.experiment.record_grid = "1,5,9";
    rc.experiment.master_seed = 18446744073709551615ULL;
    rc.experiment.control_variate = true;
    rc.experiment.estimator = EstimatorMethod::mle;
    rc.driver.curve = "correlated";
    rc.driver.tol_rel = 0.07;
    CHECK(parse_config(serialize_config(rc)) == rc);

    rc = RunConfig{};
    rc.experiment.market.flow = LevyVolume{1.7, 0.3};
    rc.experiment.market.prior = PriorSpec::power_law(0.4);
    rc.experiment.market.include_fundamental = true;
    rc.experiment.market.alpha_cal = 0.1 + 0.2;
    CHECK(parse_config(serialize_config(rc)) == rc);

    // Every documented key is accepted with its documented default.
    std::string all;
    for (const auto& k : config_keys()) all += std::string(k.name) + "=" + std::string(k.default_value) + "\n";
    CHECK(parse_config(all) == RunConfig{});
}

TEST_CASE("theory consumes no randomness and the seed only moves Monte Carlo") {
    const auto a = scratch("theory_a");
    const auto b = scratch("theory_b");
    std::ostringstream log;
    RunManifest m{Command::theory, "", a.string(), {{"curve", "sril"}, {"grid", "1:1000:log"}, {"t_max", "1000"}}};
    CHECK(dispatch(m, log).exit_code == 0);
    m.output_path = b.string();
    m.overrides.emplace_back("seed", "777");
    dispatch(m, log);
    CHECK(!slurp(a / "theory.csv").empty());
    CHECK(slurp(a / "theory.csv") == slurp(b / "theory.csv"));

    const auto c = scratch("impact_c");
    const auto d = scratch("impact_d");
    std::vector<Override> base{{"n_paths", "2000"}, {"t_max", "100"}, {"pricing", "flat_asym"}, {"tol_sigma", "100"}};
    RunManifest mc{Command::impact, "", c.string(), base};
    dispatch(mc, log);
    mc.output_path = d.string();
    mc.overrides.emplace_back("seed", "9");
    dispatch(mc, log);
    const auto csv_c = slurp(c / "impact.csv");
    const auto csv_d = slurp(d / "impact.csv");
    CHECK(rows_with_source(csv_c, "theory") == rows_with_source(csv_d, "theory"));
    CHECK(!rows_with_source(csv_c, "theory").empty());
    CHECK(rows_with_source(csv_c, "mc") != rows_with_source(csv_d, "mc"));
    CHECK(slurp(d / "config.txt").find("seed=9") != std::string::npos);
}

TEST_CASE("dispatch writes the resolved config and a summary") {
    const auto out = scratch("validate");
    std::ostringstream log;
    const auto res = dispatch({Command::validate, "", out.string(), {{"t_max", "8"}}}, log);
    CHECK(res.exit_code == 0);
    CHECK(res.checks.size() == 2);
    for (const auto& c : res.checks) CHECK(c.passed);
    CHECK(fs::exists(out / "validate.csv"));
    const auto summary = slurp(out / "summary.txt");
    CHECK(summary.find("PASS oracle_e_g_max_abs_diff") != std::string::npos);
    CHECK(summary.find("status=PASS") != std::string::npos);
    CHECK(parse_config(slurp(out / "config.txt")).experiment.t_max == 8);

    // An unreachable tolerance makes the run fail with exit status 1.
    const auto strict = scratch("strict");
    const auto bad = dispatch({Command::impact, "", strict.string(),
                               {{"n_paths", "500"}, {"t_max", "50"}, {"tol_sigma", "1e-9"}, {"pricing", "flat_asym"}}},
                              log);
    CHECK(bad.exit_code == 1);
    CHECK(slurp(strict / "summary.txt").find("status=FAIL") != std::string::npos);

    const auto sim = scratch("simulate");
    dispatch({Command::simulate, "", sim.string(), {{"t_max", "30"}}}, log);
    CHECK(slurp(sim / "path.csv").rfind("t,x_or_v,cum_imbalance,F\n", 0) == 0);
}

TEST_CASE("config files are read from disk") {
    const auto dir = scratch("file");
    fs::create_directories(dir);
    std::ofstream(dir / "run.cfg") << "# crossover set-up\nprior=cutoff\nnu_bar=0.1\nnu=0.01\n";
    std::ostringstream log;
    const auto res = dispatch({Command::theory, (dir / "run.cfg").string(), (dir / "out").string(), {{"curve", "crossover"}}}, log);
    CHECK(res.exit_code == 0);
    CHECK(parse_config(slurp(dir / "out" / "config.txt")).experiment.market.prior == PriorSpec::cutoff(0.1));
    CHECK_THROWS(dispatch({Command::theory, (dir / "missing.cfg").string(), (dir / "out").string(), {}}, log));
}

TEST_CASE("executable exit codes") {
    const auto out = scratch("exe");
    CHECK(run_exe("theory --out " + out.string() + " --curve sril --grid 1:100:log") == 0);
    CHECK(fs::exists(out / "theory.csv"));
    CHECK(run_exe("validate --out " + out.string() + " --set t_max=6") == 0);
    CHECK(run_exe("impact --out " + out.string() + " --set n_paths=300 --set t_max=40 --set tol_sigma=1e-9") == 1);
    CHECK(run_exe("impact --out " + out.string() + " --set nu=1.5") == 2);
    CHECK(run_exe("nonsense --out " + out.string()) == 2);
    CHECK(run_exe("theory --bogus-flag") == 2);
    CHECK(run_exe("--help") == 0);
    const std::string env = "IMPACTLAB_OUT=" + (out / "env").string() + " ";
    CHECK(std::system((env + IMPACTLAB_EXE + " theory --curve sril >/dev/null 2>&1").c_str()) == 0);
    CHECK(fs::exists(out / "env" / "theory.csv"));
}

#pragma once

// Command dispatch shared by the impactlab executable and the tests.

#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "impactlab/config.hpp"

namespace impactlab {

enum class Command { simulate, impact, decay, reverse, crossover, estimate, kyle, variance, spread, theory, validate };

std::string_view to_string(Command c) noexcept;
std::optional<Command> parse_command(std::string_view s) noexcept;

struct RunManifest {
    Command command = Command::impact;
    std::string config_path;  // empty: defaults only
    std::string output_path;  // directory, created if missing
    std::vector<Override> overrides;
};

struct ToleranceCheck {
    std::string name;
    double value = 0.0;
    double target = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct DispatchResult {
    int exit_code = 0;  // 0 iff every check passed
    std::vector<ToleranceCheck> checks;
    std::vector<std::string> artifacts;
};

/// Runs one command and writes <command>.csv (or path.csv / bins.csv),
/// summary.txt and config.txt (the resolved config) into output_path.
/// Errors propagate as exceptions; the executable turns them into exit 2.
DispatchResult dispatch(const RunManifest& manifest, std::ostream& log);

}  // namespace impactlab

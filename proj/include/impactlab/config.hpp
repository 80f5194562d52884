#pragma once

// Flat key=value run configuration: one entry per line, '#' starts a
// comment, omitted keys take the defaults listed by config_keys().

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "impactlab/harness.hpp"

namespace impactlab {

/// Settings consumed by the command-line driver rather than the harness.
/// Zero tolerances and windows select the command's own defaults.
struct DriverOptions {
    std::string curve;        // theory curve name; empty picks one from the market
    double fit_lo = 0.0;
    double fit_hi = 0.0;
    double tol_sigma = 3.0;   // pointwise |mc - theory| <= tol_sigma * stderr
    double tol_exponent = 0.0;
    double tol_rel = 0.0;
    double tol_abs = 0.0;

    bool operator==(const DriverOptions&) const = default;
};

struct RunConfig {
    ExperimentConfig experiment;
    DriverOptions driver;

    bool operator==(const RunConfig&) const = default;
};

struct ConfigKey {
    std::string_view name;
    std::string_view default_value;
    std::string_view help;
};

/// Every accepted key, with its default and a one-line description.
const std::vector<ConfigKey>& config_keys();

using Override = std::pair<std::string, std::string>;

/// Parses the text, then applies overrides (reported as line 0). Throws
/// ConfigError naming the key and line.
RunConfig parse_config(std::string_view text, const std::vector<Override>& overrides = {});

/// Canonical text form; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

/// Splits "key=value"; throws ConfigError on a missing '='.
Override parse_override(std::string_view text);

}  // namespace impactlab

#include "impactlab/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "impactlab/errors.hpp"

namespace impactlab {

namespace {

using Kind = ConfigError::Kind;

// Every key as a plain value, so parsing does not depend on key order.
struct Flat {
    double nu = 0.1;
    double chi = 0.1;
    double theta = 1.0;
    double alpha_cal = 1.0;
    std::int64_t direction = 1;
    std::int64_t horizon = 0;
    std::string after = "stop";
    std::string flow = "unit";
    double sigma_v = 1.0;
    double alpha_stable = 1.5;
    double tau_c = 1.0;
    double eta = 0.5;
    std::string prior = "flat";
    double nu_bar = 1.0;
    double k = 1.0;
    double p_up = 0.5;
    bool random_direction = false;
    bool include_fundamental = false;
    std::int64_t n_paths = 10000;
    std::int64_t t_max = 1000;
    std::string grid = "auto";
    std::uint64_t seed = 42;
    std::string pricing = "auto";
    bool control_variate = false;
    std::int64_t workers = 0;
    std::string estimator = "bayes_flat";
    std::int64_t n_bins = 40;
    DriverOptions driver;
};

struct Ctx {
    std::string_view key;
    int line;

    [[noreturn]] void fail(Kind kind, const std::string& msg) const { throw ConfigError(kind, std::string(key), line, msg); }
    void require(bool ok, const std::string& msg) const {
        if (!ok) fail(Kind::constraint_violation, msg);
    }
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double to_double(const Ctx& c, std::string_view v) {
    double x = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(x))
        c.fail(Kind::type_mismatch, "expected a finite number, got '" + std::string(v) + "'");
    return x;
}

template <class Int>
Int to_int(const Ctx& c, std::string_view v) {
    Int x = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size())
        c.fail(Kind::type_mismatch, "expected an integer, got '" + std::string(v) + "'");
    return x;
}

bool to_bool(const Ctx& c, std::string_view v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    c.fail(Kind::type_mismatch, "expected true or false, got '" + std::string(v) + "'");
}

std::string one_of(const Ctx& c, std::string_view v, std::initializer_list<std::string_view> allowed) {
    std::string list;
    for (auto a : allowed) {
        if (v == a) return std::string(v);
        list += list.empty() ? "" : "|";
        list += a;
    }
    c.fail(Kind::type_mismatch, "expected one of " + list + ", got '" + std::string(v) + "'");
}

std::string fmt(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct KeySpec {
    std::string_view name;
    std::string_view help;
    std::function<void(Flat&, const Ctx&, std::string_view)> set;
    std::function<std::string(const Flat&)> get;
};

#define IL_DOUBLE(field, help, check, msg)                                           \
    KeySpec {                                                                        \
        #field, help,                                                                \
            [](Flat& f, const Ctx& c, std::string_view v) {                          \
                const double x = to_double(c, v);                                    \
                c.require(check, msg);                                               \
                f.field = x;                                                         \
            },                                                                       \
            [](const Flat& f) { return fmt(f.field); }                               \
    }

#define IL_DRIVER_DOUBLE(field, help)                                                \
    KeySpec {                                                                        \
        #field, help,                                                                \
            [](Flat& f, const Ctx& c, std::string_view v) {                          \
                const double x = to_double(c, v);                                    \
                c.require(x >= 0.0, #field " must be non-negative");                 \
                f.driver.field = x;                                                  \
            },                                                                       \
            [](const Flat& f) { return fmt(f.driver.field); }                        \
    }

#define IL_INT(field, type, help, check, msg)                                        \
    KeySpec {                                                                        \
        #field, help,                                                                \
            [](Flat& f, const Ctx& c, std::string_view v) {                          \
                const auto x = to_int<type>(c, v);                                   \
                c.require(check, msg);                                               \
                f.field = x;                                                         \
            },                                                                       \
            [](const Flat& f) { return std::to_string(f.field); }                    \
    }

#define IL_BOOL(field, help)                                                         \
    KeySpec {                                                                        \
        #field, help, [](Flat& f, const Ctx& c, std::string_view v) { f.field = to_bool(c, v); }, \
            [](const Flat& f) { return fmt_bool(f.field); }                          \
    }

#define IL_CHOICE(field, help, ...)                                                  \
    KeySpec {                                                                        \
        #field, help,                                                                \
            [](Flat& f, const Ctx& c, std::string_view v) { f.field = one_of(c, v, {__VA_ARGS__}); }, \
            [](const Flat& f) { return f.field; }                                    \
    }

const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs = {
        IL_DOUBLE(nu, "participation rate of a unit-flow meta-order", x >= 0.0 && x < 1.0,
                  "nu must lie in (0,1) or be 0"),
        IL_DOUBLE(chi, "trade speed of a volume-flow meta-order", x > 0.0, "chi must be positive"),
        IL_DOUBLE(theta, "size of the private information (price units)", x > 0.0, "theta must be positive"),
        IL_DOUBLE(alpha_cal, "fundamental volatility calibration", x >= 0.0, "alpha_cal must be non-negative"),
        IL_INT(direction, std::int64_t, "meta-order sign G (+1 or -1); figure captions call it Y", x == 1 || x == -1,
               "direction must be +1 or -1"),
        IL_INT(horizon, std::int64_t, "meta-order duration T; 0 lasts to t_max", x >= 0, "horizon must be non-negative"),
        IL_CHOICE(after, "what the informed trader does after T", "stop", "reverse"),
        IL_CHOICE(flow, "order-flow model", "unit", "gaussian", "levy", "corr_exp", "corr_power"),
        IL_DOUBLE(sigma_v, "per-step noise scale of volume flows", x > 0.0, "sigma_v must be positive"),
        IL_DOUBLE(alpha_stable, "stable index of Levy volume noise", x > 0.0 && x <= 2.0,
                  "alpha_stable must lie in (0,2]"),
        IL_DOUBLE(tau_c, "correlation time of the exponential covariance", x > 0.0, "tau_c must be positive"),
        IL_DOUBLE(eta, "decay exponent of the power-law covariance", x > 0.0 && x <= 1.0, "eta must lie in (0,1]"),
        IL_CHOICE(prior, "market maker's prior on |v|", "flat", "cutoff", "power_law"),
        IL_DOUBLE(nu_bar, "upper end of the cutoff prior", x > 0.0 && x <= 1.0, "nu_bar must lie in (0,1]"),
        IL_DOUBLE(k, "power-law prior exponent (density ~ v^(k-1))", x > 0.0, "k must be positive"),
        IL_DOUBLE(p_up, "prior probability of G = +1 (Gaussian volume flows)", x > 0.0 && x < 1.0,
                  "p_up must lie in (0,1)"),
        IL_BOOL(random_direction, "draw G per path with P(+1) = p_up"),
        IL_BOOL(include_fundamental, "add the fundamental random walk F_t to the price"),
        IL_INT(n_paths, std::int64_t, "ensemble size", x >= 1, "n_paths must be at least 1"),
        IL_INT(t_max, std::int64_t, "number of trades per path", x >= 1, "t_max must be at least 1"),
        KeySpec{"grid", "record times: auto, lo:hi:log[:per_decade], lo:hi:lin[:step] or a comma list",
                [](Flat& f, const Ctx&, std::string_view v) { f.grid = std::string(v); },
                [](const Flat& f) { return f.grid; }},
        IL_INT(seed, std::uint64_t, "master seed", true, ""),
        IL_CHOICE(pricing, "pricing rule", "auto", "exact", "flat_asym", "cutoff_asym", "powerlaw_asym", "known_nu",
                  "volume", "levy", "correlated"),
        IL_BOOL(control_variate, "subtract the same-noise price without the meta-order"),
        IL_INT(workers, std::int64_t, "worker threads; 0 uses every core", x >= 0 && x <= 4096,
               "workers must lie in [0, 4096]"),
        IL_CHOICE(estimator, "nu estimator for the estimate command", "bayes_flat", "bayes_cutoff",
                  "bayes_power_law", "bayes_exact", "mle"),
        IL_INT(n_bins, std::int64_t, "Delta V bins for the kyle command", x >= 2 && x <= 100000,
               "n_bins must lie in [2, 100000]"),
        KeySpec{"curve", "theory curve name; empty picks one from the market",
                [](Flat& f, const Ctx&, std::string_view v) { f.driver.curve = std::string(v); },
                [](const Flat& f) { return f.driver.curve; }},
        IL_DRIVER_DOUBLE(fit_lo, "lower end of the slope-fit window; 0 picks the command default"),
        IL_DRIVER_DOUBLE(fit_hi, "upper end of the slope-fit window; 0 picks the command default"),
        IL_DRIVER_DOUBLE(tol_sigma, "pointwise tolerance in standard errors"),
        IL_DRIVER_DOUBLE(tol_exponent, "exponent tolerance; 0 picks the command default"),
        IL_DRIVER_DOUBLE(tol_rel, "relative tolerance; 0 picks the command default"),
        IL_DRIVER_DOUBLE(tol_abs, "absolute tolerance; 0 picks the command default"),
    };
    return specs;
}

#undef IL_DOUBLE
#undef IL_DRIVER_DOUBLE
#undef IL_INT
#undef IL_BOOL
#undef IL_CHOICE

const KeySpec* find_key(std::string_view name) {
    for (const auto& s : key_specs()) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

Flat flatten(const RunConfig& rc) {
    const auto& e = rc.experiment;
    const auto& m = e.market;
    Flat f;
    f.nu = m.nu;
    f.chi = m.chi;
    f.theta = m.theta;
    f.alpha_cal = m.alpha_cal;
    f.direction = m.direction;
    f.horizon = m.horizon;
    f.after = m.after_mode == AfterMode::stop ? "stop" : "reverse";
    std::visit(
        [&](const auto& fl) {
            using T = std::decay_t<decltype(fl)>;
            if constexpr (std::is_same_v<T, UnitBinary>) {
                f.flow = "unit";
            } else if constexpr (std::is_same_v<T, GaussianVolume>) {
                f.flow = "gaussian";
                f.sigma_v = fl.sigma_v;
            } else if constexpr (std::is_same_v<T, LevyVolume>) {
                f.flow = "levy";
                f.sigma_v = fl.sigma_v;
                f.alpha_stable = fl.alpha_stable;
            } else if constexpr (std::is_same_v<T, CorrelatedExp>) {
                f.flow = "corr_exp";
                f.sigma_v = fl.sigma_v;
                f.tau_c = fl.tau_c;
            } else {
                f.flow = "corr_power";
                f.sigma_v = fl.sigma_v;
                f.eta = fl.eta;
            }
        },
        m.flow);
    switch (m.prior.kind) {
        case PriorSpec::Kind::flat: f.prior = "flat"; break;
        case PriorSpec::Kind::cutoff: f.prior = "cutoff"; break;
        case PriorSpec::Kind::power_law: f.prior = "power_law"; break;
    }
    f.nu_bar = m.prior.nu_bar;
    f.k = m.prior.k;
    f.p_up = m.p_up;
    f.random_direction = m.random_direction;
    f.include_fundamental = m.include_fundamental;
    f.n_paths = e.n_paths;
    f.t_max = e.t_max;
    f.grid = e.record_grid;
    f.seed = e.master_seed;
    f.pricing = std::string(to_string(e.pricing_rule));
    f.control_variate = e.control_variate;
    f.workers = e.workers;
    f.estimator = std::string(to_string(e.estimator));
    f.n_bins = e.n_bins;
    f.driver = rc.driver;
    return f;
}

EstimatorMethod parse_estimator(std::string_view s) {
    for (auto m : {EstimatorMethod::bayes_flat, EstimatorMethod::bayes_cutoff, EstimatorMethod::bayes_power_law,
                   EstimatorMethod::bayes_exact, EstimatorMethod::mle}) {
        if (to_string(m) == s) return m;
    }
    throw DomainError("unknown estimator '" + std::string(s) + "'");
}

RunConfig build(const Flat& f) {
    RunConfig rc;
    auto& e = rc.experiment;
    auto& m = e.market;
    m.nu = f.nu;
    m.chi = f.chi;
    m.theta = f.theta;
    m.alpha_cal = f.alpha_cal;
    m.direction = static_cast<int>(f.direction);
    m.horizon = f.horizon;
    m.after_mode = f.after == "stop" ? AfterMode::stop : AfterMode::reverse;
    if (f.flow == "unit") m.flow = UnitBinary{};
    else if (f.flow == "gaussian") m.flow = GaussianVolume{f.sigma_v};
    else if (f.flow == "levy") m.flow = LevyVolume{f.alpha_stable, f.sigma_v};
    else if (f.flow == "corr_exp") m.flow = CorrelatedExp{f.sigma_v, f.tau_c};
    else m.flow = CorrelatedPower{f.sigma_v, f.eta};
    const auto kind = f.prior == "flat"     ? PriorSpec::Kind::flat
                      : f.prior == "cutoff" ? PriorSpec::Kind::cutoff
                                            : PriorSpec::Kind::power_law;
    m.prior = PriorSpec{kind, f.nu_bar, f.k};
    m.p_up = f.p_up;
    m.random_direction = f.random_direction;
    m.include_fundamental = f.include_fundamental;
    e.n_paths = f.n_paths;
    e.t_max = f.t_max;
    e.record_grid = f.grid;
    e.master_seed = f.seed;
    e.pricing_rule = parse_pricing_rule(f.pricing);
    e.control_variate = f.control_variate;
    e.workers = static_cast<int>(f.workers);
    e.estimator = parse_estimator(f.estimator);
    e.n_bins = static_cast<int>(f.n_bins);
    rc.driver = f.driver;
    return rc;
}

// Cross-field checks report the key their message starts with.
std::string blame_key(const std::string& msg) {
    if (msg.rfind("pricing rule", 0) == 0) return "pricing";
    if (msg.rfind("record grid", 0) == 0) return "grid";
    if (msg.rfind("participation", 0) == 0) return "nu";
    const auto sp = msg.find(' ');
    const std::string first = msg.substr(0, sp);
    return find_key(first) != nullptr ? first : std::string();
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        static std::vector<std::string> defaults;
        const Flat f;
        for (const auto& s : key_specs()) defaults.push_back(s.get(f));
        std::vector<ConfigKey> out;
        for (std::size_t i = 0; i < key_specs().size(); ++i)
            out.push_back({key_specs()[i].name, defaults[i], key_specs()[i].help});
        return out;
    }();
    return keys;
}

Override parse_override(std::string_view text) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos)
        throw ConfigError(Kind::syntax, trim(text), 0, "expected key=value, got '" + std::string(text) + "'");
    return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

RunConfig parse_config(std::string_view text, const std::vector<Override>& overrides) {
    Flat f;
    std::map<std::string, int> lines;
    auto apply = [&](const std::string& key, const std::string& value, int line) {
        const auto* spec = find_key(key);
        if (spec == nullptr) throw ConfigError(Kind::unknown_key, key, line, "unknown key");
        spec->set(f, Ctx{spec->name, line}, value);
        lines[key] = line;
    };

    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(std::string_view(raw).substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(Kind::syntax, "", line_no, "expected key=value, got '" + line + "'");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        if (key.empty()) throw ConfigError(Kind::syntax, "", line_no, "empty key");
        apply(key, trim(std::string_view(line).substr(eq + 1)), line_no);
    }
    for (const auto& [key, value] : overrides) apply(key, value, 0);

    RunConfig rc = build(f);
    try {
        rc.experiment.validate();
    } catch (const DomainError& e) {
        const std::string key = blame_key(e.what());
        const auto it = lines.find(key);
        throw ConfigError(Kind::constraint_violation, key, it == lines.end() ? 0 : it->second, e.what());
    }
    return rc;
}

std::string serialize_config(const RunConfig& config) {
    const Flat f = flatten(config);
    std::string out;
    for (const auto& s : key_specs()) {
        out += s.name;
        out += '=';
        out += s.get(f);
        out += '\n';
    }
    return out;
}

}  // namespace impactlab

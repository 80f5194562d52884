#include "impactlab/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "impactlab/errors.hpp"
#include "impactlab/estimators.hpp"
#include "impactlab/harness.hpp"
#include "impactlab/theory.hpp"

namespace impactlab {

namespace {

namespace fs = std::filesystem;

constexpr Command kAllCommands[] = {Command::simulate, Command::impact,   Command::decay,  Command::reverse,
                                    Command::crossover, Command::estimate, Command::kyle,   Command::variance,
                                    Command::spread,   Command::theory,   Command::validate};

double or_default(double v, double fallback) { return v > 0.0 ? v : fallback; }

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(ConfigError::Kind::syntax, "", 0, "cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Window {
    double lo;
    double hi;
    bool contains(double t) const { return t >= lo && t <= hi; }
};

Window window_or(const DriverOptions& d, Window fallback) {
    return {d.fit_lo > 0.0 ? d.fit_lo : fallback.lo, d.fit_hi > 0.0 ? d.fit_hi : fallback.hi};
}

std::vector<double> as_double(const std::vector<std::int64_t>& grid) { return {grid.begin(), grid.end()}; }

// Theory curve matching the market of an impact run.
std::string auto_curve(const ExperimentConfig& e) {
    const auto& m = e.market;
    if (std::holds_alternative<LevyVolume>(m.flow)) return "levy";
    if (is_correlated_flow(m.flow)) return "correlated";
    if (m.horizon > 0 && m.horizon < e.t_max) return m.after_mode == AfterMode::stop ? "decay" : "reverse";
    if (e.pricing_rule == PricingRule::known_nu) return "known_nu";
    if (m.prior.kind == PriorSpec::Kind::cutoff) return "crossover";
    if (m.prior.kind == PriorSpec::Kind::power_law) return "powerlaw";
    return "sril";
}

class Report {
  public:
    explicit Report(std::ostream& log) : log_(log) {}

    void check(std::string name, double value, double target, double tol, bool passed) {
        checks_.push_back({std::move(name), value, target, tol, passed});
        const auto& c = checks_.back();
        line(std::string(c.passed ? "PASS " : "FAIL ") + c.name + " value=" + num(value) + " target=" + num(target) +
             " tol=" + num(tol));
    }

    void line(const std::string& s) {
        lines_ += s + '\n';
        log_ << s << '\n';
    }

    static std::string num(double x) {
        std::ostringstream os;
        os.precision(10);
        os << x;
        return os.str();
    }

    const std::vector<ToleranceCheck>& checks() const { return checks_; }
    const std::string& text() const { return lines_; }

  private:
    std::ostream& log_;
    std::vector<ToleranceCheck> checks_;
    std::string lines_;
};

// max |mc - theory| / stderr over the window.
void pointwise_check(Report& r, const ImpactCurve& mc, const TheoryCurve& th, Window w, double tol_sigma) {
    double worst = 0.0;
    int used = 0;
    for (std::size_t j = 0; j < mc.grid.size(); ++j) {
        if (!w.contains(static_cast<double>(mc.grid[j]))) continue;
        const double se = mc.std_err[j];
        const double diff = std::abs(mc.mean_dp[j] - th.values[j]);
        const double z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : INFINITY);
        worst = std::max(worst, z);
        ++used;
    }
    if (used == 0) {
        r.line("note: no grid points in [" + Report::num(w.lo) + ", " + Report::num(w.hi) + "] for the pointwise check");
        return;
    }
    r.check("pointwise_max_z", worst, 0.0, tol_sigma, worst <= tol_sigma);
}

// Exponent of the mc curve against the exponent of the theory curve over the same window.
void exponent_check(Report& r, const ImpactCurve& mc, const TheoryCurve& th, Window w, double tol) {
    const auto t = as_double(mc.grid);
    try {
        const auto f_mc = loglog_slope_fit(t, mc.mean_dp, w.lo, w.hi);
        const auto f_th = loglog_slope_fit(th.grid, th.values, w.lo, w.hi);
        r.line("fit mc exponent=" + Report::num(f_mc.exponent) + " prefactor=" + Report::num(f_mc.prefactor) +
               " r2=" + Report::num(f_mc.r_squared) + " window=[" + Report::num(w.lo) + "," + Report::num(w.hi) +
               "] points=" + std::to_string(f_mc.n_points));
        r.line("fit theory exponent=" + Report::num(f_th.exponent) + " prefactor=" + Report::num(f_th.prefactor));
        r.check("exponent", f_mc.exponent, f_th.exponent, tol, std::abs(f_mc.exponent - f_th.exponent) <= tol);
    } catch (const DomainError& e) {
        r.line(std::string("note: slope fit skipped: ") + e.what());
    }
}

void write_pair(const fs::path& file, const ImpactCurve& mc, const TheoryCurve* th) {
    std::ofstream os(file);
    write_curve_csv_header(os);
    append_curve_csv(os, mc);
    if (th != nullptr) append_curve_csv(os, *th);
}

Window default_impact_window(const ExperimentConfig& e, std::string_view curve) {
    const auto& m = e.market;
    const auto t_max = static_cast<double>(e.t_max);
    double hi = m.horizon > 0 ? std::min<double>(t_max, static_cast<double>(m.horizon)) : t_max;
    // The linear regime ends near 0.3 / nu_bar^2; the window is widened to 8
    // integer times when that is shorter, since a fit needs 8 points.
    if (curve == "crossover") return {1.0, std::min(hi, std::max(8.0, 0.3 / (m.prior.nu_bar * m.prior.nu_bar)))};
    if (is_unit_flow(m.flow) && m.nu > 0.0) {
        const double scale = 1.0 / (m.nu * m.nu);
        return {std::max(1.0, 0.1 * scale), std::min(hi, scale)};
    }
    return {1.0, hi};
}

TheoryCurve theory_for(const RunConfig& rc, std::string_view name, const std::vector<std::int64_t>& grid) {
    auto p = theory_params(rc.experiment);
    if (std::holds_alternative<GaussianVolume>(rc.experiment.market.flow)) {
        // Gaussian volume flow behaves as a unit flow with nu = chi / sigma_v.
        p.nu = rc.experiment.market.chi / p.sigma_v;
    }
    const auto g = as_double(grid);
    return make_theory_curve(name, p, g);
}

void run_impact_like(const RunConfig& rc, Command cmd, const fs::path& out, Report& r, DispatchResult& res) {
    RunConfig cfg = rc;
    auto& e = cfg.experiment;
    const auto& d = cfg.driver;
    if (cmd == Command::decay || cmd == Command::reverse) {
        e.market.after_mode = cmd == Command::decay ? AfterMode::stop : AfterMode::reverse;
        if (!(e.market.horizon > 0 && e.market.horizon < e.t_max))
            throw DomainError("horizon must lie in (0, t_max) for " + std::string(to_string(cmd)));
        if (!is_unit_flow(e.market.flow)) throw DomainError(std::string(to_string(cmd)) + " needs a unit flow");
    }
    if (cmd == Command::crossover && e.market.prior.kind != PriorSpec::Kind::cutoff)
        throw DomainError("prior must be cutoff for crossover");

    std::string name = d.curve;
    if (name.empty()) {
        name = cmd == Command::decay     ? "decay"
               : cmd == Command::reverse ? "reverse"
               : cmd == Command::crossover ? "crossover"
                                           : auto_curve(e);
    }
    const auto mc = run_impact_experiment(e);
    const auto th = theory_for(cfg, name, mc.grid);
    const fs::path csv = out / (std::string(to_string(cmd)) + ".csv");
    write_pair(csv, mc, &th);
    res.artifacts.push_back(csv.string());
    r.line("theory curve=" + name);

    const double horizon = static_cast<double>(e.market.schedule(e.t_max).horizon);
    const double t_max = static_cast<double>(e.t_max);
    switch (cmd) {
        case Command::impact: {
            const Window w = window_or(d, default_impact_window(e, name));
            pointwise_check(r, mc, th, w, d.tol_sigma);
            exponent_check(r, mc, th, w, or_default(d.tol_exponent, 0.05));
            break;
        }
        case Command::decay: {
            pointwise_check(r, mc, th, window_or(d, {horizon + 1.0, t_max}), d.tol_sigma);
            break;
        }
        case Command::reverse: {
            pointwise_check(r, mc, th, window_or(d, {1.0, t_max}), d.tol_sigma);
            // The theory changes sign at t = 2 Q / nu = 2 T.
            double cross = 0.0;
            for (std::size_t j = 1; j < mc.grid.size(); ++j) {
                if (mc.grid[j] > horizon && mc.mean_dp[j - 1] > 0.0 && mc.mean_dp[j] <= 0.0) {
                    const double t0 = static_cast<double>(mc.grid[j - 1]);
                    const double t1 = static_cast<double>(mc.grid[j]);
                    cross = t0 + (t1 - t0) * mc.mean_dp[j - 1] / (mc.mean_dp[j - 1] - mc.mean_dp[j]);
                    break;
                }
            }
            const double tol = or_default(d.tol_rel, 0.05);
            r.check("sign_change_over_2T", cross / (2.0 * horizon), 1.0, tol, std::abs(cross / (2.0 * horizon) - 1.0) <= tol);
            break;
        }
        case Command::crossover: {
            const Window w = window_or(d, default_impact_window(e, name));
            exponent_check(r, mc, th, w, or_default(d.tol_exponent, 0.1));
            // Least-squares slope through the origin against theta nu_bar nu / 2.
            double sxy = 0.0;
            double sxx = 0.0;
            for (std::size_t j = 0; j < mc.grid.size(); ++j) {
                const auto t = static_cast<double>(mc.grid[j]);
                if (!w.contains(t)) continue;
                sxy += t * mc.mean_dp[j];
                sxx += t * t;
            }
            const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
            const double target = 0.5 * e.market.theta * e.market.prior.nu_bar * e.market.nu;
            const double tol = or_default(d.tol_rel, 0.1);
            r.check("linear_slope_rel_error", slope / target - 1.0, 0.0, tol, std::abs(slope / target - 1.0) <= tol);
            break;
        }
        default: break;
    }
}

void run_estimate(const RunConfig& rc, const fs::path& out, Report& r, DispatchResult& res) {
    const auto& e = rc.experiment;
    const auto& d = rc.driver;
    const auto method = e.estimator;
    const auto mc = run_estimator_experiment(e, method);
    // The closed-form mean is derived for the Gaussian-limit flat estimator only.
    const bool flat_theory = method == EstimatorMethod::bayes_flat;
    std::optional<TheoryCurve> th;
    if (flat_theory) th = theory_for(rc, d.curve.empty() ? "estimator" : d.curve, mc.grid);
    const fs::path csv = out / "estimate.csv";
    write_pair(csv, mc, th ? &*th : nullptr);
    res.artifacts.push_back(csv.string());
    r.line("estimator=" + std::string(to_string(method)));
    // The closed form is a large-t expansion; short times are excluded by default.
    if (th) pointwise_check(r, mc, *th, window_or(d, {100.0, static_cast<double>(e.t_max)}), d.tol_sigma);
    if (method == EstimatorMethod::bayes_cutoff) {
        // Small nu_bar sqrt t: the posterior is still the prior, mean nu_bar / 2.
        const double nb = e.market.prior.nu_bar;
        const double tol = or_default(d.tol_rel, 0.05);
        double worst = 0.0;
        int used = 0;
        for (std::size_t j = 0; j < mc.grid.size(); ++j) {
            if (nb * std::sqrt(static_cast<double>(mc.grid[j])) > 0.1) continue;
            worst = std::max(worst, std::abs(mc.mean_dp[j] / (0.5 * nb) - 1.0));
            ++used;
        }
        if (used > 0) r.check("cutoff_half_nu_bar_rel_error", worst, 0.0, tol, worst <= tol);
    }
}

void run_spread(const RunConfig& rc, const fs::path& out, Report& r, DispatchResult& res) {
    const auto& e = rc.experiment;
    const auto& d = rc.driver;
    const auto mc = run_spread_experiment(e);
    const auto th = theory_for(rc, "spread", mc.grid);
    const fs::path csv = out / "spread.csv";
    write_pair(csv, mc, &th);
    res.artifacts.push_back(csv.string());
    const Window w = window_or(d, {10.0, static_cast<double>(e.t_max)});
    const double tol = or_default(d.tol_rel, 0.05);
    double worst = 0.0;
    for (std::size_t j = 0; j < mc.grid.size(); ++j) {
        if (w.contains(static_cast<double>(mc.grid[j]))) worst = std::max(worst, std::abs(mc.mean_dp[j] / th.values[j] - 1.0));
    }
    r.check("spread_max_rel_error", worst, 0.0, tol, worst <= tol);
}

void run_variance(const RunConfig& rc, const fs::path& out, Report& r, DispatchResult& res) {
    const auto& e = rc.experiment;
    const auto& d = rc.driver;
    const auto mc = run_variance_experiment(e);
    const auto th = theory_for(rc, "variance", mc.grid);
    // Theory rows carry the predicted variance in their mean_dp column.
    const fs::path csv = out / "variance.csv";
    write_pair(csv, mc, &th);
    res.artifacts.push_back(csv.string());
    const Window w = window_or(d, {1.0, static_cast<double>(e.t_max)});
    const double theta2 = e.market.theta * e.market.theta;
    const double tol = or_default(d.tol_abs, 0.02) * theta2;
    double worst = 0.0;
    for (std::size_t j = 0; j < mc.grid.size(); ++j) {
        if (w.contains(static_cast<double>(mc.grid[j]))) worst = std::max(worst, std::abs(mc.var_dp[j] - th.values[j]));
    }
    r.check("variance_max_abs_error", worst, 0.0, tol, worst <= tol);
}

void run_kyle(const RunConfig& rc, const fs::path& out, Report& r, DispatchResult& res) {
    const auto& e = rc.experiment;
    const auto agg = run_aggregated_impact(e, e.n_bins);
    const fs::path csv = out / "bins.csv";
    {
        std::ofstream os(csv);
        os.precision(17);
        os << "bin_lo,bin_hi,mean_dv,mean_dp,count\n";
        for (std::size_t b = 0; b < agg.count.size(); ++b) {
            os << agg.bin_lo[b] << ',' << agg.bin_hi[b] << ',' << agg.mean_dv[b] << ',' << agg.mean_dp[b] << ','
               << agg.count[b] << '\n';
        }
    }
    res.artifacts.push_back(csv.string());
    const double target = kyle_lambda(static_cast<double>(agg.t), e.market.theta, flow_sigma_v(e.market.flow), e.market.p_up);
    const double tol = or_default(rc.driver.tol_rel, 0.1);
    r.line("lambda=" + Report::num(agg.lambda) + " stderr=" + Report::num(agg.lambda_stderr));
    r.check("kyle_lambda_rel_error", agg.lambda / target - 1.0, 0.0, tol, std::abs(agg.lambda / target - 1.0) <= tol);
}

void run_theory(const RunConfig& rc, const fs::path& out, Report& r, DispatchResult& res) {
    const auto& e = rc.experiment;
    const std::string name = rc.driver.curve.empty() ? auto_curve(e) : rc.driver.curve;
    const auto grid = parse_record_grid(e.record_grid, e.t_max);
    const auto th = theory_for(rc, name, grid);
    const fs::path csv = out / "theory.csv";
    std::ofstream os(csv);
    write_curve_csv(os, th);
    res.artifacts.push_back(csv.string());
    r.line("theory curve=" + name + " points=" + std::to_string(grid.size()));
}

void run_validate(const RunConfig& rc, const fs::path& out, Report& r, DispatchResult& res) {
    const auto& e = rc.experiment;
    const auto& prior = e.market.prior;
    const std::int64_t t_max = std::min<std::int64_t>(20, e.t_max);
    const auto cells = oracle_posterior_enumeration(t_max, prior);
    const fs::path csv = out / "validate.csv";
    std::ofstream os(csv);
    os.precision(17);
    os << "t,n,oracle_e_g,exact_e_g,oracle_nu_hat,exact_nu_hat\n";
    double worst_g = 0.0;
    double worst_nu = 0.0;
    for (const auto& c : cells) {
        const double g = posterior_g_exact({c.n, c.t}, prior);
        const double nu = nu_bayes_exact(c.n, c.t, prior).nu_hat;
        worst_g = std::max(worst_g, std::abs(g - c.e_g));
        worst_nu = std::max(worst_nu, std::abs(nu - c.nu_hat));
        os << c.t << ',' << c.n << ',' << c.e_g << ',' << g << ',' << c.nu_hat << ',' << nu << '\n';
    }
    res.artifacts.push_back(csv.string());
    const double tol = or_default(rc.driver.tol_abs, 1e-6);
    r.line("prior=" + prior.describe() + " cells=" + std::to_string(cells.size()));
    r.check("oracle_e_g_max_abs_diff", worst_g, 0.0, tol, worst_g <= tol);
    r.check("oracle_nu_hat_max_abs_diff", worst_nu, 0.0, tol, worst_nu <= tol);
}

void run_simulate(const RunConfig& rc, const fs::path& out, Report& r, DispatchResult& res) {
    const auto& e = rc.experiment;
    const auto& m = e.market;
    Philox4x32 rng(e.master_seed, 0);
    auto sched = m.schedule(e.t_max);
    if (m.random_direction) sched.direction = rng.uniform() < m.p_up ? 1 : -1;
    auto path = gen_flow(sched, m.flow, e.t_max, rng);
    if (m.include_fundamental) path.fundamental = gen_fundamental(m.fundamental(), m.nu, e.t_max, rng);
    const fs::path csv = out / "path.csv";
    std::ofstream os(csv);
    write_path_csv(os, path);
    res.artifacts.push_back(csv.string());
    r.line("simulated one path of " + std::to_string(e.t_max) + " steps, G=" + std::to_string(sched.direction));
}

}  // namespace

std::string_view to_string(Command c) noexcept {
    switch (c) {
        case Command::simulate: return "simulate";
        case Command::impact: return "impact";
        case Command::decay: return "decay";
        case Command::reverse: return "reverse";
        case Command::crossover: return "crossover";
        case Command::estimate: return "estimate";
        case Command::kyle: return "kyle";
        case Command::variance: return "variance";
        case Command::spread: return "spread";
        case Command::theory: return "theory";
        case Command::validate: return "validate";
    }
    return "?";
}

std::optional<Command> parse_command(std::string_view s) noexcept {
    for (auto c : kAllCommands) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

DispatchResult dispatch(const RunManifest& manifest, std::ostream& log) {
    const std::string text = manifest.config_path.empty() ? std::string() : read_file(manifest.config_path);
    const RunConfig rc = parse_config(text, manifest.overrides);
    if (manifest.output_path.empty()) throw DomainError("output directory is not set");
    const fs::path out(manifest.output_path);
    fs::create_directories(out);
    {
        std::ofstream os(out / "config.txt");
        if (!os) throw DomainError("output directory is not writable: " + out.string());
        os << serialize_config(rc);
    }

    DispatchResult res;
    res.artifacts.push_back((out / "config.txt").string());
    Report r(log);
    r.line("command=" + std::string(to_string(manifest.command)));
    switch (manifest.command) {
        case Command::impact:
        case Command::decay:
        case Command::reverse:
        case Command::crossover: run_impact_like(rc, manifest.command, out, r, res); break;
        case Command::estimate: run_estimate(rc, out, r, res); break;
        case Command::kyle: run_kyle(rc, out, r, res); break;
        case Command::variance: run_variance(rc, out, r, res); break;
        case Command::spread: run_spread(rc, out, r, res); break;
        case Command::theory: run_theory(rc, out, r, res); break;
        case Command::validate: run_validate(rc, out, r, res); break;
        case Command::simulate: run_simulate(rc, out, r, res); break;
    }
    res.checks = r.checks();
    const bool ok = std::all_of(res.checks.begin(), res.checks.end(), [](const auto& c) { return c.passed; });
    res.exit_code = ok ? 0 : 1;
    r.line(std::string("status=") + (ok ? "PASS" : "FAIL"));
    std::ofstream(out / "summary.txt") << r.text();
    res.artifacts.push_back((out / "summary.txt").string());
    return res;
}

}  // namespace impactlab

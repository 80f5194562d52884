#include "impactlab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "impactlab/errors.hpp"
#include "impactlab/marketmaker.hpp"
#include "impactlab/quadrature.hpp"
#include "impactlab/specfun.hpp"

namespace impactlab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSqrtPi = 1.0 / std::numbers::inv_sqrtpi;

double gaussian_density(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

}  // namespace

std::string_view to_string(Regime r) noexcept {
    switch (r) {
        case Regime::linear: return "linear";
        case Regime::sqrt: return "sqrt";
        case Regime::saturated: return "saturated";
        case Regime::decay: return "decay";
        case Regime::reversal: return "reversal";
    }
    return "?";
}

double impact_known_nu(double t, double nu, double theta) { return theta * std::tanh(nu * nu * t); }

double impact_known_nu_leading(double t, double nu, double theta) { return theta * nu * nu * t; }

double impact_known_nu_exact(std::int64_t t, double nu, double theta) {
    if (t < 0) throw DomainError("t must be non-negative");
    if (!(nu >= 0.0 && nu < 1.0)) throw DomainError("nu must lie in [0,1)");
    if (t == 0 || nu == 0.0) return 0.0;
    const double td = static_cast<double>(t);
    const double log_up = std::log1p(nu) - std::numbers::ln2;
    const double log_down = std::log1p(-nu) - std::numbers::ln2;
    double sum = 0.0;
    for (std::int64_t n = 0; n <= t; ++n) {
        const double nd = static_cast<double>(n);
        const double log_pmf = std::lgamma(td + 1.0) - std::lgamma(nd + 1.0) - std::lgamma(td - nd + 1.0) +
                               nd * log_up + (td - nd) * log_down;
        sum += std::exp(log_pmf) * posterior_g_known_nu(n, t, nu);
    }
    return theta * sum;
}

double impact_sril(double t, double nu, double theta) { return theta * std::erf(0.5 * nu * std::sqrt(t)); }

double impact_sril_leading(double t, double nu, double theta) { return theta * nu * std::sqrt(t) / kSqrtPi; }

double impact_sril_rescaled(double q, double sigma_tau, double v_tau, double alpha_cal) {
    if (!(v_tau > 0.0 && alpha_cal > 0.0)) throw DomainError("V_tau and alpha_cal must be positive");
    return sigma_tau * std::sqrt(q / v_tau) / (kSqrtPi * alpha_cal);
}

CrossoverPrediction impact_linear_crossover(double t, double nu, double nu_bar, double theta) {
    if (!(nu_bar >= nu && nu_bar > 0.0)) throw DomainError("nu_bar must be at least nu");
    const double q = nu * t;
    const double q_star = 4.0 / kPi * nu / (nu_bar * nu_bar);
    if (q < q_star) return {0.5 * theta * nu_bar * q, q_star, Regime::linear};
    return {impact_sril_leading(t, nu, theta), q_star, Regime::sqrt};
}

double impact_decay(double t, double total_volume, double theta) {
    if (!(t > 0.0)) throw DomainError("t must be positive");
    return theta * std::erf(total_volume / (2.0 * std::sqrt(t)));
}

double impact_reversal(double t, double total_volume, double nu, double theta) {
    if (!(t > 0.0)) throw DomainError("t must be positive");
    if (!(nu > 0.0)) throw DomainError("nu must be positive");
    const double horizon = total_volume / nu;
    if (t <= horizon) return impact_sril(t, nu, theta);
    return theta * std::erf(total_volume / std::sqrt(t) - 0.5 * nu * std::sqrt(t));
}

double expected_spread(double t, double nu, double theta) {
    if (!(t >= 1.0)) throw DomainError("t must be at least 1");
    return 2.0 * theta / std::sqrt(kPi * t) * std::exp(-0.25 * nu * nu * t);
}

double kyle_lambda(double t, double theta, double sigma_v, double p_up) {
    if (!(sigma_v > 0.0)) throw DomainError("sigma_v must be positive");
    if (!(p_up >= 0.0 && p_up <= 1.0)) throw DomainError("p_up must lie in [0,1]");
    return 4.0 * theta * std::sqrt(2.0 / (kPi * t)) * p_up * (1.0 - p_up) / sigma_v;
}

double chi_bayes(double t, double sigma_v) { return sigma_v * std::sqrt(2.0 / (kPi * t)); }

double conditional_variance(double tau, double nu, double theta, double alpha_cal) {
    return alpha_cal * alpha_cal * theta * theta * nu * tau + theta * theta / 3.0;
}

double k_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha <= 2.0)) throw DomainError("alpha_stable must lie in (0, 2]");
    if (alpha == 2.0) return 1.0 / (2.0 * std::sqrt(2.0 * kPi));
    if (std::abs(alpha - 1.0) < 1e-9) return 1.0 / (2.0 * kPi);
    // Squared density on |u| <= 50, plus the tail from pdf ~ C / u^(1+alpha).
    constexpr double cut = 50.0;
    const double breaks[] = {0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, cut};
    const auto body = integrate_pieces(
        [alpha](double u) {
            const double f = stable_pdf(alpha, u);
            return f * f;
        },
        std::span<const double>(breaks), 1e-9);
    const double c = stable_tail_constant(alpha);
    const double tail = c * c / ((1.0 + 2.0 * alpha) * std::pow(cut, 1.0 + 2.0 * alpha));
    return 2.0 * (body.value + tail);
}

double impact_levy(double t, double chi, double sigma_v, double alpha, double theta) {
    return 2.0 * theta * k_alpha(alpha) * chi * std::pow(t, 1.0 - 1.0 / alpha) / sigma_v;
}

double impact_levy_exact(double t, double chi, double sigma_v, double alpha, double theta) {
    // Price minus its argument's noise: X - Y with X, Y i.i.d. unit stable has scale 2^(1/alpha).
    const double a = chi * std::pow(t, 1.0 - 1.0 / alpha) / sigma_v;
    return 2.0 * theta * stable_cdf_centered(alpha, a / std::pow(2.0, 1.0 / alpha));
}

double correlated_sigma(std::int64_t t, const FlowModel& flow) {
    if (t < 1) throw DomainError("t must be at least 1");
    // Sum_{i,j <= t} r(i - j) = t r(0) + 2 sum_{tau=1}^{t-1} (t - tau) r(tau).
    double var = static_cast<double>(t) * flow_autocovariance(flow, 0);
    for (std::int64_t tau = 1; tau < t; ++tau) {
        var += 2.0 * static_cast<double>(t - tau) * flow_autocovariance(flow, tau);
    }
    return std::sqrt(var);
}

double correlated_sigma_asym(double t, const FlowModel& flow) {
    if (const auto* e = std::get_if<CorrelatedExp>(&flow)) {
        return e->sigma_v * std::sqrt((1.0 + 2.0 / std::expm1(1.0 / e->tau_c)) * t);
    }
    if (const auto* p = std::get_if<CorrelatedPower>(&flow)) {
        if (p->eta >= 1.0) return p->sigma_v * std::sqrt(2.0 * t * std::log(t));
        return std::sqrt(2.0 / ((1.0 - p->eta) * (2.0 - p->eta))) * p->sigma_v * std::pow(t, 1.0 - 0.5 * p->eta);
    }
    throw DomainError("correlated_sigma_asym needs a correlated flow");
}

double impact_correlated(std::int64_t t, double chi, const FlowModel& flow, double theta) {
    // E erf((N + chi t) / (sqrt2 S)) with N ~ N(0, S^2) is erf(chi t / (2 S)).
    return theta * std::erf(chi * static_cast<double>(t) / (2.0 * correlated_sigma(t, flow)));
}

double impact_correlated_leading(double t, double chi, const FlowModel& flow, double theta) {
    return theta * chi * t / (kSqrtPi * correlated_sigma_asym(t, flow));
}

double nu_bayes_expected(double nu, double t) {
    return 2.0 / std::sqrt(kPi * t) * std::exp(-0.25 * nu * nu * t) + nu * std::erf(0.5 * nu * std::sqrt(t));
}

double sril_prefactor_powerlaw(double k) {
    const double breaks[] = {0.0, 1.0, 2.0, 4.0, 10.0, 40.0};
    const auto r = integrate_pieces([k](double x) { return x * posterior_g_powerlaw_asym(x, k) * gaussian_density(x); },
                                    std::span<const double>(breaks), 1e-10);
    return 2.0 * r.value;
}

double impact_powerlaw(double t, double nu, double k, double theta) {
    const double mu = nu * std::sqrt(t);
    std::vector<double> breaks;
    for (double d : {-40.0, -8.0, -4.0, -2.0, 0.0, 2.0, 4.0, 8.0, 40.0}) breaks.push_back(mu + d);
    breaks.push_back(0.0);
    std::sort(breaks.begin(), breaks.end());
    const auto r = integrate_pieces(
        [&](double x) { return posterior_g_powerlaw_asym(x, k) * gaussian_density(x - mu); },
        std::span<const double>(breaks), 1e-10, 1e-15);
    return theta * r.value;
}

std::vector<std::string> theory_curve_names() {
    return {"known_nu", "sril",      "crossover", "decay", "reverse", "spread",
            "kyle",     "variance",  "estimator", "levy",  "correlated", "powerlaw"};
}

TheoryCurve make_theory_curve(std::string_view name, const TheoryParams& p, std::span<const double> grid) {
    TheoryCurve c;
    c.name = std::string(name);
    const bool volume = name == "levy" || name == "correlated" || name == "kyle";
    const double rate = volume ? p.chi : p.nu;
    const double horizon = static_cast<double>(p.horizon);
    const double total = p.nu * horizon;
    double prev = -1.0;
    for (double t : grid) {
        if (!(t > prev)) throw DomainError("theory grid must be strictly increasing");
        prev = t;
        double v = 0.0;
        Regime tag = Regime::sqrt;
        if (name == "known_nu") {
            v = impact_known_nu(t, p.nu, p.theta);
            tag = p.nu * p.nu * t < 1.0 ? Regime::linear : Regime::saturated;
        } else if (name == "sril") {
            v = impact_sril(t, p.nu, p.theta);
            tag = 0.5 * p.nu * std::sqrt(t) < 1.0 ? Regime::sqrt : Regime::saturated;
        } else if (name == "crossover") {
            const auto r = impact_linear_crossover(t, p.nu, p.nu_bar, p.theta);
            v = r.impact;
            tag = r.regime;
        } else if (name == "decay") {
            v = t <= horizon ? impact_sril(t, p.nu, p.theta) : impact_decay(t, total, p.theta);
            tag = t <= horizon ? Regime::sqrt : Regime::decay;
        } else if (name == "reverse") {
            v = impact_reversal(t, total, p.nu, p.theta);
            tag = t <= horizon ? Regime::sqrt : Regime::reversal;
        } else if (name == "spread") {
            v = expected_spread(t, p.nu, p.theta);
            tag = Regime::decay;
        } else if (name == "kyle") {
            v = kyle_lambda(t, p.theta, p.sigma_v, p.p_up);
            tag = Regime::decay;
        } else if (name == "variance") {
            v = conditional_variance(t, p.nu, p.theta, p.alpha_cal);
            tag = Regime::linear;
        } else if (name == "estimator") {
            v = nu_bayes_expected(p.nu, t);
            tag = p.nu * p.nu * t < 1.0 ? Regime::decay : Regime::saturated;
        } else if (name == "levy") {
            v = impact_levy_exact(t, p.chi, p.sigma_v, p.alpha_stable, p.theta);
        } else if (name == "correlated") {
            v = impact_correlated(static_cast<std::int64_t>(std::llround(t)), p.chi, p.flow, p.theta);
        } else if (name == "powerlaw") {
            v = impact_powerlaw(t, p.nu, p.k, p.theta);
        } else {
            throw DomainError("unknown theory curve '" + std::string(name) + "'");
        }
        c.grid.push_back(t);
        c.q.push_back(rate * t);
        c.values.push_back(v);
        c.regime_tags.push_back(tag);
    }
    return c;
}

}  // namespace impactlab

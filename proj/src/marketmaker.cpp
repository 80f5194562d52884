#include "impactlab/marketmaker.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "impactlab/errors.hpp"
#include "impactlab/quadrature.hpp"

namespace impactlab {

namespace {

constexpr double kPosteriorRelTol = 1e-10;

// c * log1p(x) with 0 * log 0 = 0 (n = t or n = 0 at the support edge).
double weighted_log1p(double c, double x) { return c == 0.0 ? 0.0 : c * std::log1p(x); }

struct LogLikelihood {
    double n;
    double m;  // t - n

    // Up to the common factor 2^-t: buys are +1 with probability (1 + v G)/2.
    double plus(double v) const { return weighted_log1p(n, v) + weighted_log1p(m, -v); }
    double minus(double v) const { return weighted_log1p(n, -v) + weighted_log1p(m, v); }
};

}  // namespace

void PriorSpec::validate() const {
    if (kind == Kind::cutoff && !(nu_bar > 0.0 && nu_bar <= 1.0)) throw DomainError("nu_bar must lie in (0,1]");
    if (kind == Kind::power_law && !(k > 0.0 && std::isfinite(k))) throw DomainError("k must be positive");
}

std::string PriorSpec::describe() const {
    switch (kind) {
        case Kind::flat: return "flat";
        case Kind::cutoff: return "cutoff(" + std::to_string(nu_bar) + ")";
        case Kind::power_law: return "power_law(" + std::to_string(k) + ")";
    }
    return "?";
}

void PosteriorInput::validate() const {
    if (t < 1) throw DomainError("t must be at least 1");
    if (n_buys < 0 || n_buys > t) throw DomainError("n_buys must lie in [0, t]");
}

PosteriorIntegrals posterior_integrals(const PosteriorInput& input, const PriorSpec& prior) {
    input.validate();
    prior.validate();
    const double t = static_cast<double>(input.t);
    const LogLikelihood ll{static_cast<double>(input.n_buys), static_cast<double>(input.t - input.n_buys)};
    const double z = input.z();
    const double v_max = prior.support_max();

    // Both likelihoods are scaled by the dominant one at its constrained peak.
    const double peak = std::min(std::abs(z), v_max);
    const double log_scale = z >= 0.0 ? ll.plus(peak) : ll.minus(peak);

    const double width = std::sqrt(std::max(1.0 - z * z, 1.0 / t) / t);
    std::vector<double> breaks{0.0, peak, v_max};
    for (double m : {2.0, 6.0, 12.0}) {
        for (double b : {peak - m * width, peak + m * width}) {
            if (b > 0.0 && b < v_max) breaks.push_back(b);
        }
    }
    std::sort(breaks.begin(), breaks.end());

    // Power laws with k < 1 are integrated in u = v^k, which absorbs the
    // integrable singularity: phi(v) dv = du on [0, 1].
    const bool substitute = prior.kind == PriorSpec::Kind::power_law && prior.k < 1.0;
    const double k = prior.k;
    if (substitute) {
        for (double& b : breaks) b = std::pow(b, k);
    }
    auto variable = [&](double w) { return substitute ? std::pow(w, 1.0 / k) : w; };
    auto prior_weight = [&](double v) {
        return prior.kind == PriorSpec::Kind::power_law && !substitute ? std::pow(v, k - 1.0) : 1.0;
    };

    auto integral = [&](bool plus, bool first_moment) {
        auto f = [&](double w) {
            const double v = variable(w);
            const double lg = (plus ? ll.plus(v) : ll.minus(v)) - log_scale;
            const double base = prior_weight(v) * std::exp(lg);
            return first_moment ? v * base : base;
        };
        return integrate_pieces(f, std::span<const double>(breaks), kPosteriorRelTol).value;
    };

    PosteriorIntegrals out;
    out.i_plus = integral(true, false);
    out.i_minus = integral(false, false);
    out.j_plus = integral(true, true);
    out.j_minus = integral(false, true);
    if (!(out.i_plus + out.i_minus > 0.0)) {
        throw ConvergenceError("posterior normalisation vanished at t=" + std::to_string(input.t) +
                               ", n=" + std::to_string(input.n_buys));
    }
    return out;
}

double posterior_g_known_nu(std::int64_t n_buys, std::int64_t t, double nu) {
    if (!(nu >= 0.0 && nu < 1.0)) throw DomainError("nu must lie in [0,1)");
    const double arg = (static_cast<double>(n_buys) - 0.5 * static_cast<double>(t)) * std::log((1.0 + nu) / (1.0 - nu));
    return std::tanh(std::clamp(arg, -40.0, 40.0));
}

double posterior_g_exact(const PosteriorInput& input, const PriorSpec& prior) {
    return posterior_integrals(input, prior).e_g();
}

double posterior_g_flat_asym(double xi) { return std::erf(xi / std::numbers::sqrt2); }

double posterior_g_cutoff_asym(double xi, double s) {
    if (!(s > 0.0)) throw DomainError("cutoff scale s must be positive");
    if (xi == 0.0) return 0.0;
    // 2[erf(xi/r2) + erf((s-xi)/r2)] / [erf((s+xi)/r2) + erf((s-xi)/r2)] - 1, odd in xi,
    // rewritten with erfc for xi > 0 so the far tail does not cancel to 0/0.
    const double x = std::abs(xi);
    const double r2 = std::numbers::sqrt2;
    const double num = std::erfc((x - s) / r2) - std::erfc(x / r2);
    const double den = std::erfc((x - s) / r2) - std::erfc((x + s) / r2);
    const double v = den > 0.0 ? 2.0 * num / den - 1.0 : 1.0;
    return std::copysign(v, xi);
}

double posterior_g_powerlaw_asym(double xi, double k) {
    if (!(k > 0.0)) throw DomainError("k must be positive");
    if (xi == 0.0) return 0.0;
    // Beyond |xi| = 10 the mass on the wrong sign is below e^-50: the value is 1 in double.
    if (std::abs(xi) > 10.0) return std::copysign(1.0, xi);
    const double x = -0.5 * xi * xi;
    const double ratio = kummer_1f1(1.0 - 0.5 * k, 1.5, x) / kummer_1f1(0.5 * (1.0 - k), 0.5, x);
    const double g = xi * std::numbers::sqrt2 * std::exp(std::lgamma(0.5 * (1.0 + k)) - std::lgamma(0.5 * k)) * ratio;
    // A posterior mean of a sign; rounding in the 1F1 ratio can overshoot by ~1e-13 near |xi| = 10.
    return std::clamp(g, -1.0, 1.0);
}

double posterior_g_volume(double delta_v, double t, double sigma_v, double p_up) {
    if (!(sigma_v > 0.0)) throw DomainError("sigma_v must be positive");
    if (!(p_up > 0.0 && p_up < 1.0)) throw DomainError("p_up must lie in (0,1)");
    if (!(t > 0.0)) throw DomainError("t must be positive");
    const double x = delta_v / (std::sqrt(2.0 * t) * sigma_v);
    // [1 - r (1-e)/(1+e)] / [1 + r (1-e)/(1+e)] with r = (1-p)/p and e = erf(x).
    const double up = p_up * std::erfc(-x);
    const double down = (1.0 - p_up) * std::erfc(x);
    return (up - down) / (up + down);
}

double posterior_g_levy(double delta_v, double t, double sigma_v, double alpha_stable) {
    if (!(sigma_v > 0.0)) throw DomainError("sigma_v must be positive");
    return 2.0 * stable_cdf_centered(alpha_stable, delta_v / (sigma_v * std::pow(t, 1.0 / alpha_stable)));
}

double posterior_g_levy(double delta_v, double t, double sigma_v, const StableCdfTable& table) {
    return 2.0 * table(delta_v / (sigma_v * std::pow(t, 1.0 / table.alpha())));
}

double posterior_g_correlated(double delta_v, double sigma_t) {
    if (!(sigma_t > 0.0)) throw DomainError("sigma_t must be positive");
    return std::erf(delta_v / (std::numbers::sqrt2 * sigma_t));
}

Quote quote_bid_ask(double xi, double t, double theta) {
    if (!(t >= 1.0)) throw DomainError("t must be at least 1");
    const double mid = std::erf(xi / std::numbers::sqrt2);
    const double half = std::sqrt(2.0 / (std::numbers::pi * t)) * std::exp(-0.5 * xi * xi);
    return {theta * (mid + half), theta * (mid - half), 2.0 * theta * half};
}

Quote quote_bid_ask_exact(const PosteriorInput& input, double theta, const PriorSpec& prior) {
    const auto p = posterior_integrals(input, prior);
    // Signed-v form: v > 0 carries G = +1, v < 0 carries G = -1, and a buy
    // multiplies the likelihood by (1 + v), a sell by (1 - v).
    const double ask_pos = p.i_plus + p.j_plus;
    const double ask_neg = p.i_minus - p.j_minus;
    const double bid_pos = p.i_plus - p.j_plus;
    const double bid_neg = p.i_minus + p.j_minus;
    const double ask = theta * (ask_pos - ask_neg) / (ask_pos + ask_neg);
    const double bid = theta * (bid_pos - bid_neg) / (bid_pos + bid_neg);
    return {ask, bid, ask - bid};
}

}  // namespace impactlab

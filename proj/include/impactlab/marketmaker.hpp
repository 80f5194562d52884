#pragma once

// Pricing rules: the market maker's posterior mean of G. The price
// contribution is theta * E[G | data].

#include <cmath>
#include <cstdint>
#include <string>

#include "impactlab/specfun.hpp"

namespace impactlab {

struct PriorSpec {
    enum class Kind { flat, cutoff, power_law };

    Kind kind = Kind::flat;
    double nu_bar = 1.0;  // cutoff: support [0, nu_bar]
    double k = 1.0;       // power law: density proportional to v^(k-1)

    static PriorSpec flat() { return {}; }
    static PriorSpec cutoff(double nu_bar) { return {Kind::cutoff, nu_bar, 1.0}; }
    static PriorSpec power_law(double k) { return {Kind::power_law, 1.0, k}; }

    /// Upper end of the support.
    double support_max() const noexcept { return kind == Kind::cutoff ? nu_bar : 1.0; }
    void validate() const;
    std::string describe() const;
    bool operator==(const PriorSpec&) const = default;
};

struct PosteriorInput {
    std::int64_t n_buys = 0;
    std::int64_t t = 1;

    double z() const noexcept { return static_cast<double>(2 * n_buys - t) / static_cast<double>(t); }
    double xi() const noexcept {
        return static_cast<double>(2 * n_buys - t) / std::sqrt(static_cast<double>(t));
    }
    void validate() const;
};

/// The four prior-weighted likelihood integrals over v in [0, v_max]:
///   i_plus  = int phi(v) L(v) dv,   j_plus  = int v phi(v) L(v) dv   (G = +1)
///   i_minus, j_minus likewise with G = -1,
/// all sharing one unknown positive scale.
struct PosteriorIntegrals {
    double i_plus = 0.0;
    double i_minus = 0.0;
    double j_plus = 0.0;
    double j_minus = 0.0;

    double e_g() const noexcept { return (i_plus - i_minus) / (i_plus + i_minus); }
    double nu_hat() const noexcept { return (j_plus + j_minus) / (i_plus + i_minus); }
};

PosteriorIntegrals posterior_integrals(const PosteriorInput& input, const PriorSpec& prior);

/// tanh[(n - t/2) ln((1+nu)/(1-nu))], argument clamped to +/-40.
double posterior_g_known_nu(std::int64_t n_buys, std::int64_t t, double nu);

double posterior_g_exact(const PosteriorInput& input, const PriorSpec& prior);

double posterior_g_flat_asym(double xi);
double posterior_g_cutoff_asym(double xi, double s);
double posterior_g_powerlaw_asym(double xi, double k);

/// General buy-side prior p_up = P(G = +1).
double posterior_g_volume(double delta_v, double t, double sigma_v, double p_up);

double posterior_g_levy(double delta_v, double t, double sigma_v, double alpha_stable);
/// Same, evaluated through a precomputed CDF table for the table's alpha.
double posterior_g_levy(double delta_v, double t, double sigma_v, const StableCdfTable& table);

/// Gaussian-noise flows with a general accumulated noise std sigma_t.
double posterior_g_correlated(double delta_v, double sigma_t);

struct Quote {
    double ask_increment;  // ask - F_t
    double bid_increment;  // bid - F_t
    double spread;
};

/// Leading order in 1/sqrt(t): theta [erf(xi/sqrt2) +/- sqrt(2/(pi t)) e^{-xi^2/2}].
Quote quote_bid_ask(double xi, double t, double theta);

/// Exact ask and bid under a prior: the next trade's own likelihood factor
/// (1 +/- v) reweights the posterior.
Quote quote_bid_ask_exact(const PosteriorInput& input, double theta, const PriorSpec& prior);

}  // namespace impactlab

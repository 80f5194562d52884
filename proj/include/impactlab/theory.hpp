#pragma once

// Closed-form predictions for impact, spread, variance and exponents.
// All impacts are E[Delta p_t] for G = +1 in price units (linear in theta).

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "impactlab/orderflow.hpp"

namespace impactlab {

enum class Regime { linear, sqrt, saturated, decay, reversal };

std::string_view to_string(Regime r) noexcept;

struct TheoryCurve {
    std::string name;
    std::vector<double> grid;  // t
    std::vector<double> q;     // nu t (or chi t for volume flows)
    std::vector<double> values;
    std::vector<Regime> regime_tags;
};

/// theta tanh(nu^2 t); leading order theta nu^2 t.
double impact_known_nu(double t, double nu, double theta);
double impact_known_nu_leading(double t, double nu, double theta);
/// Binomial expectation of theta tanh[(n - t/2) ln((1+nu)/(1-nu))] at integer t.
double impact_known_nu_exact(std::int64_t t, double nu, double theta);

/// theta erf(nu sqrt(t) / 2); leading order theta nu sqrt(t) / sqrt(pi).
double impact_sril(double t, double nu, double theta);
double impact_sril_leading(double t, double nu, double theta);
/// sigma_tau sqrt(q / V_tau) / (sqrt(pi) alpha_cal).
double impact_sril_rescaled(double q, double sigma_tau, double v_tau, double alpha_cal);

struct CrossoverPrediction {
    double impact;
    double q_star;
    Regime regime;
};

/// Linear branch theta nu_bar q / 2 below q* = 4 nu / (pi nu_bar^2), leading
/// square-root branch above; the two meet at q*.
CrossoverPrediction impact_linear_crossover(double t, double nu, double nu_bar, double theta);

/// theta erf(Q / (2 sqrt t)) after a stop at T.
double impact_decay(double t, double total_volume, double theta);

/// theta erf(Q/sqrt(t) - nu sqrt(t)/2) after T (reverse mode), SRIL before.
double impact_reversal(double t, double total_volume, double nu, double theta);

/// 2 theta / sqrt(pi t) exp(-nu^2 t / 4).
double expected_spread(double t, double nu, double theta);

/// 4 theta sqrt(2/(pi t)) p (1-p) / sigma_v.
double kyle_lambda(double t, double theta, double sigma_v, double p_up);
/// Bayes trade-speed estimate at Delta V = 0: sigma_v sqrt(2/(pi t)).
double chi_bayes(double t, double sigma_v);

/// alpha_cal^2 theta^2 nu tau + theta^2 / 3.
double conditional_variance(double tau, double nu, double theta, double alpha_cal);

/// Integral of the squared unit stable density.
double k_alpha(double alpha_stable);
/// Leading order 2 theta K(alpha) chi t^(1-1/alpha) / sigma_v.
double impact_levy(double t, double chi, double sigma_v, double alpha_stable, double theta);
/// Expectation of 2 theta L(Delta V / (sigma_v t^(1/alpha))) over the noise:
/// 2 theta L(chi t^(1-1/alpha) / (sigma_v 2^(1/alpha))).
double impact_levy_exact(double t, double chi, double sigma_v, double alpha_stable, double theta);

/// Std of the accumulated correlated noise: exact lag sum.
double correlated_sigma(std::int64_t t, const FlowModel& flow);
/// Large-t asymptote (power law: eta < 1 and eta = 1 cases; exponential: linear variance).
double correlated_sigma_asym(double t, const FlowModel& flow);
/// theta erf(chi t / (2 Sigma_t)) with the exact Sigma_t.
double impact_correlated(std::int64_t t, double chi, const FlowModel& flow, double theta);
/// Leading order theta chi t / (sqrt(pi) Sigma_t) with the asymptotic Sigma_t.
double impact_correlated_leading(double t, double chi, const FlowModel& flow, double theta);

/// (2/sqrt(pi t)) exp(-nu^2 t/4) + nu erf(nu sqrt(t)/2).
double nu_bayes_expected(double nu, double t);

/// E[xi f_k(xi)] for xi ~ N(0,1), f_k the power-law pricing rule: impact is
/// theta P_k nu sqrt(t) to leading order. P_1 = 1/sqrt(pi).
double sril_prefactor_powerlaw(double k);

/// theta E[f_k(xi)] for xi ~ N(nu sqrt(t), 1): the power-law rule averaged
/// over the Gaussian limit of the flow.
double impact_powerlaw(double t, double nu, double k, double theta);

struct TheoryParams {
    double nu = 0.1;
    double nu_bar = 1.0;
    double theta = 1.0;
    double alpha_cal = 1.0;
    std::int64_t horizon = 1;
    AfterMode after_mode = AfterMode::stop;
    double chi = 0.1;
    double sigma_v = 1.0;
    double p_up = 0.5;
    double alpha_stable = 1.5;
    double k = 1.0;
    FlowModel flow = UnitBinary{};
};

/// Named curves: known_nu, sril, crossover, decay, reverse, spread, kyle,
/// variance, estimator, levy, correlated, powerlaw.
TheoryCurve make_theory_curve(std::string_view name, const TheoryParams& p, std::span<const double> grid);

std::vector<std::string> theory_curve_names();

}  // namespace impactlab

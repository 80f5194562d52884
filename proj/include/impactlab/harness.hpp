#pragma once

// Monte-Carlo experiments. Paths are processed in fixed blocks of
// kBlockPaths; block statistics are merged in block order, so results are
// bit-identical for any worker count.

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "impactlab/estimators.hpp"
#include "impactlab/marketmaker.hpp"
#include "impactlab/orderflow.hpp"
#include "impactlab/theory.hpp"

namespace impactlab {

inline constexpr std::size_t kBlockPaths = 4096;

enum class PricingRule {
    automatic,      // exact for unit flows, the flow's own rule otherwise
    exact,          // quadrature posterior under the prior
    flat_asym,      // erf(xi / sqrt 2)
    cutoff_asym,    // Gaussian-limit cutoff rule with s = nu_bar sqrt t
    powerlaw_asym,  // 1F1 ratio rule
    known_nu,       // tanh rule with the true nu
    volume,         // general-p Gaussian-volume rule
    levy,           // 2 L_alpha(Delta V / (sigma_v t^(1/alpha)))
    correlated,     // erf(Delta V / (sqrt2 Sigma_t))
};

std::string_view to_string(PricingRule r) noexcept;
PricingRule parse_pricing_rule(std::string_view s);

struct MarketConfig {
    double nu = 0.1;             // unit-flow participation
    double chi = 0.1;            // volume-flow trade speed
    double theta = 1.0;
    double alpha_cal = 1.0;
    int direction = 1;           // G
    std::int64_t horizon = 0;    // T; 0 means the meta-order lasts to t_max
    AfterMode after_mode = AfterMode::stop;
    FlowModel flow = UnitBinary{};
    PriorSpec prior = PriorSpec::flat();
    double p_up = 0.5;           // P(G = +1) believed by the market maker
    bool random_direction = false;  // draw G per path with P(+1) = p_up
    bool include_fundamental = false;

    MetaOrderSchedule schedule(std::int64_t t_max) const;
    FundamentalSpec fundamental() const { return {theta, alpha_cal}; }
    bool operator==(const MarketConfig&) const = default;
};

struct ExperimentConfig {
    MarketConfig market;
    std::int64_t n_paths = 10000;
    std::int64_t t_max = 1000;
    std::string record_grid = "auto";  // log grid over [1, t_max]
    std::uint64_t master_seed = 42;
    PricingRule pricing_rule = PricingRule::automatic;
    bool control_variate = false;
    int workers = 0;  // 0: hardware concurrency
    EstimatorMethod estimator = EstimatorMethod::bayes_flat;
    int n_bins = 40;

    /// Throws DomainError on inconsistent settings.
    void validate() const;
    bool operator==(const ExperimentConfig&) const = default;
};

/// "lo:hi:log[:per_decade]" (capped at 48 per decade), "lo:hi:lin[:step]" or
/// a comma list; "auto" is 1:t_max:log. Points are integers in [1, t_max], strictly increasing.
std::vector<std::int64_t> parse_record_grid(std::string_view spec, std::int64_t t_max);

struct ImpactCurve {
    std::vector<std::int64_t> grid;
    std::vector<double> q;
    std::vector<double> mean_dp;
    std::vector<double> var_dp;
    std::vector<double> std_err;
    std::int64_t n_paths = 0;
    bool control_variate = false;  // var_dp is then the variance of the controlled per-path value
};

struct EnsembleStats {
    std::vector<double> mean;
    std::vector<double> var;  // unbiased
    std::int64_t n = 0;
};

/// Fills out[p * n_obs + j] for the count paths starting at first.
using BlockRunner = std::function<void(std::uint64_t first, std::size_t count, std::span<double> out)>;

/// Runs n_paths through per-worker runners (make_runner is called once per worker).
EnsembleStats simulate_ensemble(std::int64_t n_paths, std::size_t n_obs, int workers,
                                const std::function<BlockRunner()>& make_runner);

ImpactCurve run_impact_experiment(const ExperimentConfig& config);
ImpactCurve run_estimator_experiment(const ExperimentConfig& config, EstimatorMethod method);
/// Ensemble-mean bid-ask spread; exact quotes under pricing_rule exact, leading order otherwise.
ImpactCurve run_spread_experiment(const ExperimentConfig& config);
/// Impact run with the fundamental switched on and no control variate.
ImpactCurve run_variance_experiment(const ExperimentConfig& config);

struct AggregatedImpact {
    std::vector<double> bin_lo;
    std::vector<double> bin_hi;
    std::vector<double> mean_dv;
    std::vector<double> mean_dp;
    std::vector<std::int64_t> count;
    double lambda = 0.0;
    double lambda_stderr = 0.0;
    std::int64_t t = 0;
};

/// Bins paths by Delta V at t_max; Lambda is the central difference of the
/// two bins adjacent to Delta V = 0 (n_bins is rounded up to even).
AggregatedImpact run_aggregated_impact(const ExperimentConfig& config, int n_bins);

struct SlopeFit {
    double exponent = 0.0;
    double prefactor = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    double r_squared = 0.0;
    int n_points = 0;
};

/// OLS of ln y on ln t over grid points in [t_lo, t_hi]; needs at least 8 points.
SlopeFit loglog_slope_fit(const ImpactCurve& curve, double t_lo, double t_hi);
SlopeFit loglog_slope_fit(std::span<const double> t, std::span<const double> y, double t_lo, double t_hi);

struct OracleCell {
    std::int64_t t;
    std::int64_t n;
    double e_g;
    double nu_hat;
};

/// Dense midpoint sums (10^6 nodes) of the posterior through the known-nu
/// route: E[G|x] = int phi P(x|v) tanh(...) / int phi P(x|v).
std::vector<OracleCell> oracle_posterior_enumeration(std::int64_t t_max, const PriorSpec& prior,
                                                     std::int64_t nodes = 1000000);

/// CSV with header t,q,mean_dp,var_dp,stderr,n_paths,source (17 significant digits).
void write_curve_csv(std::ostream& os, const ImpactCurve& curve);
void write_curve_csv(std::ostream& os, const TheoryCurve& curve);
void write_curve_csv_header(std::ostream& os);
void append_curve_csv(std::ostream& os, const ImpactCurve& curve);
void append_curve_csv(std::ostream& os, const TheoryCurve& curve);

/// Theory parameters matching a config.
TheoryParams theory_params(const ExperimentConfig& config);

}  // namespace impactlab

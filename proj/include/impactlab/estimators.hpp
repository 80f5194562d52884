#pragma once

// Estimates of the participation rate nu from the observed flow.

#include <cstdint>
#include <string_view>

#include "impactlab/marketmaker.hpp"

namespace impactlab {

enum class EstimatorMethod { bayes_flat, bayes_cutoff, bayes_power_law, bayes_exact, mle };

std::string_view to_string(EstimatorMethod m) noexcept;

struct EstimatorResult {
    double nu_hat = 0.0;
    EstimatorMethod method = EstimatorMethod::bayes_exact;
    bool converged = true;
    int iterations = 0;
};

/// Posterior mean of |v| under the prior.
EstimatorResult nu_bayes_exact(std::int64_t n_buys, std::int64_t t, const PriorSpec& prior);

double nu_bayes_flat_asym(double xi, double t);
double nu_bayes_powerlaw_asym(double xi, double t, double k);
double nu_bayes_cutoff_asym(double xi, double t, double nu_bar);

/// Root of nu = (xi/sqrt t) tanh[(xi sqrt t / 2) ln((1+nu)/(1-nu))]; 0 for |xi| <= 1.
EstimatorResult nu_mle(double xi, double t);

}  // namespace impactlab

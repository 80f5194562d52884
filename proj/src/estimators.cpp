#include "impactlab/estimators.hpp"

#include <cmath>
#include <numbers>

#include "impactlab/errors.hpp"
#include "impactlab/specfun.hpp"

namespace impactlab {

namespace {

void check_t(double t) {
    if (!(t >= 1.0)) throw DomainError("t must be at least 1");
}

// Algebraic part of 1F1(a; b; -x) / [Gamma(b) x^-a / Gamma(b-a)] for large x:
// sum_s (a)_s (a-b+1)_s / (s! x^s), truncated at its smallest term. The
// exponentially small companion series is below double precision for x > 50.
double kummer_large_negative_tail(double a, double b, double x) {
    double term = 1.0;
    double sum = 1.0;
    for (int s = 0; s < 400; ++s) {
        const double next = term * (a + s) * (a - b + 1.0 + s) / ((s + 1.0) * x);
        if (next == 0.0) break;
        if (std::abs(next) >= std::abs(term)) break;
        term = next;
        sum += term;
        if (std::abs(term) <= 1e-17 * std::abs(sum)) break;
    }
    return sum;
}

}  // namespace

std::string_view to_string(EstimatorMethod m) noexcept {
    switch (m) {
        case EstimatorMethod::bayes_flat: return "bayes_flat";
        case EstimatorMethod::bayes_cutoff: return "bayes_cutoff";
        case EstimatorMethod::bayes_power_law: return "bayes_power_law";
        case EstimatorMethod::bayes_exact: return "bayes_exact";
        case EstimatorMethod::mle: return "mle";
    }
    return "?";
}

EstimatorResult nu_bayes_exact(std::int64_t n_buys, std::int64_t t, const PriorSpec& prior) {
    const auto p = posterior_integrals({n_buys, t}, prior);
    return {p.nu_hat(), EstimatorMethod::bayes_exact, true, 0};
}

double nu_bayes_flat_asym(double xi, double t) {
    check_t(t);
    return std::sqrt(2.0 / (std::numbers::pi * t)) * std::exp(-0.5 * xi * xi) +
           xi / std::sqrt(t) * std::erf(xi / std::numbers::sqrt2);
}

double nu_bayes_powerlaw_asym(double xi, double t, double k) {
    check_t(t);
    if (!(k > 0.0)) throw DomainError("k must be positive");
    const double x = 0.5 * xi * xi;
    if (x > 50.0) {
        // Large |xi|: Gamma-function prefactors cancel against the leading powers of x.
        return std::abs(xi) / std::sqrt(t) * kummer_large_negative_tail(-0.5 * k, 0.5, x) /
               kummer_large_negative_tail(0.5 * (1.0 - k), 0.5, x);
    }
    const double gamma_ratio = std::exp(std::lgamma(0.5 * (k + 1.0)) - std::lgamma(0.5 * k));
    return std::sqrt(2.0 / t) * gamma_ratio * kummer_1f1(-0.5 * k, 0.5, -x) / kummer_1f1(0.5 * (1.0 - k), 0.5, -x);
}

double nu_bayes_cutoff_asym(double xi, double t, double nu_bar) {
    check_t(t);
    if (!(nu_bar > 0.0)) throw DomainError("nu_bar must be positive");
    const double s = nu_bar * std::sqrt(t);
    const double x = std::abs(xi);  // even in xi
    const double r2 = std::numbers::sqrt2;
    // erf(a) + erf(b) sums below are rewritten with erfc so that |xi| >> s
    // does not cancel; algebraically identical to the erf form.
    const double den = std::erfc((x - s) / r2) - std::erfc((x + s) / r2);
    const double gauss = 2.0 * std::exp(-0.5 * x * x) - std::exp(-0.5 * (x - s) * (x - s)) -
                         std::exp(-0.5 * (x + s) * (x + s));
    const double linear = std::sqrt(std::numbers::pi / 2.0) * x *
                          (std::erfc((x - s) / r2) + std::erfc((x + s) / r2) - 2.0 * std::erfc(x / r2));
    if (!(den > 0.0)) return nu_bar;  // all posterior mass at the cutoff
    return std::sqrt(2.0 / (std::numbers::pi * t)) * (gauss + linear) / den;
}

EstimatorResult nu_mle(double xi, double t) {
    EstimatorResult r{0.0, EstimatorMethod::mle, true, 0};
    if (std::isnan(xi) || std::isnan(t)) {
        r.converged = false;
        return r;
    }
    check_t(t);
    const double a = std::abs(xi);
    if (a <= 1.0) return r;
    const double sqrt_t = std::sqrt(t);
    auto h = [&](double nu) { return a / sqrt_t * std::tanh(0.5 * a * sqrt_t * std::log((1.0 + nu) / (1.0 - nu))) - nu; };
    double lo = 1e-12;
    double hi = 1.0 - 1e-12;
    if (h(hi) >= 0.0) {
        // |xi| = sqrt t: every trade on one side, the likelihood peaks at the edge.
        r.nu_hat = hi;
        return r;
    }
    for (; r.iterations < 200; ++r.iterations) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (h(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    r.nu_hat = 0.5 * (lo + hi);
    return r;
}

}  // namespace impactlab

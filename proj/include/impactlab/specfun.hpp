#pragma once

// Special functions and symmetric alpha-stable laws.
//
// Stable laws use the characteristic function exp(-|c k|^alpha): alpha = 1 is
// the standard Cauchy at c = 1 and alpha = 2 is N(0, 2c^2).

#include <vector>

#include "impactlab/rng.hpp"

namespace impactlab {

double erf(double x) noexcept;

/// Imaginary error function. Throws OverflowError for |x| > 30.
double erfi(double x);

/// Confluent hypergeometric 1F1(a; b; x) for |x| <= 50.
double kummer_1f1(double a, double b, double x);

/// D(z || v) between the laws of a +/-1 variable with means z and v.
double kl_divergence(double z, double v);

struct StableLawParams {
    double alpha_stable = 2.0;
    double scale = 1.0;

    void validate() const;
};

/// Integral of the unit-scale stable density from 0 to x; odd, limits +/-1/2.
double stable_cdf_centered(double alpha_stable, double x);

/// Unit-scale stable density.
double stable_pdf(double alpha_stable, double x);

/// Tail constant: pdf(x) ~ C / |x|^(1+alpha) for alpha < 2.
double stable_tail_constant(double alpha_stable);

/// Chambers-Mallows-Stuck draw.
double stable_sample(const StableLawParams& params, Philox4x32& rng);

/// Cubic Hermite table of stable_cdf_centered on [-half_width, half_width]
/// (density supplies the slopes). Falls back to direct evaluation outside.
class StableCdfTable {
  public:
    explicit StableCdfTable(double alpha_stable, double half_width = 50.0, double step = 0.01);

    double operator()(double x) const;
    double alpha() const noexcept { return alpha_; }

  private:
    double alpha_;
    double half_width_;
    double step_;
    std::vector<double> cdf_;
    std::vector<double> pdf_;
};

}  // namespace impactlab

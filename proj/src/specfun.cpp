#include "impactlab/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "impactlab/errors.hpp"
#include "impactlab/quadrature.hpp"

namespace impactlab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoOverSqrtPi = std::numbers::inv_sqrtpi * 2.0;

double erfi_series(double x) {
    // sum x^(2n+1) / (n! (2n+1)); all terms share the sign of x.
    const double x2 = x * x;
    double power = x;
    double sum = x;
    for (int n = 1; n < 400; ++n) {
        power *= x2 / n;
        const double term = power / (2 * n + 1);
        sum += term;
        if (std::abs(term) <= 1e-17 * std::abs(sum)) break;
    }
    return kTwoOverSqrtPi * sum;
}

double erfi_asymptotic(double x) {
    // e^{x^2}/(x sqrt(pi)) * sum (2k-1)!!/(2x^2)^k, truncated at the smallest term.
    const double inv = 1.0 / (2.0 * x * x);
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 200; ++k) {
        const double next = term * (2 * k - 1) * inv;
        if (next >= term) break;
        term = next;
        sum += term;
        if (term <= 1e-17 * sum) break;
    }
    return std::exp(x * x) / (x * std::sqrt(kPi)) * sum;
}

double kummer_series(double a, double b, double x) {
    // x >= 0 here. Terms may dip transiently near a + n = 0, so the stopping
    // test is only armed once the ratio (a+n)x/((b+n)(n+1)) is below one for good.
    const double arm = x + std::abs(a) + std::abs(b);
    double term = 1.0;
    double sum = 1.0;
    for (int n = 0; n < 500; ++n) {
        term *= (a + n) / (b + n) * x / (n + 1);
        sum += term;
        if (term == 0.0) return sum;
        if (n + 1 > arm && std::abs(term) <= 1e-12 * std::abs(sum)) return sum;
    }
    throw ConvergenceError("kummer_1f1(" + std::to_string(a) + ", " + std::to_string(b) + ", " +
                           std::to_string(x) + ") did not converge in 500 terms");
}

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha <= 2.0)) {
        throw DomainError("stable exponent must lie in (0, 2], got " + std::to_string(alpha));
    }
}

bool near_cauchy(double alpha) { return std::abs(alpha - 1.0) < 1e-9; }

// Zolotarev form: with zeta = alpha/(alpha-1) and theta in (0, pi/2),
//   log g = zeta (log x + log cos theta - log sin(alpha theta))
//           + log cos((alpha-1) theta) - log cos theta,
// g monotone in theta (decreasing for alpha > 1, increasing for alpha < 1).
// Above pi/4 everything runs in phi = pi/2 - theta so that narrow features
// near pi/2 keep full relative precision.
constexpr double kQuarter = kPi / 4.0;

struct Zolotarev {
    double alpha;
    double zeta;
    double log_x;

    // w is theta when lower, phi otherwise.
    double log_g(double w, bool lower) const {
        const double theta = lower ? w : kPi / 2.0 - w;
        const double log_cos = lower ? std::log(std::cos(w)) : std::log(std::sin(w));
        return zeta * (log_x + log_cos - std::log(std::sin(alpha * theta))) +
               std::log(std::cos((alpha - 1.0) * theta)) - log_cos;
    }

    // Crossing g = 1 as (w, lower). In either variable, log g > 0 toward w -> 0
    // exactly when that end is where g diverges.
    std::pair<double, bool> crossing() const {
        const double mid_lg = log_g(kQuarter, true);
        const bool g_big_at_zero = alpha > 1.0;
        const bool lower = (mid_lg <= 0.0) == g_big_at_zero;
        const bool big_near_zero = lower == g_big_at_zero;
        double lo = 0.0;
        double hi = kQuarter;
        for (int i = 0; i < 200 && lo < hi; ++i) {
            const double m = 0.5 * (lo + hi);
            if (m == lo || m == hi) break;
            if ((log_g(m, lower) > 0.0) == big_near_zero) {
                lo = m;
            } else {
                hi = m;
            }
        }
        return {0.5 * (lo + hi), lower};
    }

    template <class F>
    QuadratureResult integrate(F&& integrand, double rel_tol, double abs_tol) const {
        // Breaks in each half-variable: the crossing plus a geometric ladder
        // toward it so every piece sees the transition at its own scale.
        const auto [c, c_lower] = crossing();
        std::vector<double> lower{0.0, kQuarter};
        std::vector<double> upper{0.0, kQuarter};
        auto& own = c_lower ? lower : upper;
        auto& other = c_lower ? upper : lower;
        own.push_back(c);
        const double d = 0.5 * std::min(c, kQuarter - c);
        for (double step = d; step > 0.0 && (c - step > 0.0 || c + step < kQuarter); step *= 2.0) {
            if (c - step > 0.0) own.push_back(c - step);
            if (c + step < kQuarter) own.push_back(c + step);
        }
        if (kQuarter - c < 0.25 * kQuarter) {
            // Transition close to pi/4 from this side; mirror a ladder across.
            for (double step = kQuarter - c; step < kQuarter; step *= 2.0) other.push_back(kQuarter - step);
        }
        std::sort(lower.begin(), lower.end());
        std::sort(upper.begin(), upper.end());
        const auto lo_part = integrate_pieces([&](double w) { return integrand(log_g(w, true)); },
                                              std::span<const double>(lower), rel_tol, 0.5 * abs_tol);
        const auto up_part = integrate_pieces([&](double w) { return integrand(log_g(w, false)); },
                                              std::span<const double>(upper), rel_tol, 0.5 * abs_tol);
        return {lo_part.value + up_part.value, lo_part.error + up_part.error, lo_part.l1 + up_part.l1};
    }
};

double exp_neg_g(double lg) {
    if (lg > 7.0) return 0.0;  // g > 1096
    return std::exp(-std::exp(lg));
}

double g_exp_neg_g(double lg) {
    if (lg > 7.0 || lg < -745.0) return 0.0;
    const double g = std::exp(lg);
    return g * std::exp(-g);
}

// Power series around 0, entire for alpha > 1:
//   pdf(x) = 1/(pi alpha) sum (-1)^k Gamma((2k+1)/alpha) x^{2k} / (2k)!
constexpr double kSeriesRadius = 0.5;

double stable_series(double alpha, double x, bool integrated) {
    double sum = 0.0;
    double x_pow = integrated ? x : 1.0;  // x^{2k(+1)}
    double fact = 1.0;                    // (2k)! or (2k+1)!
    const double x2 = x * x;
    for (int k = 0; k < 200; ++k) {
        const int m = 2 * k + (integrated ? 1 : 0);
        if (k > 0) fact *= static_cast<double>(m) * (m - 1);
        const double term = std::tgamma((2.0 * k + 1.0) / alpha) * x_pow / fact;
        sum += (k % 2 == 0) ? term : -term;
        if (std::abs(term) <= 1e-17 * std::abs(sum)) break;
        x_pow *= x2;
    }
    return sum / (kPi * alpha);
}

double stable_cdf_positive(double alpha, double x) {
    if (alpha > 1.0 && x < kSeriesRadius) return stable_series(alpha, x, true);
    const Zolotarev z{alpha, alpha / (alpha - 1.0), std::log(x)};
    const auto r = z.integrate(exp_neg_g, 1e-10, 1e-13);
    const double part = r.value / kPi;
    return alpha > 1.0 ? 0.5 - part : part;
}

double stable_pdf_positive(double alpha, double x) {
    if (alpha > 1.0 && x < kSeriesRadius) return stable_series(alpha, x, false);
    const Zolotarev z{alpha, alpha / (alpha - 1.0), std::log(x)};
    const double scale = alpha / (kPi * std::abs(alpha - 1.0) * x);
    // Absolute accuracy 1e-13 on the density itself.
    const auto r = z.integrate(g_exp_neg_g, 1e-10, 1e-13 / scale);
    return scale * r.value;
}

}  // namespace

double erf(double x) noexcept { return std::erf(x); }

double erfi(double x) {
    const double ax = std::abs(x);
    if (ax > 30.0) throw OverflowError("erfi argument " + std::to_string(x) + " exceeds 30");
    const double v = ax < 6.0 ? erfi_series(ax) : erfi_asymptotic(ax);
    if (!std::isfinite(v)) throw OverflowError("erfi(" + std::to_string(x) + ") overflows");
    return std::copysign(v, x);
}

double kummer_1f1(double a, double b, double x) {
    if (b <= 0.0 && b == std::floor(b)) {
        throw DomainError("kummer_1f1 needs b not a non-positive integer, got " + std::to_string(b));
    }
    if (!(std::abs(x) <= 50.0)) throw DomainError("kummer_1f1 needs |x| <= 50, got " + std::to_string(x));
    if (x == 0.0) return 1.0;
    if (x < 0.0) return std::exp(x) * kummer_series(b - a, b, -x);
    return kummer_series(a, b, x);
}

double kl_divergence(double z, double v) {
    if (!(std::abs(z) < 1.0 && std::abs(v) < 1.0)) {
        throw DomainError("kl_divergence needs |z| < 1 and |v| < 1");
    }
    const double up = 0.5 * (1.0 + z) * (std::log1p(z) - std::log1p(v));
    const double down = 0.5 * (1.0 - z) * (std::log1p(-z) - std::log1p(-v));
    return std::max(0.0, up + down);
}

void StableLawParams::validate() const {
    check_alpha(alpha_stable);
    if (!(scale > 0.0)) throw DomainError("stable scale must be positive");
}

double stable_cdf_centered(double alpha, double x) {
    check_alpha(alpha);
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return std::copysign(0.5, x);
    if (near_cauchy(alpha)) return std::atan(x) / kPi;
    if (alpha == 2.0) return 0.5 * std::erf(x / 2.0);
    return std::copysign(stable_cdf_positive(alpha, std::abs(x)), x);
}

double stable_pdf(double alpha, double x) {
    check_alpha(alpha);
    if (near_cauchy(alpha)) return 1.0 / (kPi * (1.0 + x * x));
    if (alpha == 2.0) return std::exp(-x * x / 4.0) / (2.0 * std::sqrt(kPi));
    const double ax = std::abs(x);
    if (std::isinf(ax)) return 0.0;
    if (ax == 0.0) return std::tgamma(1.0 + 1.0 / alpha) / kPi;
    return stable_pdf_positive(alpha, ax);
}

double stable_tail_constant(double alpha) {
    check_alpha(alpha);
    return std::tgamma(1.0 + alpha) * std::sin(kPi * alpha / 2.0) / kPi;
}

double stable_sample(const StableLawParams& params, Philox4x32& rng) {
    const double alpha = params.alpha_stable;
    const double v = kPi * (rng.uniform_open() - 0.5);
    if (near_cauchy(alpha)) return params.scale * std::tan(v);
    const double w = -std::log(rng.uniform_open());
    const double x = std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha) *
                     std::pow(std::cos((1.0 - alpha) * v) / w, (1.0 - alpha) / alpha);
    return params.scale * x;
}

StableCdfTable::StableCdfTable(double alpha, double half_width, double step)
    : alpha_(alpha), half_width_(half_width), step_(step) {
    check_alpha(alpha);
    if (!(half_width > 0.0 && step > 0.0)) throw DomainError("table needs positive width and step");
    if (near_cauchy(alpha) || alpha == 2.0) return;
    const auto n = static_cast<std::size_t>(std::ceil(half_width / step));
    step_ = half_width / static_cast<double>(n);
    cdf_.resize(n + 1);
    pdf_.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        const double x = step_ * static_cast<double>(i);
        cdf_[i] = stable_cdf_centered(alpha, x);
        pdf_[i] = stable_pdf(alpha, x);
    }
}

double StableCdfTable::operator()(double x) const {
    const double ax = std::abs(x);
    if (cdf_.empty() || !(ax < half_width_)) return stable_cdf_centered(alpha_, x);
    const double pos = ax / step_;
    const auto i = std::min(static_cast<std::size_t>(pos), cdf_.size() - 2);
    const double s = pos - static_cast<double>(i);
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double v = (2 * s3 - 3 * s2 + 1) * cdf_[i] + (s3 - 2 * s2 + s) * step_ * pdf_[i] +
                     (-2 * s3 + 3 * s2) * cdf_[i + 1] + (s3 - s2) * step_ * pdf_[i + 1];
    return std::copysign(v, x);
}

}  // namespace impactlab

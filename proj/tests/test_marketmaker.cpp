#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "impactlab/errors.hpp"
#include "impactlab/marketmaker.hpp"
#include "impactlab/rng.hpp"
#include "impactlab/specfun.hpp"
#include "support.hpp"

using namespace impactlab;
using doctest::Approx;

namespace {

// Midpoint Riemann sum over v in (-1, 1) of the binomial likelihood of n buys
// in t trades, flat prior. Returns E[G | n].
double riemann_posterior_g(std::int64_t n, std::int64_t t, int nodes = 1000000) {
    long double num = 0.0L;
    long double den = 0.0L;
    const long double h = 2.0L / nodes;
    for (int i = 0; i < nodes; ++i) {
        const long double v = -1.0L + (i + 0.5L) * h;
        const long double like = std::pow(1.0L + v, static_cast<long double>(n)) *
                                 std::pow(1.0L - v, static_cast<long double>(t - n));
        den += like;
        num += v > 0 ? like : -like;
    }
    return static_cast<double>(num / den);
}

std::int64_t buys_for_xi(double xi, std::int64_t t) {
    return static_cast<std::int64_t>(std::llround((xi * std::sqrt(static_cast<double>(t)) + static_cast<double>(t)) / 2.0));
}

}  // namespace

TEST_CASE("known-nu rule") {
    CHECK(posterior_g_known_nu(5, 10, 0.3) == 0.0);
    CHECK(posterior_g_known_nu(2, 2, 0.5) == Approx(0.8).epsilon(1e-14));
    CHECK(std::abs(posterior_g_known_nu(8, 10, 1e-9)) < 1e-8);
    CHECK(posterior_g_known_nu(100000, 100000, 0.9) == 1.0);
    CHECK_THROWS_AS(posterior_g_known_nu(1, 2, 1.0), DomainError);
}

TEST_CASE("exact posterior against brute-force summation") {
    CHECK(posterior_g_exact({10, 20}, PriorSpec::flat()) == 0.0);
    CHECK(posterior_g_exact({14, 20}, PriorSpec::flat()) == Approx(riemann_posterior_g(14, 20)).epsilon(1e-6));
    for (std::int64_t n : {0, 3, 7, 11}) {
        CHECK(std::abs(posterior_g_exact({n, 11}, PriorSpec::flat()) - riemann_posterior_g(n, 11, 200000)) < 1e-6);
    }
    const std::int64_t t = 10000;
    CHECK(posterior_g_exact({buys_for_xi(1.0, t), t}, PriorSpec::flat()) == Approx(0.6826895).epsilon(0.02));
    CHECK_THROWS_AS(posterior_g_exact({5, 0}, PriorSpec::flat()), DomainError);
    CHECK_THROWS_AS(posterior_g_exact({12, 10}, PriorSpec::flat()), DomainError);
}

TEST_CASE("flat asymptotic rule") {
    CHECK(posterior_g_flat_asym(0.0) == 0.0);
    CHECK(posterior_g_flat_asym(std::numbers::sqrt2) == Approx(0.8427008).epsilon(1e-7));
    CHECK(posterior_g_flat_asym(40.0) == 1.0);
}

TEST_CASE("cutoff asymptotic rule") {
    CHECK(posterior_g_cutoff_asym(0.0, 3.0) == 0.0);
    CHECK(std::abs(posterior_g_cutoff_asym(1.0, 10.0) - std::erf(1.0 / std::numbers::sqrt2)) < 1e-6);
    CHECK(posterior_g_cutoff_asym(1.0, 0.01) == Approx(0.005).epsilon(0.05));
}

TEST_CASE("power-law asymptotic rule") {
    for (double xi : {0.5, 1.0, 2.0}) {
        CHECK(std::abs(posterior_g_powerlaw_asym(xi, 1.0) - std::erf(xi / std::numbers::sqrt2)) < 1e-8);
    }
    const double k = 0.01;
    CHECK(posterior_g_powerlaw_asym(0.5, k) ==
          Approx(k * std::numbers::pi / 2.0 * erfi(0.5 / std::numbers::sqrt2)).epsilon(0.02));
    for (double kk : {0.3, 1.0, 2.5}) CHECK(posterior_g_powerlaw_asym(0.0, kk) == 0.0);
}

TEST_CASE("volume and Levy rules") {
    const double sigma = 1.7;
    const double t = 50.0;
    CHECK(posterior_g_volume(0.0, t, sigma, 0.5) == 0.0);
    CHECK(posterior_g_volume(sigma * std::sqrt(2.0 * t), t, sigma, 0.5) == Approx(0.8427008).epsilon(1e-7));
    CHECK(posterior_g_volume(-1e6, t, sigma, 0.9) == Approx(-1.0).epsilon(1e-12));
    // With no evidence the posterior mean is the prior mean 2p - 1.
    CHECK(posterior_g_volume(0.0, t, sigma, 0.8) == Approx(0.6).epsilon(1e-12));

    CHECK(posterior_g_levy(0.0, t, sigma, 1.5) == 0.0);
    CHECK(posterior_g_levy(t * sigma, t, sigma, 1.0) == Approx(0.5).epsilon(1e-12));
    // alpha = 2 at scale sigma is Gaussian with std sigma sqrt 2.
    for (double dv : {-30.0, -4.0, 0.5, 9.0}) {
        CHECK(std::abs(posterior_g_levy(dv, t, sigma, 2.0) - posterior_g_volume(dv, t, sigma * std::numbers::sqrt2, 0.5)) <
              1e-8);
    }
    const StableCdfTable table(1.5);
    for (double dv : {-80.0, -3.0, 7.0, 200.0}) {
        CHECK(posterior_g_levy(dv, t, sigma, table) == Approx(posterior_g_levy(dv, t, sigma, 1.5)).epsilon(1e-9));
    }
    // Same as the volume rule with sigma_v sqrt(t) replaced by Sigma_t.
    CHECK(posterior_g_correlated(2.0, std::numbers::sqrt2) == Approx(std::erf(1.0)).epsilon(1e-14));
}

TEST_CASE("leading-order quotes") {
    const auto q = quote_bid_ask(0.0, 100.0, 1.0);
    CHECK(q.spread == Approx(0.159577).epsilon(1e-4 / 0.159577));
    CHECK(q.ask_increment == Approx(-q.bid_increment));
    CHECK(quote_bid_ask(3.0, 100.0, 1.0).spread / q.spread == Approx(std::exp(-4.5)).epsilon(1e-12));
    CHECK(quote_bid_ask(0.0, 400.0, 1.0).spread == Approx(q.spread / 2.0).epsilon(1e-14));
}

TEST_CASE("exact quotes") {
    const std::int64_t t = 400;
    const auto q = quote_bid_ask_exact({200, t}, 1.0, PriorSpec::flat());
    CHECK(q.spread > 0.0);
    CHECK(q.ask_increment == Approx(-q.bid_increment).epsilon(1e-9));
    CHECK(q.spread == Approx(quote_bid_ask(0.0, t, 1.0).spread).epsilon(0.05));
    // The ask is the posterior mean after one more buy.
    const auto after_buy = posterior_g_exact({201, t + 1}, PriorSpec::flat());
    CHECK(q.ask_increment == Approx(after_buy).epsilon(1e-9));
    double previous = INFINITY;
    for (std::int64_t n = 200; n <= 260; n += 10) {
        const double s = quote_bid_ask_exact({n, t}, 1.0, PriorSpec::flat()).spread;
        CHECK(s < previous);
        previous = s;
    }
}

TEST_CASE("every rule is bounded, odd and nondecreasing") {
    const StableCdfTable table(1.2);
    std::vector<std::function<double(double)>> rules{
        [](double x) { return posterior_g_flat_asym(x); },
        [](double x) { return posterior_g_cutoff_asym(x, 40.0); },
        [](double x) { return posterior_g_cutoff_asym(x, 0.3); },
        [](double x) { return posterior_g_powerlaw_asym(x, 0.4); },
        [](double x) { return posterior_g_powerlaw_asym(x, 2.0); },
        [](double x) { return posterior_g_volume(x, 30.0, 1.0, 0.5); },
        [&](double x) { return posterior_g_levy(x, 30.0, 1.0, table); },
        [](double x) { return posterior_g_correlated(x, 2.0); },
    };
    for (const auto& f : rules) {
        double previous = -1.0;
        for (double x = -6.0; x <= 6.0; x += 0.05) {
            const double y = f(x);
            CHECK(std::abs(y) < 1.0);
            CHECK(y + f(-x) == Approx(0.0).epsilon(1e-12).scale(1.0));
            CHECK(y >= previous - 1e-14);
            previous = y;
        }
    }
    double previous = -1.0;
    for (std::int64_t n = 0; n <= 30; ++n) {
        const double y = posterior_g_exact({n, 30}, PriorSpec::power_law(0.5));
        CHECK(std::abs(y) <= 1.0);
        CHECK(y == Approx(-posterior_g_exact({30 - n, 30}, PriorSpec::power_law(0.5))).epsilon(1e-9).scale(1.0));
        CHECK(y >= previous);
        previous = y;
    }
}

TEST_CASE("exact and asymptotic flat rules agree at large t") {
    const std::int64_t t = 10000;
    for (double xi = -3.0; xi <= 3.0; xi += 0.25) {
        const std::int64_t n = buys_for_xi(xi, t);
        const double exact_xi = static_cast<double>(2 * n - t) / 100.0;
        CHECK(std::abs(posterior_g_exact({n, t}, PriorSpec::flat()) - posterior_g_flat_asym(exact_xi)) < 0.02);
    }
}

TEST_CASE("spread of the flat rule under pure noise is 1/sqrt(3)") {
    Philox4x32 rng(31, 0);
    NormalSampler normal;
    std::vector<double> ys(1000000);
    for (auto& y : ys) y = posterior_g_flat_asym(normal(rng));
    CHECK(std::sqrt(testsupport::variance(ys)) == Approx(1.0 / std::sqrt(3.0)).epsilon(0.01));
}

TEST_CASE("prior validation") {
    CHECK_THROWS_AS(PriorSpec::cutoff(0.0).validate(), DomainError);
    CHECK_THROWS_AS(PriorSpec::cutoff(1.5).validate(), DomainError);
    CHECK_THROWS_AS(PriorSpec::power_law(0.0).validate(), DomainError);
    CHECK_NOTHROW(PriorSpec::cutoff(0.2).validate());
}

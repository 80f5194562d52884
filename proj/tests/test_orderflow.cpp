#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "impactlab/errors.hpp"
#include "impactlab/orderflow.hpp"
#include "impactlab/rng.hpp"
#include "impactlab/specfun.hpp"
#include "support.hpp"

using namespace impactlab;
using doctest::Approx;

namespace {

MetaOrderSchedule sched(double participation, std::int64_t horizon, AfterMode mode = AfterMode::stop, int g = 1) {
    return {g, participation, horizon, mode};
}

// Values of cum_imbalance[t] across paths.
std::vector<double> imbalance_at(const MetaOrderSchedule& s, const FlowModel& flow, std::int64_t t_max, std::int64_t t,
                                 int n_paths, std::uint64_t seed) {
    std::vector<double> out;
    for (int i = 0; i < n_paths; ++i) {
        Philox4x32 rng(seed, static_cast<std::uint64_t>(i));
        out.push_back(gen_flow(s, flow, t_max, rng).cum_imbalance[static_cast<std::size_t>(t)]);
    }
    return out;
}

void check_mean(const std::vector<double>& xs, double expected, double n_sigma = 3.0) {
    const double se = std::sqrt(testsupport::variance(xs) / static_cast<double>(xs.size()));
    CHECK(std::abs(testsupport::mean(xs) - expected) <= n_sigma * se + 1e-12);
}

}  // namespace

TEST_CASE("Philox4x32-10 known-answer vectors") {
    using B = Philox4x32::Block;
    CHECK(Philox4x32::block(B{0, 0, 0, 0}, {0, 0}) == B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(Philox4x32::block(B{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(Philox4x32::block(B{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and distinct") {
    Philox4x32 a(5, 17);
    Philox4x32 b(5, 17);
    Philox4x32 c(5, 18);
    int same_c = 0;
    for (int i = 0; i < 100; ++i) {
        const auto x = a();
        CHECK(x == b());
        same_c += x == c();
    }
    CHECK(same_c < 3);
    Philox4x32 u(9, 0);
    NormalSampler normal;
    std::vector<double> us;
    std::vector<double> zs;
    for (int i = 0; i < 200000; ++i) {
        us.push_back(u.uniform());
        zs.push_back(normal(u));
    }
    CHECK(testsupport::mean(us) == Approx(0.5).epsilon(0.005));
    CHECK(std::abs(testsupport::mean(zs)) < 0.01);
    CHECK(testsupport::variance(zs) == Approx(1.0).epsilon(0.01));
}

TEST_CASE("schedule validation and informed direction") {
    CHECK_THROWS_AS(sched(0.1, 0).validate(), DomainError);
    CHECK_THROWS_AS(MetaOrderSchedule({2, 0.1, 10, AfterMode::stop}).validate(), DomainError);
    const auto s = sched(0.1, 10, AfterMode::reverse, -1);
    CHECK(s.informed_direction(10) == -1);
    CHECK(s.informed_direction(11) == 1);
    CHECK(sched(0.1, 10).informed_direction(11) == 0);
    CHECK(s.total_volume() == Approx(1.0));
    Philox4x32 rng(1, 1);
    CHECK_THROWS_AS(gen_unit_flow(sched(1.0, 10), 10, rng), DomainError);
}

TEST_CASE("unit flow: pure noise and linear imbalance") {
    const auto zero = imbalance_at(sched(0.0, 1000), UnitBinary{}, 1000, 1000, 4000, 11);
    check_mean(zero, 0.0);
    const auto drift = imbalance_at(sched(0.1, 1000), UnitBinary{}, 1000, 1000, 10000, 12);
    check_mean(drift, 100.0);
}

TEST_CASE("unit flow: binomial moments of n_t") {
    // n_t = (t + imbalance) / 2.
    const double nu = 0.2;
    const std::int64_t t = 300;
    auto xs = imbalance_at(sched(nu, t), UnitBinary{}, t, t, 10000, 13);
    for (auto& x : xs) x = 0.5 * (static_cast<double>(t) + x);
    check_mean(xs, (1.0 + nu) * t / 2.0);
    const double var = testsupport::variance(xs);
    const double expected = (1.0 - nu * nu) * t / 4.0;
    // Std error of a sample variance is about var * sqrt(2 / n).
    CHECK(std::abs(var - expected) <= 3.0 * expected * std::sqrt(2.0 / 10000.0));
}

TEST_CASE("stop mode keeps the imbalance at Q and reduces Var(n_t)") {
    const double nu = 0.1;
    const std::int64_t T = 200;
    auto xs = imbalance_at(sched(nu, T), UnitBinary{}, 2 * T, 2 * T, 10000, 14);
    check_mean(xs, nu * T);
    for (auto& x : xs) x = 0.5 * (2.0 * T + x);
    const double expected = 2.0 * T / 4.0 - nu * nu * T / 4.0;
    CHECK(std::abs(testsupport::variance(xs) - expected) <= 3.0 * expected * std::sqrt(2.0 / 10000.0));
}

TEST_CASE("reverse mode: E[n_t] = t/2 + G(Q - nu t/2)") {
    const double nu = 0.1;
    const std::int64_t T = 200;
    for (int g : {1, -1}) {
        const std::int64_t t = 350;
        auto xs = imbalance_at(sched(nu, T, AfterMode::reverse, g), UnitBinary{}, t, t, 8000, 15);
        for (auto& x : xs) x = 0.5 * (static_cast<double>(t) + x);
        check_mean(xs, t / 2.0 + g * (nu * T - nu * t / 2.0));
    }
}

TEST_CASE("Gaussian volume flow") {
    const auto pure = imbalance_at(sched(0.0, 400), GaussianVolume{1.0}, 400, 400, 10000, 16);
    CHECK(testsupport::variance(pure) == Approx(400.0).epsilon(0.05));
    const auto drift = imbalance_at(sched(0.1, 400), GaussianVolume{1.0}, 400, 400, 10000, 17);
    check_mean(drift, 40.0);
    const auto wide = imbalance_at(sched(0.0, 400), GaussianVolume{2.0}, 400, 400, 10000, 16);
    CHECK(std::sqrt(testsupport::variance(wide)) == Approx(2.0 * std::sqrt(testsupport::variance(pure))).epsilon(1e-12));
}

TEST_CASE("Levy volume flow") {
    // alpha = 2 at scale sigma is Gaussian with per-step std sigma sqrt 2.
    const auto levy2 = imbalance_at(sched(0.1, 100), LevyVolume{2.0, 1.0}, 100, 100, 10000, 18);
    const auto gauss = imbalance_at(sched(0.1, 100), GaussianVolume{std::sqrt(2.0)}, 100, 100, 10000, 19);
    CHECK(testsupport::ks_p_value(testsupport::ks_two_sample(levy2, gauss), 10000, 10000) > 0.01);

    auto cauchy = imbalance_at(sched(0.1, 100), LevyVolume{1.0, 1.0}, 100, 100, 10000, 20);
    std::sort(cauchy.begin(), cauchy.end());
    // Median of Delta V / t is chi; the median's std is about pi t / (2 sqrt n) / t.
    CHECK(std::abs(cauchy[5000] / 100.0 - 0.1) < 0.05);

    auto xs = imbalance_at(sched(0.0, 100), LevyVolume{1.5, 1.0}, 100, 100, 10000, 21);
    const double scale = std::pow(100.0, 1.0 / 1.5);
    for (auto& x : xs) x /= scale;
    CHECK(testsupport::ks_statistic(xs, [](double u) { return 0.5 + stable_cdf_centered(1.5, u); }) < 0.02);
}

TEST_CASE("correlated flows reproduce the target covariance") {
    {
        const FlowModel f = CorrelatedExp{1.0, 0.01};
        Philox4x32 rng(3, 0);
        const auto x = gen_correlated_noise(f, 10000, rng);
        double c0 = 0.0;
        double c1 = 0.0;
        for (std::size_t i = 0; i + 1 < x.size(); ++i) {
            c0 += x[i] * x[i];
            c1 += x[i] * x[i + 1];
        }
        CHECK(std::abs(c1 / c0) < 0.02);
    }
    {
        const FlowModel f = CorrelatedPower{1.0, 0.5};
        const std::int64_t n = 4096;
        CirculantSynthesizer synth(f, n);
        CHECK(synth.embedding_size() == 2 * std::bit_ceil(static_cast<std::size_t>(2 * n)));
        std::vector<double> acov(21, 0.0);
        std::vector<double> a;
        std::vector<double> b;
        int paths = 0;
        for (int p = 0; p < 100; ++p) {
            Philox4x32 rng(4, static_cast<std::uint64_t>(p));
            synth.sample_pair(rng, a, b);
            for (const auto* x : {&a, &b}) {
                ++paths;
                for (std::size_t lag = 0; lag <= 20; ++lag) {
                    double s = 0.0;
                    for (std::size_t i = 0; i + lag < x->size(); ++i) s += (*x)[i] * (*x)[i + lag];
                    acov[lag] += s / static_cast<double>(x->size() - lag);
                }
            }
        }
        CHECK(paths == 200);
        for (std::size_t lag = 1; lag <= 20; ++lag) {
            const double target = std::pow(1.0 + static_cast<double>(lag * lag), -0.25);
            CHECK(target == Approx(flow_autocovariance(f, static_cast<std::int64_t>(lag))));
            CHECK(std::abs(acov[lag] / paths - target) < 0.05);
        }
    }
    {
        const double tau_c = 5.0;
        const FlowModel f = CorrelatedExp{1.0, tau_c};
        const std::int64_t t = 4096;
        std::vector<double> totals;
        for (int p = 0; p < 2000; ++p) {
            Philox4x32 rng(5, static_cast<std::uint64_t>(p));
            totals.push_back(gen_correlated_flow(sched(0.0, t), f, t, rng).cum_imbalance.back());
        }
        const double predicted = 1.0 + 2.0 / (std::exp(1.0 / tau_c) - 1.0);
        CHECK(testsupport::variance(totals) / t == Approx(predicted).epsilon(0.1));
    }
}

TEST_CASE("fundamental random walk") {
    const FundamentalSpec spec{1.0, 1.0};
    const double nu = 0.1;
    std::vector<double> ft;
    for (int p = 0; p < 10000; ++p) {
        Philox4x32 rng(6, static_cast<std::uint64_t>(p));
        ft.push_back(gen_fundamental(spec, nu, 1000, rng).back());
    }
    CHECK(testsupport::variance(ft) == Approx(nu * 1000.0).epsilon(0.05));
    check_mean(ft, 0.0);
    Philox4x32 rng(7, 0);
    for (double f : gen_fundamental({1.0, 0.0}, nu, 50, rng)) CHECK(f == 0.0);
}

TEST_CASE("grid sampling has the law of the full path") {
    const std::vector<std::int64_t> grid{5, 50, 400};
    const auto s = sched(0.1, 100);
    std::vector<double> at400;
    std::vector<double> shadow400;
    GridFlow g;
    for (int p = 0; p < 10000; ++p) {
        Philox4x32 rng(8, static_cast<std::uint64_t>(p));
        sample_flow_on_grid(s, UnitBinary{}, grid, true, rng, g);
        at400.push_back(static_cast<double>(2 * g.n_buys[2] - 400));
        shadow400.push_back(static_cast<double>(2 * g.shadow_n_buys[2] - 400));
        CHECK(g.n_buys[0] <= g.n_buys[1]);
    }
    check_mean(at400, 10.0);
    check_mean(shadow400, 0.0);
    const auto full = imbalance_at(s, UnitBinary{}, 400, 400, 10000, 9);
    CHECK(testsupport::ks_p_value(testsupport::ks_two_sample(at400, full), 10000, 10000) > 0.001);

    std::vector<double> v;
    for (int p = 0; p < 10000; ++p) {
        Philox4x32 rng(10, static_cast<std::uint64_t>(p));
        sample_flow_on_grid(s, GaussianVolume{2.0}, grid, true, rng, g);
        v.push_back(g.delta_v[2]);
        CHECK(g.delta_v[2] - g.shadow_delta_v[2] == Approx(meta_drift(s, 400)));
    }
    CHECK(meta_drift(s, 400) == Approx(10.0));
    check_mean(v, 10.0);
    CHECK(testsupport::variance(v) == Approx(1600.0).epsilon(0.05));
}

TEST_CASE("identical seeds give identical paths") {
    for (const FlowModel& f : {FlowModel{UnitBinary{}}, FlowModel{GaussianVolume{1.0}}, FlowModel{LevyVolume{1.5, 1.0}},
                               FlowModel{CorrelatedPower{1.0, 0.5}}}) {
        Philox4x32 a(42, 3);
        Philox4x32 b(42, 3);
        const auto pa = gen_flow(sched(0.1, 50), f, 64, a);
        const auto pb = gen_flow(sched(0.1, 50), f, 64, b);
        CHECK(pa.signs_or_volumes == pb.signs_or_volumes);
        CHECK(pa.cum_imbalance == pb.cum_imbalance);
    }
}

TEST_CASE("path CSV") {
    Philox4x32 rng(1, 0);
    auto path = gen_unit_flow(sched(0.1, 3), 3, rng);
    std::ostringstream os;
    write_path_csv(os, path);
    const std::string s = os.str();
    CHECK(s.rfind("t,x_or_v,cum_imbalance,F\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 4);
}

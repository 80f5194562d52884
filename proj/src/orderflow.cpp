#include "impactlab/orderflow.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "impactlab/errors.hpp"
#include "impactlab/specfun.hpp"

namespace impactlab {

namespace {

// FFTW's planner is not reentrant; execution on distinct arrays is.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

std::uint64_t buy_threshold(double p) {
    // Step is a buy iff a 32-bit draw is below p * 2^32.
    return static_cast<std::uint64_t>(std::ldexp(p, 32));
}

constexpr std::uint64_t kFairThreshold = std::uint64_t{1} << 31;

void require_t_max(std::int64_t t_max, std::int64_t min = 1) {
    if (t_max < min) throw DomainError("t_max must be at least " + std::to_string(min));
}

TradePath volume_path(const MetaOrderSchedule& schedule, std::int64_t t_max, std::vector<double> noise) {
    TradePath path;
    path.meta = schedule;
    path.cum_imbalance.assign(static_cast<std::size_t>(t_max) + 1, 0.0);
    path.signs_or_volumes = std::move(noise);
    for (std::int64_t t = 1; t <= t_max; ++t) {
        auto& v = path.signs_or_volumes[static_cast<std::size_t>(t - 1)];
        v += schedule.participation * schedule.informed_direction(t);
        path.cum_imbalance[static_cast<std::size_t>(t)] = path.cum_imbalance[static_cast<std::size_t>(t - 1)] + v;
    }
    return path;
}

}  // namespace

int MetaOrderSchedule::informed_direction(std::int64_t t) const noexcept {
    if (t <= horizon) return direction;
    return after_mode == AfterMode::reverse ? -direction : 0;
}

void MetaOrderSchedule::validate() const {
    if (direction != 1 && direction != -1) throw DomainError("direction must be +1 or -1");
    if (horizon < 1) throw DomainError("horizon must be at least 1");
    if (!(participation >= 0.0) || !std::isfinite(participation)) {
        throw DomainError("participation must be finite and non-negative");
    }
}

void validate_flow(const FlowModel& flow) {
    std::visit(
        [](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (!std::is_same_v<T, UnitBinary>) {
                if (!(f.sigma_v > 0.0)) throw DomainError("sigma_v must be positive");
            }
            if constexpr (std::is_same_v<T, LevyVolume>) {
                if (!(f.alpha_stable > 0.0 && f.alpha_stable <= 2.0)) {
                    throw DomainError("alpha_stable must lie in (0, 2]");
                }
            }
            if constexpr (std::is_same_v<T, CorrelatedExp>) {
                if (!(f.tau_c > 0.0)) throw DomainError("tau_c must be positive");
            }
            if constexpr (std::is_same_v<T, CorrelatedPower>) {
                if (!(f.eta > 0.0 && f.eta <= 1.0)) throw DomainError("eta must lie in (0, 1]");
            }
        },
        flow);
}

bool is_unit_flow(const FlowModel& flow) noexcept { return std::holds_alternative<UnitBinary>(flow); }

bool is_correlated_flow(const FlowModel& flow) noexcept {
    return std::holds_alternative<CorrelatedExp>(flow) || std::holds_alternative<CorrelatedPower>(flow);
}

double flow_sigma_v(const FlowModel& flow) noexcept {
    return std::visit(
        [](const auto& f) -> double {
            if constexpr (std::is_same_v<std::decay_t<decltype(f)>, UnitBinary>) {
                return 1.0;
            } else {
                return f.sigma_v;
            }
        },
        flow);
}

double flow_autocovariance(const FlowModel& flow, std::int64_t lag) {
    const double tau = std::abs(static_cast<double>(lag));
    if (const auto* e = std::get_if<CorrelatedExp>(&flow)) {
        return e->sigma_v * e->sigma_v * std::exp(-tau / e->tau_c);
    }
    if (const auto* p = std::get_if<CorrelatedPower>(&flow)) {
        return p->sigma_v * p->sigma_v * std::pow(1.0 + tau * tau, -0.5 * p->eta);
    }
    throw DomainError("autocovariance is defined for correlated flows only");
}

void FundamentalSpec::validate() const {
    if (!(theta > 0.0)) throw DomainError("theta must be positive");
    if (!(alpha_cal >= 0.0)) throw DomainError("alpha_cal must be non-negative");
}

TradePath gen_unit_flow(const MetaOrderSchedule& schedule, std::int64_t t_max, Philox4x32& rng) {
    schedule.validate();
    require_t_max(t_max);
    if (!(schedule.participation < 1.0)) throw DomainError("nu must lie in [0, 1) for unit flows");
    const std::uint64_t up = buy_threshold(0.5 * (1.0 + schedule.participation));
    const std::uint64_t down = buy_threshold(0.5 * (1.0 - schedule.participation));
    TradePath path;
    path.meta = schedule;
    path.signs_or_volumes.resize(static_cast<std::size_t>(t_max));
    path.cum_imbalance.assign(static_cast<std::size_t>(t_max) + 1, 0.0);
    for (std::int64_t t = 1; t <= t_max; ++t) {
        const int d = schedule.informed_direction(t);
        const std::uint64_t thr = d == 0 ? kFairThreshold : (d > 0 ? up : down);
        const double x = rng() < thr ? 1.0 : -1.0;
        path.signs_or_volumes[static_cast<std::size_t>(t - 1)] = x;
        path.cum_imbalance[static_cast<std::size_t>(t)] = path.cum_imbalance[static_cast<std::size_t>(t - 1)] + x;
    }
    return path;
}

TradePath gen_volume_flow(const MetaOrderSchedule& schedule, const GaussianVolume& flow, std::int64_t t_max,
                          Philox4x32& rng) {
    schedule.validate();
    validate_flow(flow);
    require_t_max(t_max);
    NormalSampler normal;
    std::vector<double> noise(static_cast<std::size_t>(t_max));
    for (auto& v : noise) v = flow.sigma_v * normal(rng);
    return volume_path(schedule, t_max, std::move(noise));
}

TradePath gen_levy_flow(const MetaOrderSchedule& schedule, const LevyVolume& flow, std::int64_t t_max,
                        Philox4x32& rng) {
    schedule.validate();
    validate_flow(flow);
    require_t_max(t_max);
    const StableLawParams params{flow.alpha_stable, flow.sigma_v};
    std::vector<double> noise(static_cast<std::size_t>(t_max));
    for (auto& v : noise) v = stable_sample(params, rng);
    return volume_path(schedule, t_max, std::move(noise));
}

std::vector<double> gen_correlated_noise(const FlowModel& flow, std::int64_t t_max, Philox4x32& rng) {
    const CirculantSynthesizer synth(flow, t_max);
    std::vector<double> a;
    std::vector<double> b;
    synth.sample_pair(rng, a, b);
    return a;
}

TradePath gen_correlated_flow(const MetaOrderSchedule& schedule, const FlowModel& flow, std::int64_t t_max,
                              Philox4x32& rng) {
    schedule.validate();
    return volume_path(schedule, t_max, gen_correlated_noise(flow, t_max, rng));
}

std::vector<double> gen_fundamental(const FundamentalSpec& spec, double nu, std::int64_t t_max, Philox4x32& rng) {
    spec.validate();
    require_t_max(t_max);
    if (!(nu > 0.0 && nu < 1.0)) throw DomainError("nu must lie in (0,1)");
    const double step_sd = spec.alpha_cal * spec.theta * std::sqrt(nu);
    NormalSampler normal;
    std::vector<double> f(static_cast<std::size_t>(t_max) + 1, 0.0);
    for (std::size_t t = 1; t < f.size(); ++t) f[t] = f[t - 1] + step_sd * normal(rng);
    return f;
}

TradePath gen_flow(const MetaOrderSchedule& schedule, const FlowModel& flow, std::int64_t t_max, Philox4x32& rng) {
    if (is_unit_flow(flow)) return gen_unit_flow(schedule, t_max, rng);
    if (const auto* g = std::get_if<GaussianVolume>(&flow)) return gen_volume_flow(schedule, *g, t_max, rng);
    if (const auto* l = std::get_if<LevyVolume>(&flow)) return gen_levy_flow(schedule, *l, t_max, rng);
    return gen_correlated_flow(schedule, flow, t_max, rng);
}

CirculantSynthesizer::CirculantSynthesizer(const FlowModel& flow, std::int64_t t_max) : t_max_(t_max) {
    if (!is_correlated_flow(flow)) throw DomainError("circulant synthesis needs a correlated flow model");
    validate_flow(flow);
    require_t_max(t_max, 2);
    const std::size_t m = 2 * std::bit_ceil(static_cast<std::size_t>(2 * t_max));

    std::vector<std::complex<double>> row(m);
    for (std::size_t j = 0; j < m; ++j) {
        const auto lag = static_cast<std::int64_t>(std::min(j, m - j));
        row[j] = flow_autocovariance(flow, lag);
    }
    std::vector<std::complex<double>> eigen(m);
    {
        std::lock_guard lock(fftw_planner_mutex());
        auto* in = reinterpret_cast<fftw_complex*>(row.data());
        auto* out = reinterpret_cast<fftw_complex*>(eigen.data());
        fftw_plan once = fftw_plan_dft_1d(static_cast<int>(m), in, out, FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_execute(once);
        fftw_destroy_plan(once);
        plan_ = fftw_plan_dft_1d(static_cast<int>(m), in, out, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    sqrt_eigen_.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
        double lambda = eigen[k].real();
        if (lambda < 0.0) {
            if (lambda < -1e-10) {
                throw EmbeddingError("circulant eigenvalue " + std::to_string(lambda) + " at index " +
                                     std::to_string(k) + " below tolerance");
            }
            lambda = 0.0;
        }
        sqrt_eigen_[k] = std::sqrt(lambda / static_cast<double>(m));
    }
}

CirculantSynthesizer::~CirculantSynthesizer() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_));
}

void CirculantSynthesizer::sample_pair(Philox4x32& rng, std::vector<double>& a, std::vector<double>& b) const {
    const std::size_t m = sqrt_eigen_.size();
    thread_local std::vector<std::complex<double>> in;
    thread_local std::vector<std::complex<double>> out;
    in.resize(m);
    out.resize(m);
    NormalSampler normal;
    for (std::size_t k = 0; k < m; ++k) {
        const double re = normal(rng);
        const double im = normal(rng);
        in[k] = {sqrt_eigen_[k] * re, sqrt_eigen_[k] * im};
    }
    fftw_execute_dft(static_cast<fftw_plan>(plan_), reinterpret_cast<fftw_complex*>(in.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    const auto n = static_cast<std::size_t>(t_max_);
    a.resize(n);
    b.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        a[j] = out[j].real();
        b[j] = out[j].imag();
    }
}

double meta_drift(const MetaOrderSchedule& s, std::int64_t t) noexcept {
    const double during = static_cast<double>(std::min(t, s.horizon)) * s.direction;
    const double after = s.after_mode == AfterMode::reverse
                             ? -static_cast<double>(std::max<std::int64_t>(0, t - s.horizon)) * s.direction
                             : 0.0;
    return s.participation * (during + after);
}

void sample_flow_on_grid(const MetaOrderSchedule& schedule, const FlowModel& flow,
                         std::span<const std::int64_t> grid, bool with_shadow, Philox4x32& rng, GridFlow& out) {
    const std::size_t n = grid.size();
    if (is_unit_flow(flow)) {
        const std::uint64_t up = buy_threshold(0.5 * (1.0 + schedule.participation));
        const std::uint64_t down = buy_threshold(0.5 * (1.0 - schedule.participation));
        out.n_buys.resize(n);
        out.shadow_n_buys.resize(with_shadow ? n : 0);
        std::int64_t buys = 0;
        std::int64_t shadow = 0;
        std::int64_t t = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (; t < grid[i];) {
                ++t;
                const int d = schedule.informed_direction(t);
                const std::uint64_t thr = d == 0 ? kFairThreshold : (d > 0 ? up : down);
                const std::uint64_t u = rng();
                buys += u < thr;
                shadow += u < kFairThreshold;
            }
            out.n_buys[i] = buys;
            if (with_shadow) out.shadow_n_buys[i] = shadow;
        }
        return;
    }

    out.delta_v.resize(n);
    out.shadow_delta_v.resize(with_shadow ? n : 0);
    double noise = 0.0;
    std::int64_t prev = 0;
    NormalSampler normal;
    const auto* gauss = std::get_if<GaussianVolume>(&flow);
    const auto* levy = std::get_if<LevyVolume>(&flow);
    if (gauss == nullptr && levy == nullptr) throw DomainError("grid sampling supports unit, Gaussian and Levy flows");
    for (std::size_t i = 0; i < n; ++i) {
        const auto dt = static_cast<double>(grid[i] - prev);
        prev = grid[i];
        if (gauss != nullptr) {
            noise += gauss->sigma_v * std::sqrt(dt) * normal(rng);
        } else {
            // Stability: a sum of dt unit-step draws is one draw at scale dt^(1/alpha).
            const StableLawParams p{levy->alpha_stable, levy->sigma_v * std::pow(dt, 1.0 / levy->alpha_stable)};
            noise += stable_sample(p, rng);
        }
        out.delta_v[i] = noise + meta_drift(schedule, grid[i]);
        if (with_shadow) out.shadow_delta_v[i] = noise;
    }
}

void sample_fundamental_on_grid(const FundamentalSpec& spec, double nu, std::span<const std::int64_t> grid,
                                Philox4x32& rng, std::vector<double>& out) {
    const double step_sd = spec.alpha_cal * spec.theta * std::sqrt(nu);
    NormalSampler normal;
    out.resize(grid.size());
    double f = 0.0;
    std::int64_t prev = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        f += step_sd * std::sqrt(static_cast<double>(grid[i] - prev)) * normal(rng);
        prev = grid[i];
        out[i] = f;
    }
}

void write_path_csv(std::ostream& os, const TradePath& path) {
    os << "t,x_or_v,cum_imbalance,F\n";
    os.precision(17);
    for (std::size_t t = 1; t < path.cum_imbalance.size(); ++t) {
        os << t << ',' << path.signs_or_volumes[t - 1] << ',' << path.cum_imbalance[t] << ',';
        if (!path.fundamental.empty()) os << path.fundamental[t];
        os << '\n';
    }
}

}  // namespace impactlab

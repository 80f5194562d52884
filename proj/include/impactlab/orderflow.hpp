#pragma once

// Order flows carrying one meta-order, plus the fundamental-value process.
//
// Time is 1-based: step t in [1, t_max] is the t-th trade. Arrays indexed by
// time (cumulative imbalance, fundamental) have length t_max + 1 with entry 0
// equal to zero.

#include <complex>
#include <cstdint>
#include <memory>
#include <mutex>
#include <ostream>
#include <span>
#include <variant>
#include <vector>

#include "impactlab/rng.hpp"

namespace impactlab {

enum class AfterMode { stop, reverse };

struct MetaOrderSchedule {
    int direction = 1;           // G
    double participation = 0.1;  // nu for unit flows, trade speed chi for volume flows
    std::int64_t horizon = 1;    // T
    AfterMode after_mode = AfterMode::stop;

    bool operator==(const MetaOrderSchedule&) const = default;
    double total_volume() const noexcept { return participation * static_cast<double>(horizon); }
    /// Informed direction at step t: G before T, then 0 (stop) or -G (reverse).
    int informed_direction(std::int64_t t) const noexcept;
    void validate() const;
};

struct UnitBinary {
    bool operator==(const UnitBinary&) const = default;
};
struct GaussianVolume {
    double sigma_v = 1.0;

    bool operator==(const GaussianVolume&) const = default;
};
struct LevyVolume {
    double alpha_stable = 1.5;
    double sigma_v = 1.0;

    bool operator==(const LevyVolume&) const = default;
};
struct CorrelatedExp {
    double sigma_v = 1.0;
    double tau_c = 1.0;

    bool operator==(const CorrelatedExp&) const = default;
};
struct CorrelatedPower {
    double sigma_v = 1.0;
    double eta = 0.5;

    bool operator==(const CorrelatedPower&) const = default;
};

using FlowModel = std::variant<UnitBinary, GaussianVolume, LevyVolume, CorrelatedExp, CorrelatedPower>;

void validate_flow(const FlowModel& flow);
bool is_unit_flow(const FlowModel& flow) noexcept;
bool is_correlated_flow(const FlowModel& flow) noexcept;
double flow_sigma_v(const FlowModel& flow) noexcept;

/// Noise autocovariance at lag tau for the correlated models.
double flow_autocovariance(const FlowModel& flow, std::int64_t lag);

struct FundamentalSpec {
    double theta = 1.0;
    double alpha_cal = 1.0;

    void validate() const;
};

struct TradePath {
    std::vector<double> signs_or_volumes;  // length t_max, entry t-1 is step t
    std::vector<double> cum_imbalance;     // length t_max + 1
    std::vector<double> fundamental;       // length t_max + 1, empty when not generated
    MetaOrderSchedule meta;
};

TradePath gen_unit_flow(const MetaOrderSchedule& schedule, std::int64_t t_max, Philox4x32& rng);
TradePath gen_volume_flow(const MetaOrderSchedule& schedule, const GaussianVolume& flow, std::int64_t t_max,
                          Philox4x32& rng);
TradePath gen_levy_flow(const MetaOrderSchedule& schedule, const LevyVolume& flow, std::int64_t t_max,
                        Philox4x32& rng);
std::vector<double> gen_correlated_noise(const FlowModel& flow, std::int64_t t_max, Philox4x32& rng);
/// Correlated noise plus the meta-order drift.
TradePath gen_correlated_flow(const MetaOrderSchedule& schedule, const FlowModel& flow, std::int64_t t_max,
                              Philox4x32& rng);
/// F_0 = 0 followed by t_max Gaussian steps of std alpha_cal * theta * sqrt(nu).
std::vector<double> gen_fundamental(const FundamentalSpec& spec, double nu, std::int64_t t_max, Philox4x32& rng);

/// Dispatches on the flow model.
TradePath gen_flow(const MetaOrderSchedule& schedule, const FlowModel& flow, std::int64_t t_max, Philox4x32& rng);

/// Stationary Gaussian sequences by circulant embedding. The spectrum is
/// computed once; each draw costs one complex FFT and yields two independent
/// sequences (real and imaginary parts). Safe to share across threads.
class CirculantSynthesizer {
  public:
    CirculantSynthesizer(const FlowModel& flow, std::int64_t t_max);
    ~CirculantSynthesizer();
    CirculantSynthesizer(const CirculantSynthesizer&) = delete;
    CirculantSynthesizer& operator=(const CirculantSynthesizer&) = delete;

    /// Fills a and b (each resized to t_max) with two independent sequences.
    void sample_pair(Philox4x32& rng, std::vector<double>& a, std::vector<double>& b) const;

    std::int64_t t_max() const noexcept { return t_max_; }
    std::size_t embedding_size() const noexcept { return sqrt_eigen_.size(); }

  private:
    std::int64_t t_max_;
    std::vector<double> sqrt_eigen_;  // sqrt(lambda_k / M)
    void* plan_ = nullptr;            // fftw_plan
};

/// Flow sampled only at increasing record times (exact in law at those times).
/// Unit flows fill n_buys; volume flows fill delta_v. Shadow entries repeat the
/// draw with the meta-order switched off (same uniforms or same noise).
struct GridFlow {
    std::vector<std::int64_t> n_buys;
    std::vector<std::int64_t> shadow_n_buys;
    std::vector<double> delta_v;
    std::vector<double> shadow_delta_v;
};

/// Unit, Gaussian or Levy flows. Correlated flows need the full path; use
/// CirculantSynthesizer and accumulate instead.
void sample_flow_on_grid(const MetaOrderSchedule& schedule, const FlowModel& flow,
                         std::span<const std::int64_t> grid, bool with_shadow, Philox4x32& rng, GridFlow& out);

/// Drift part of Delta V at time t: chi * sum of informed directions up to t.
double meta_drift(const MetaOrderSchedule& schedule, std::int64_t t) noexcept;

/// Fundamental at the record times (exact in law).
void sample_fundamental_on_grid(const FundamentalSpec& spec, double nu, std::span<const std::int64_t> grid,
                                Philox4x32& rng, std::vector<double>& out);

/// CSV with columns t,x_or_v,cum_imbalance,F (F empty when not generated).
void write_path_csv(std::ostream& os, const TradePath& path);

}  // namespace impactlab

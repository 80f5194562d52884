#include "impactlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <thread>

#include "impactlab/errors.hpp"
#include "impactlab/rng.hpp"
#include "impactlab/specfun.hpp"

namespace impactlab {

namespace {

constexpr int kMaxPerDecade = 48;
constexpr int kDefaultPerDecade = 16;

double parse_number(std::string_view s, std::string_view what) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end) throw DomainError("record grid: bad " + std::string(what) + " '" + std::string(s) + "'");
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

int resolve_workers(int requested, std::size_t n_blocks) {
    int w = requested;
    if (w <= 0) w = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(w), std::max<std::size_t>(n_blocks, 1)));
}

// Runs fn(worker, block, first, count) over all blocks. Exceptions are
// collected per block and the one from the lowest block is rethrown, so
// the reported failure does not depend on scheduling.
template <class MakeWorker>
void for_each_block(std::int64_t n_paths, int workers, MakeWorker make_worker) {
    const auto total = static_cast<std::uint64_t>(n_paths);
    const std::size_t n_blocks = static_cast<std::size_t>((total + kBlockPaths - 1) / kBlockPaths);
    const int n_workers = resolve_workers(workers, n_blocks);
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::size_t err_block = std::numeric_limits<std::size_t>::max();
    std::exception_ptr err;

    auto body = [&] {
        try {
            auto run = make_worker();
            for (;;) {
                const std::size_t b = next.fetch_add(1);
                if (b >= n_blocks) break;
                const std::uint64_t first = b * kBlockPaths;
                const auto count = static_cast<std::size_t>(std::min<std::uint64_t>(kBlockPaths, total - first));
                try {
                    run(b, first, count);
                } catch (...) {
                    std::lock_guard lock(err_mutex);
                    if (b < err_block) {
                        err_block = b;
                        err = std::current_exception();
                    }
                    return;
                }
            }
        } catch (...) {
            std::lock_guard lock(err_mutex);
            if (!err) err = std::current_exception();
        }
    };

    if (n_workers == 1) {
        body();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(n_workers));
        for (int i = 0; i < n_workers; ++i) threads.emplace_back(body);
        for (auto& th : threads) th.join();
    }
    if (err) std::rethrow_exception(err);
}

// Wraps a per-path failure with its index.
template <class F>
void guarded_path(std::uint64_t path, F&& f) {
    try {
        f();
    } catch (const PathError&) {
        throw;
    } catch (const std::exception& e) {
        throw PathError(path, e.what());
    }
}

// Lazily filled posterior integrals per (grid point, n).
class ExactCache {
  public:
    ExactCache(const PriorSpec& prior, std::span<const std::int64_t> grid)
        : prior_(prior), grid_(grid.begin(), grid.end()), cells_(grid.size()) {}

    const PosteriorIntegrals& get(std::size_t j, std::int64_t n) {
        auto& row = cells_[j];
        if (row.empty()) {
            row.assign(static_cast<std::size_t>(grid_[j] + 1),
                       PosteriorIntegrals{std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0, 0.0});
        }
        auto& cell = row[static_cast<std::size_t>(n)];
        if (std::isnan(cell.i_plus)) cell = posterior_integrals({n, grid_[j]}, prior_);
        return cell;
    }

  private:
    PriorSpec prior_;
    std::vector<std::int64_t> grid_;
    std::vector<std::vector<PosteriorIntegrals>> cells_;
};

PricingRule resolve_rule(const ExperimentConfig& c) {
    if (c.pricing_rule != PricingRule::automatic) return c.pricing_rule;
    return std::visit(
        [](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, UnitBinary>) return PricingRule::exact;
            else if constexpr (std::is_same_v<T, GaussianVolume>) return PricingRule::volume;
            else if constexpr (std::is_same_v<T, LevyVolume>) return PricingRule::levy;
            else return PricingRule::correlated;
        },
        c.market.flow);
}

bool rule_fits_flow(PricingRule r, const FlowModel& flow) {
    switch (r) {
        case PricingRule::automatic: return true;
        case PricingRule::exact:
        case PricingRule::flat_asym:
        case PricingRule::cutoff_asym:
        case PricingRule::powerlaw_asym:
        case PricingRule::known_nu: return is_unit_flow(flow);
        case PricingRule::volume: return std::holds_alternative<GaussianVolume>(flow);
        case PricingRule::levy: return std::holds_alternative<LevyVolume>(flow);
        case PricingRule::correlated: return is_correlated_flow(flow);
    }
    return false;
}

double participation(const MarketConfig& m) { return is_unit_flow(m.flow) ? m.nu : m.chi; }

// Prices E[G | data] from the state at grid point j. One instance per worker.
class Pricer {
  public:
    Pricer(const ExperimentConfig& c, std::span<const std::int64_t> grid, const StableCdfTable* table)
        : rule_(resolve_rule(c)), market_(c.market), grid_(grid.begin(), grid.end()), table_(table) {
        if (rule_ == PricingRule::exact) cache_.emplace(c.market.prior, grid);
        if (rule_ == PricingRule::correlated) {
            for (auto t : grid_) sigma_t_.push_back(correlated_sigma(t, c.market.flow));
        }
    }

    double unit(std::size_t j, std::int64_t n) {
        const std::int64_t t = grid_[j];
        const double xi = static_cast<double>(2 * n - t) / std::sqrt(static_cast<double>(t));
        switch (rule_) {
            case PricingRule::exact: return cache_->get(j, n).e_g();
            case PricingRule::flat_asym: return posterior_g_flat_asym(xi);
            case PricingRule::cutoff_asym:
                return posterior_g_cutoff_asym(xi, market_.prior.nu_bar * std::sqrt(static_cast<double>(t)));
            case PricingRule::powerlaw_asym: return posterior_g_powerlaw_asym(xi, market_.prior.k);
            case PricingRule::known_nu: return posterior_g_known_nu(n, t, market_.nu);
            default: throw DomainError("pricing rule does not apply to unit flows");
        }
    }

    double volume(std::size_t j, double delta_v) {
        const auto t = static_cast<double>(grid_[j]);
        const double sigma_v = flow_sigma_v(market_.flow);
        switch (rule_) {
            case PricingRule::volume: return posterior_g_volume(delta_v, t, sigma_v, market_.p_up);
            case PricingRule::levy: return posterior_g_levy(delta_v, t, sigma_v, *table_);
            case PricingRule::correlated: return posterior_g_correlated(delta_v, sigma_t_[j]);
            default: throw DomainError("pricing rule does not apply to volume flows");
        }
    }

  private:
    PricingRule rule_;
    MarketConfig market_;
    std::vector<std::int64_t> grid_;
    const StableCdfTable* table_;
    std::optional<ExactCache> cache_;
    std::vector<double> sigma_t_;
};

int draw_direction(const MarketConfig& m, Philox4x32& rng) {
    if (!m.random_direction) return m.direction;
    return rng.uniform() < m.p_up ? 1 : -1;
}

struct BlockMoments {
    std::vector<double> mean;
    std::vector<double> m2;
    std::int64_t n = 0;
};

// Two-pass moments of one block, rows are paths.
BlockMoments block_moments(std::span<const double> values, std::size_t count, std::size_t n_obs) {
    BlockMoments b;
    b.n = static_cast<std::int64_t>(count);
    b.mean.assign(n_obs, 0.0);
    b.m2.assign(n_obs, 0.0);
    for (std::size_t j = 0; j < n_obs; ++j) {
        // Neumaier-compensated sum.
        double s = 0.0;
        double c = 0.0;
        for (std::size_t p = 0; p < count; ++p) {
            const double x = values[p * n_obs + j];
            const double t = s + x;
            c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
            s = t;
        }
        const double mean = (s + c) / static_cast<double>(count);
        double m2 = 0.0;
        for (std::size_t p = 0; p < count; ++p) {
            const double d = values[p * n_obs + j] - mean;
            m2 += d * d;
        }
        b.mean[j] = mean;
        b.m2[j] = m2;
    }
    return b;
}

ImpactCurve to_curve(const EnsembleStats& s, std::span<const std::int64_t> grid, double rate, bool cv) {
    ImpactCurve c;
    c.grid.assign(grid.begin(), grid.end());
    c.n_paths = s.n;
    c.control_variate = cv;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        c.q.push_back(rate * static_cast<double>(grid[j]));
        c.mean_dp.push_back(s.mean[j]);
        c.var_dp.push_back(s.var[j]);
        c.std_err.push_back(std::sqrt(s.var[j] / static_cast<double>(s.n)));
    }
    return c;
}

std::unique_ptr<StableCdfTable> maybe_table(const ExperimentConfig& c) {
    if (const auto* levy = std::get_if<LevyVolume>(&c.market.flow)) {
        if (resolve_rule(c) == PricingRule::levy) return std::make_unique<StableCdfTable>(levy->alpha_stable);
    }
    return nullptr;
}

// Per-path price observables on the grid: theta E[G|data] (+ F_t), minus the
// shadow price when the control variate is on.
BlockRunner make_price_runner(const ExperimentConfig& c, std::span<const std::int64_t> grid,
                              const StableCdfTable* table, const std::shared_ptr<CirculantSynthesizer>& synth) {
    struct State {
        ExperimentConfig config;
        std::vector<std::int64_t> grid;
        Pricer pricer;
        GridFlow flow;
        std::vector<double> fundamental;
        std::vector<double> noise_a;
        std::vector<double> noise_b;
        std::shared_ptr<CirculantSynthesizer> synth;
    };
    auto st = std::make_shared<State>(State{c, {grid.begin(), grid.end()}, Pricer(c, grid, table), {}, {}, {}, {}, synth});
    return [st](std::uint64_t first, std::size_t count, std::span<double> out) {
        const auto& cfg = st->config;
        const auto& m = cfg.market;
        const std::size_t n_obs = st->grid.size();
        const bool cv = cfg.control_variate;
        const bool unit = is_unit_flow(m.flow);
        const double theta = m.theta;
        const FundamentalSpec fspec = m.fundamental();

        auto add_fundamental = [&](Philox4x32& rng, double* row) {
            if (!m.include_fundamental) return;
            sample_fundamental_on_grid(fspec, m.nu, st->grid, rng, st->fundamental);
            // Identical F enters the shadow price, so it cancels under the control variate.
            if (!cv) {
                for (std::size_t j = 0; j < n_obs; ++j) row[j] += st->fundamental[j];
            }
        };

        if (st->synth) {
            // Correlated flows: one FFT gives the noise of two consecutive paths.
            for (std::size_t p = 0; p < count; p += 2) {
                const std::uint64_t path = first + p;
                guarded_path(path, [&] {
                    Philox4x32 rng(cfg.master_seed, path);
                    MetaOrderSchedule sched[2] = {m.schedule(cfg.t_max), m.schedule(cfg.t_max)};
                    sched[0].direction = draw_direction(m, rng);
                    sched[1].direction = draw_direction(m, rng);
                    st->synth->sample_pair(rng, st->noise_a, st->noise_b);
                    for (std::size_t h = 0; h < 2 && p + h < count; ++h) {
                        const auto& noise = h == 0 ? st->noise_a : st->noise_b;
                        double* row = out.data() + (p + h) * n_obs;
                        double acc = 0.0;
                        std::int64_t t = 0;
                        for (std::size_t j = 0; j < n_obs; ++j) {
                            for (; t < st->grid[j]; ++t) acc += noise[static_cast<std::size_t>(t)];
                            const double dv = acc + meta_drift(sched[h], st->grid[j]);
                            row[j] = theta * st->pricer.volume(j, dv);
                            if (cv) row[j] -= theta * st->pricer.volume(j, acc);
                        }
                        add_fundamental(rng, row);
                    }
                });
            }
            return;
        }

        for (std::size_t p = 0; p < count; ++p) {
            const std::uint64_t path = first + p;
            guarded_path(path, [&] {
                Philox4x32 rng(cfg.master_seed, path);
                MetaOrderSchedule sched = m.schedule(cfg.t_max);
                sched.direction = draw_direction(m, rng);
                sample_flow_on_grid(sched, m.flow, st->grid, cv, rng, st->flow);
                double* row = out.data() + p * n_obs;
                for (std::size_t j = 0; j < n_obs; ++j) {
                    if (unit) {
                        row[j] = theta * st->pricer.unit(j, st->flow.n_buys[j]);
                        if (cv) row[j] -= theta * st->pricer.unit(j, st->flow.shadow_n_buys[j]);
                    } else {
                        row[j] = theta * st->pricer.volume(j, st->flow.delta_v[j]);
                        if (cv) row[j] -= theta * st->pricer.volume(j, st->flow.shadow_delta_v[j]);
                    }
                }
                add_fundamental(rng, row);
            });
        }
    };
}

void require_unit(const ExperimentConfig& c, std::string_view what) {
    if (!is_unit_flow(c.market.flow)) throw DomainError(std::string(what) + " needs a unit flow");
    if (c.control_variate) throw DomainError("control variate applies only to price observables");
}

}  // namespace

std::string_view to_string(PricingRule r) noexcept {
    switch (r) {
        case PricingRule::automatic: return "auto";
        case PricingRule::exact: return "exact";
        case PricingRule::flat_asym: return "flat_asym";
        case PricingRule::cutoff_asym: return "cutoff_asym";
        case PricingRule::powerlaw_asym: return "powerlaw_asym";
        case PricingRule::known_nu: return "known_nu";
        case PricingRule::volume: return "volume";
        case PricingRule::levy: return "levy";
        case PricingRule::correlated: return "correlated";
    }
    return "?";
}

PricingRule parse_pricing_rule(std::string_view s) {
    for (auto r : {PricingRule::automatic, PricingRule::exact, PricingRule::flat_asym, PricingRule::cutoff_asym,
                   PricingRule::powerlaw_asym, PricingRule::known_nu, PricingRule::volume, PricingRule::levy,
                   PricingRule::correlated}) {
        if (to_string(r) == s) return r;
    }
    throw DomainError("unknown pricing rule '" + std::string(s) + "'");
}

MetaOrderSchedule MarketConfig::schedule(std::int64_t t_max) const {
    return {direction, participation(*this), horizon > 0 ? horizon : t_max, after_mode};
}

void ExperimentConfig::validate() const {
    const auto& m = market;
    if (n_paths < 1) throw DomainError("n_paths must be at least 1");
    if (t_max < 1) throw DomainError("t_max must be at least 1");
    if (workers < 0) throw DomainError("workers must be non-negative");
    if (n_bins < 2) throw DomainError("n_bins must be at least 2");
    if (m.direction != 1 && m.direction != -1) throw DomainError("direction must be +1 or -1");
    if (m.horizon < 0) throw DomainError("horizon must be non-negative");
    if (!(m.theta > 0.0)) throw DomainError("theta must be positive");
    if (!(m.alpha_cal >= 0.0)) throw DomainError("alpha_cal must be non-negative");
    if (!(m.p_up > 0.0 && m.p_up < 1.0)) throw DomainError("p_up must lie in (0,1)");
    validate_flow(m.flow);
    m.prior.validate();
    if (is_unit_flow(m.flow)) {
        // nu = 0 is admitted as the null experiment (no meta-order).
        if (!(m.nu >= 0.0 && m.nu < 1.0)) throw DomainError("nu must lie in (0,1) or be 0");
        if (m.p_up != 0.5) throw DomainError("p_up other than 0.5 needs a Gaussian volume flow");
    } else {
        if (!(m.chi > 0.0) || !std::isfinite(m.chi)) throw DomainError("chi must be positive");
        if (m.p_up != 0.5 && !std::holds_alternative<GaussianVolume>(m.flow))
            throw DomainError("p_up other than 0.5 needs a Gaussian volume flow");
    }
    if (m.include_fundamental && !(m.nu >= 0.0 && m.nu < 1.0)) throw DomainError("nu must lie in (0,1) or be 0");
    if (!rule_fits_flow(pricing_rule, m.flow))
        throw DomainError("pricing rule '" + std::string(to_string(pricing_rule)) + "' does not fit the flow model");
    if (pricing_rule == PricingRule::cutoff_asym && m.prior.kind != PriorSpec::Kind::cutoff)
        throw DomainError("pricing rule cutoff_asym needs a cutoff prior");
    if (pricing_rule == PricingRule::powerlaw_asym && m.prior.kind != PriorSpec::Kind::power_law)
        throw DomainError("pricing rule powerlaw_asym needs a power-law prior");
    m.schedule(t_max).validate();
    parse_record_grid(record_grid, t_max);
}

std::vector<std::int64_t> parse_record_grid(std::string_view spec, std::int64_t t_max) {
    if (t_max < 1) throw DomainError("t_max must be at least 1");
    std::vector<std::int64_t> out;
    auto push = [&](double v) {
        const auto t = static_cast<std::int64_t>(std::llround(v));
        if (out.empty() || t > out.back()) out.push_back(t);
    };
    if (spec.empty() || spec == "auto") spec = {};
    if (spec.empty() || spec.find(':') != std::string_view::npos) {
        double lo = 1.0;
        double hi = static_cast<double>(t_max);
        std::string_view mode = "log";
        double param = 0.0;
        if (!spec.empty()) {
            const auto parts = split(spec, ':');
            if (parts.size() < 2 || parts.size() > 4) throw DomainError("record grid must be lo:hi:log[:n] or lo:hi:lin[:step]");
            lo = parse_number(parts[0], "lower end");
            hi = parse_number(parts[1], "upper end");
            if (parts.size() >= 3) mode = parts[2];
            if (parts.size() == 4) param = parse_number(parts[3], "spacing");
        }
        if (!(lo >= 1.0) || !(hi >= lo)) throw DomainError("record grid needs 1 <= lo <= hi");
        if (mode == "log") {
            const double per_decade = param > 0.0 ? param : kDefaultPerDecade;
            if (per_decade > kMaxPerDecade) throw DomainError("record grid allows at most 48 points per decade");
            for (int i = 0;; ++i) {
                const double v = lo * std::pow(10.0, i / per_decade);
                if (v > hi * (1.0 + 1e-12)) break;
                push(v);
            }
            push(hi);
        } else if (mode == "lin") {
            const double step = param > 0.0 ? param : 1.0;
            for (double v = lo; v <= hi + 1e-9; v += step) push(v);
        } else {
            throw DomainError("record grid mode must be log or lin");
        }
    } else {
        for (auto part : split(spec, ',')) {
            const double v = parse_number(part, "point");
            const auto t = static_cast<std::int64_t>(std::llround(v));
            if (!out.empty() && t <= out.back()) throw DomainError("record grid points must increase");
            out.push_back(t);
        }
    }
    if (out.empty()) throw DomainError("record grid is empty");
    if (out.front() < 1 || out.back() > t_max) throw DomainError("record grid points must lie in [1, t_max]");
    return out;
}

EnsembleStats simulate_ensemble(std::int64_t n_paths, std::size_t n_obs, int workers,
                                const std::function<BlockRunner()>& make_runner) {
    if (n_paths < 1) throw DomainError("n_paths must be at least 1");
    const std::size_t n_blocks = (static_cast<std::size_t>(n_paths) + kBlockPaths - 1) / kBlockPaths;
    std::vector<BlockMoments> blocks(n_blocks);
    for_each_block(n_paths, workers, [&] {
        auto runner = make_runner();
        auto buffer = std::make_shared<std::vector<double>>(kBlockPaths * n_obs);
        return [runner, buffer, n_obs, &blocks](std::size_t b, std::uint64_t first, std::size_t count) {
            std::span<double> out(buffer->data(), count * n_obs);
            runner(first, count, out);
            blocks[b] = block_moments(out, count, n_obs);
        };
    });

    // Chan et al. pairwise update, always in block order.
    EnsembleStats s;
    s.mean.assign(n_obs, 0.0);
    std::vector<double> m2(n_obs, 0.0);
    for (const auto& b : blocks) {
        const auto na = static_cast<double>(s.n);
        const auto nb = static_cast<double>(b.n);
        const double n = na + nb;
        for (std::size_t j = 0; j < n_obs; ++j) {
            const double delta = b.mean[j] - s.mean[j];
            s.mean[j] += delta * nb / n;
            m2[j] += b.m2[j] + delta * delta * na * nb / n;
        }
        s.n += b.n;
    }
    s.var.resize(n_obs);
    for (std::size_t j = 0; j < n_obs; ++j) s.var[j] = s.n > 1 ? m2[j] / static_cast<double>(s.n - 1) : 0.0;
    return s;
}

ImpactCurve run_impact_experiment(const ExperimentConfig& config) {
    config.validate();
    const auto grid = parse_record_grid(config.record_grid, config.t_max);
    const auto table = maybe_table(config);
    std::shared_ptr<CirculantSynthesizer> synth;
    if (is_correlated_flow(config.market.flow))
        synth = std::make_shared<CirculantSynthesizer>(config.market.flow, config.t_max);
    const auto stats = simulate_ensemble(config.n_paths, grid.size(), config.workers,
                                         [&] { return make_price_runner(config, grid, table.get(), synth); });
    return to_curve(stats, grid, participation(config.market), config.control_variate);
}

ImpactCurve run_variance_experiment(const ExperimentConfig& config) {
    ExperimentConfig c = config;
    c.market.include_fundamental = true;
    c.control_variate = false;
    return run_impact_experiment(c);
}

ImpactCurve run_estimator_experiment(const ExperimentConfig& config, EstimatorMethod method) {
    config.validate();
    require_unit(config, "estimator experiment");
    const auto& prior = config.market.prior;
    if (method == EstimatorMethod::bayes_cutoff && prior.kind != PriorSpec::Kind::cutoff)
        throw DomainError("bayes_cutoff needs a cutoff prior");
    if (method == EstimatorMethod::bayes_power_law && prior.kind != PriorSpec::Kind::power_law)
        throw DomainError("bayes_power_law needs a power-law prior");
    const auto grid = parse_record_grid(config.record_grid, config.t_max);
    const auto stats = simulate_ensemble(config.n_paths, grid.size(), config.workers, [&]() -> BlockRunner {
        auto cache = std::make_shared<ExactCache>(prior, grid);
        auto flow = std::make_shared<GridFlow>();
        return [&, cache, flow](std::uint64_t first, std::size_t count, std::span<double> out) {
            const std::size_t n_obs = grid.size();
            for (std::size_t p = 0; p < count; ++p) {
                guarded_path(first + p, [&] {
                    Philox4x32 rng(config.master_seed, first + p);
                    MetaOrderSchedule sched = config.market.schedule(config.t_max);
                    sched.direction = draw_direction(config.market, rng);
                    sample_flow_on_grid(sched, config.market.flow, grid, false, rng, *flow);
                    for (std::size_t j = 0; j < n_obs; ++j) {
                        const std::int64_t t = grid[j];
                        const std::int64_t n = flow->n_buys[j];
                        const auto td = static_cast<double>(t);
                        const double xi = static_cast<double>(2 * n - t) / std::sqrt(td);
                        double v = 0.0;
                        switch (method) {
                            case EstimatorMethod::bayes_flat: v = nu_bayes_flat_asym(xi, td); break;
                            case EstimatorMethod::bayes_cutoff: v = nu_bayes_cutoff_asym(xi, td, prior.nu_bar); break;
                            case EstimatorMethod::bayes_power_law: v = nu_bayes_powerlaw_asym(xi, td, prior.k); break;
                            case EstimatorMethod::bayes_exact: v = cache->get(j, n).nu_hat(); break;
                            case EstimatorMethod::mle: v = nu_mle(xi, td).nu_hat; break;
                        }
                        out[p * n_obs + j] = v;
                    }
                });
            }
        };
    });
    return to_curve(stats, grid, config.market.nu, false);
}

ImpactCurve run_spread_experiment(const ExperimentConfig& config) {
    config.validate();
    require_unit(config, "spread experiment");
    const bool exact = resolve_rule(config) == PricingRule::exact;
    const auto grid = parse_record_grid(config.record_grid, config.t_max);
    const double theta = config.market.theta;
    const auto stats = simulate_ensemble(config.n_paths, grid.size(), config.workers, [&]() -> BlockRunner {
        auto cache = std::make_shared<ExactCache>(config.market.prior, grid);
        auto flow = std::make_shared<GridFlow>();
        return [&, cache, flow](std::uint64_t first, std::size_t count, std::span<double> out) {
            const std::size_t n_obs = grid.size();
            for (std::size_t p = 0; p < count; ++p) {
                guarded_path(first + p, [&] {
                    Philox4x32 rng(config.master_seed, first + p);
                    MetaOrderSchedule sched = config.market.schedule(config.t_max);
                    sched.direction = draw_direction(config.market, rng);
                    sample_flow_on_grid(sched, config.market.flow, grid, false, rng, *flow);
                    for (std::size_t j = 0; j < n_obs; ++j) {
                        const std::int64_t t = grid[j];
                        const std::int64_t n = flow->n_buys[j];
                        double s = 0.0;
                        if (exact) {
                            // Same reweighting as quote_bid_ask_exact, from the cached integrals.
                            const auto& c = cache->get(j, n);
                            const double ap = c.i_plus + c.j_plus;
                            const double an = c.i_minus - c.j_minus;
                            const double bp = c.i_plus - c.j_plus;
                            const double bn = c.i_minus + c.j_minus;
                            s = theta * ((ap - an) / (ap + an) - (bp - bn) / (bp + bn));
                        } else {
                            const auto td = static_cast<double>(t);
                            s = quote_bid_ask(static_cast<double>(2 * n - t) / std::sqrt(td), td, theta).spread;
                        }
                        out[p * n_obs + j] = s;
                    }
                });
            }
        };
    });
    return to_curve(stats, grid, config.market.nu, false);
}

AggregatedImpact run_aggregated_impact(const ExperimentConfig& config, int n_bins) {
    config.validate();
    const auto* gauss = std::get_if<GaussianVolume>(&config.market.flow);
    if (gauss == nullptr) throw DomainError("aggregated impact needs a Gaussian volume flow");
    if (config.control_variate) throw DomainError("control variate applies only to ensemble-mean prices");
    if (n_bins < 2) throw DomainError("n_bins must be at least 2");
    if (n_bins % 2 != 0) ++n_bins;

    const std::int64_t t = config.t_max;
    const std::vector<std::int64_t> grid{t};
    const auto n = static_cast<std::size_t>(config.n_paths);
    std::vector<double> dv(n);
    std::vector<double> dp(n);
    const auto& m = config.market;
    for_each_block(config.n_paths, config.workers, [&] {
        auto flow = std::make_shared<GridFlow>();
        auto fund = std::make_shared<std::vector<double>>();
        return [&, flow, fund](std::size_t, std::uint64_t first, std::size_t count) {
            for (std::size_t p = 0; p < count; ++p) {
                const std::uint64_t path = first + p;
                guarded_path(path, [&] {
                    Philox4x32 rng(config.master_seed, path);
                    MetaOrderSchedule sched = m.schedule(t);
                    sched.direction = draw_direction(m, rng);
                    sample_flow_on_grid(sched, m.flow, grid, false, rng, *flow);
                    const double v = flow->delta_v[0];
                    double price = m.theta * posterior_g_volume(v, static_cast<double>(t), gauss->sigma_v, m.p_up);
                    if (m.include_fundamental) {
                        sample_fundamental_on_grid(m.fundamental(), m.nu, grid, rng, *fund);
                        price += (*fund)[0];
                    }
                    dv[path] = v;
                    dp[path] = price;
                });
            }
        };
    });

    const auto td = static_cast<double>(t);
    const double half_range = 4.0 * std::sqrt(gauss->sigma_v * gauss->sigma_v * td + m.chi * m.chi * td * td);
    const double width = 2.0 * half_range / n_bins;
    AggregatedImpact r;
    r.t = t;
    const auto nb = static_cast<std::size_t>(n_bins);
    r.count.assign(nb, 0);
    r.mean_dv.assign(nb, 0.0);
    r.mean_dp.assign(nb, 0.0);
    std::vector<double> m2(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        r.bin_lo.push_back(-half_range + width * static_cast<double>(b));
        r.bin_hi.push_back(-half_range + width * static_cast<double>(b + 1));
    }
    // Welford per bin, in path order.
    for (std::size_t p = 0; p < n; ++p) {
        const double pos = (dv[p] + half_range) / width;
        if (!(pos >= 0.0) || pos >= static_cast<double>(nb)) continue;
        const auto b = static_cast<std::size_t>(pos);
        const double k = static_cast<double>(++r.count[b]);
        r.mean_dv[b] += (dv[p] - r.mean_dv[b]) / k;
        const double d = dp[p] - r.mean_dp[b];
        r.mean_dp[b] += d / k;
        m2[b] += d * (dp[p] - r.mean_dp[b]);
    }
    const std::size_t lo = nb / 2 - 1;
    const std::size_t hi = nb / 2;
    if (r.count[lo] < 100 || r.count[hi] < 100)
        throw BinPopulationError("central bins hold " + std::to_string(r.count[lo]) + " and " +
                                 std::to_string(r.count[hi]) + " paths; at least 100 each are needed");
    const double ddv = r.mean_dv[hi] - r.mean_dv[lo];
    r.lambda = (r.mean_dp[hi] - r.mean_dp[lo]) / ddv;
    const double var_lo = m2[lo] / static_cast<double>(r.count[lo] - 1);
    const double var_hi = m2[hi] / static_cast<double>(r.count[hi] - 1);
    r.lambda_stderr = std::sqrt(var_lo / static_cast<double>(r.count[lo]) + var_hi / static_cast<double>(r.count[hi])) /
                      std::abs(ddv);
    return r;
}

SlopeFit loglog_slope_fit(std::span<const double> t, std::span<const double> y, double t_lo, double t_hi) {
    if (t.size() != y.size()) throw DomainError("slope fit needs equally long t and y");
    std::vector<double> lx;
    std::vector<double> ly;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < t_lo || t[i] > t_hi) continue;
        if (!(t[i] > 0.0) || !(y[i] > 0.0))
            throw DomainError("slope fit needs positive values in the window (t = " + std::to_string(t[i]) + ")");
        lx.push_back(std::log(t[i]));
        ly.push_back(std::log(y[i]));
    }
    if (lx.size() < 8) throw DomainError("slope fit needs at least 8 points in the window");
    const auto n = static_cast<double>(lx.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    SlopeFit f;
    f.exponent = sxy / sxx;
    f.prefactor = std::exp(my - f.exponent * mx);
    f.t_lo = t_lo;
    f.t_hi = t_hi;
    f.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    f.n_points = static_cast<int>(lx.size());
    return f;
}

SlopeFit loglog_slope_fit(const ImpactCurve& curve, double t_lo, double t_hi) {
    std::vector<double> t(curve.grid.begin(), curve.grid.end());
    return loglog_slope_fit(t, curve.mean_dp, t_lo, t_hi);
}

std::vector<OracleCell> oracle_posterior_enumeration(std::int64_t t_max, const PriorSpec& prior, std::int64_t nodes) {
    prior.validate();
    if (t_max < 1 || t_max > 64) throw DomainError("oracle enumeration supports 1 <= t_max <= 64");
    if (nodes < 1) throw DomainError("nodes must be positive");
    // Midpoint nodes with weights w = phi(v) dv; for k < 1 in u = v^k, where phi dv = du.
    std::vector<double> v(static_cast<std::size_t>(nodes));
    std::vector<double> w(static_cast<std::size_t>(nodes));
    const auto nn = static_cast<double>(nodes);
    for (std::int64_t i = 0; i < nodes; ++i) {
        const double mid = (static_cast<double>(i) + 0.5) / nn;
        const auto idx = static_cast<std::size_t>(i);
        switch (prior.kind) {
            case PriorSpec::Kind::flat:
                v[idx] = mid;
                w[idx] = 1.0 / nn;
                break;
            case PriorSpec::Kind::cutoff:
                v[idx] = mid * prior.nu_bar;
                w[idx] = 1.0 / nn;
                break;
            case PriorSpec::Kind::power_law:
                if (prior.k < 1.0) {
                    v[idx] = std::pow(mid, 1.0 / prior.k);
                    w[idx] = 1.0 / nn;
                } else {
                    v[idx] = mid;
                    w[idx] = prior.k * std::pow(mid, prior.k - 1.0) / nn;
                }
                break;
        }
    }

    std::vector<OracleCell> out;
    std::vector<long double> z;
    std::vector<long double> g;
    std::vector<long double> m;
    for (std::int64_t t = 1; t <= t_max; ++t) {
        const auto nt = static_cast<std::size_t>(t + 1);
        z.assign(nt, 0.0L);
        g.assign(nt, 0.0L);
        m.assign(nt, 0.0L);
        const double half_t = 0.5 * static_cast<double>(t);
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double vi = v[i];
            // P(x | v) = [L+ + L-]/2 = 2^-t (1 - v^2)^(t/2) cosh(d), d = (n - t/2) ln((1+v)/(1-v)).
            const double base = w[i] * std::exp(half_t * std::log1p(-vi * vi));
            const double ell = std::log1p(vi) - std::log1p(-vi);
            for (std::size_t n = 0; n < nt; ++n) {
                const double d = (static_cast<double>(n) - half_t) * ell;
                const double like = base * std::cosh(d);
                z[n] += like;
                g[n] += like * std::tanh(d);
                m[n] += like * vi;
            }
        }
        for (std::size_t n = 0; n < nt; ++n) {
            out.push_back({t, static_cast<std::int64_t>(n), static_cast<double>(g[n] / z[n]),
                           static_cast<double>(m[n] / z[n])});
        }
    }
    return out;
}

void write_curve_csv_header(std::ostream& os) { os << "t,q,mean_dp,var_dp,stderr,n_paths,source\n"; }

void append_curve_csv(std::ostream& os, const ImpactCurve& c) {
    const auto old = os.precision(17);
    const char* source = c.control_variate ? "mc_cv" : "mc";
    for (std::size_t j = 0; j < c.grid.size(); ++j) {
        os << c.grid[j] << ',' << c.q[j] << ',' << c.mean_dp[j] << ',' << c.var_dp[j] << ',' << c.std_err[j] << ','
           << c.n_paths << ',' << source << '\n';
    }
    os.precision(old);
}

void append_curve_csv(std::ostream& os, const TheoryCurve& c) {
    const auto old = os.precision(17);
    for (std::size_t j = 0; j < c.grid.size(); ++j) {
        os << c.grid[j] << ',' << c.q[j] << ',' << c.values[j] << ",0,0,0,theory:" << c.name << '\n';
    }
    os.precision(old);
}

void write_curve_csv(std::ostream& os, const ImpactCurve& curve) {
    write_curve_csv_header(os);
    append_curve_csv(os, curve);
}

void write_curve_csv(std::ostream& os, const TheoryCurve& curve) {
    write_curve_csv_header(os);
    append_curve_csv(os, curve);
}

TheoryParams theory_params(const ExperimentConfig& config) {
    const auto& m = config.market;
    TheoryParams p;
    p.nu = m.nu;
    p.nu_bar = m.prior.kind == PriorSpec::Kind::cutoff ? m.prior.nu_bar : 1.0;
    p.theta = m.theta;
    p.alpha_cal = m.alpha_cal;
    p.horizon = m.horizon > 0 ? m.horizon : config.t_max;
    p.after_mode = m.after_mode;
    p.chi = m.chi;
    p.sigma_v = flow_sigma_v(m.flow);
    p.p_up = m.p_up;
    if (const auto* levy = std::get_if<LevyVolume>(&m.flow)) p.alpha_stable = levy->alpha_stable;
    p.k = m.prior.kind == PriorSpec::Kind::power_law ? m.prior.k : 1.0;
    p.flow = m.flow;
    return p;
}

}  // namespace impactlab

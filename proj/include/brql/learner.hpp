#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "brql/mdp.hpp"
#include "brql/posterior.hpp"
#include "brql/risk.hpp"
#include "brql/rng.hpp"

namespace brql {

// ---------------------------------------------------------------------------
// Observation sources. The learner never acts; it only consumes triples.

class ObservationSource {
public:
    virtual ~ObservationSource() = default;
    /// Exactly n triples; throws std::out_of_range when the source runs dry.
    virtual std::vector<ObservationTriple> next_batch(std::size_t n) = 0;
};

/// One continuing trajectory of the true MDP under a uniformly random behavior policy.
class TrajectoryStream final : public ObservationSource {
public:
    TrajectoryStream(const MdpModel& model, Rng rng) : model_(&model), rng_(std::move(rng)) {
        state_ = rng_.index(model.num_states());
    }

    std::vector<ObservationTriple> next_batch(std::size_t n) override {
        std::vector<ObservationTriple> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t a = rng_.index(model_->num_actions(state_));
            const std::size_t next = rng_.categorical(model_->transition(state_, a));
            out.push_back({state_, a, next});
            state_ = next;
        }
        return out;
    }

private:
    const MdpModel* model_;
    Rng rng_;
    std::size_t state_;
};

/// I.i.d. uniform admissible pair with s' drawn from the true kernel.
class CoveringStream final : public ObservationSource {
public:
    CoveringStream(const MdpModel& model, Rng rng) : model_(&model), rng_(std::move(rng)) {}

    std::vector<ObservationTriple> next_batch(std::size_t n) override {
        const auto& layout = model_->layout();
        std::vector<ObservationTriple> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = rng_.index(layout.num_pairs());
            const std::size_t s = layout.state_of(k);
            const std::size_t a = k - layout.first_pair(s);
            out.push_back({s, a, rng_.categorical(model_->transition(s, a))});
        }
        return out;
    }

private:
    const MdpModel* model_;
    Rng rng_;
};

/// Replays a recorded dataset in order.
class ReplayStream final : public ObservationSource {
public:
    explicit ReplayStream(std::span<const ObservationTriple> data) : data_(data) {}

    std::vector<ObservationTriple> next_batch(std::size_t n) override {
        if (pos_ + n > data_.size())
            throw std::out_of_range("observation stream exhausted");
        std::vector<ObservationTriple> out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                           data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }

    std::size_t consumed() const { return pos_; }

private:
    std::span<const ObservationTriple> data_;
    std::size_t pos_ = 0;
};

/// FNV-1a over the triples; equal streams hash equal.
inline std::uint64_t stream_hash(std::span<const ObservationTriple> data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](std::uint64_t x) {
        for (int i = 0; i < 8; ++i) {
            h ^= (x >> (8 * i)) & 0xffu;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& o : data) {
        mix(o.s);
        mix(o.a);
        mix(o.next);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Schedules

/// lambda_l = l^(-exponent). Robbins-Monro (sum = inf, sum of squares < inf)
/// holds exactly for exponent in (1/2, 1].
class RateSchedule {
public:
    explicit RateSchedule(double exponent = 0.7) : exponent_(exponent) {
        if (!(exponent > 0.0)) throw std::invalid_argument("rate exponent must be positive");
    }

    double operator()(std::uint64_t step) const {
        if (step < 1) throw std::invalid_argument("learning-rate index starts at 1");
        return std::pow(static_cast<double>(step), -exponent_);
    }

    double exponent() const { return exponent_; }
    bool robbins_monro() const { return exponent_ > 0.5 && exponent_ <= 1.0; }

private:
    double exponent_;
};

inline double default_rate(std::uint64_t step) { return RateSchedule(0.7)(step); }

/// Per-stage batch sizes n(t) and sweep counts m(t) for t = 1..horizon, plus
/// the size n(0) of the batch ingested before stage 1.
struct StageSchedule {
    std::size_t horizon = 0;
    std::function<std::size_t(std::size_t)> batch_size = [](std::size_t) { return std::size_t{1}; };
    std::function<std::size_t(std::size_t)> sweeps = [](std::size_t) { return std::size_t{1}; };
    std::size_t initial_batch = 0;

    static StageSchedule constant(std::size_t horizon, std::size_t batch, std::size_t sweeps_per_stage,
                                  std::size_t initial = 0) {
        StageSchedule s;
        s.horizon = horizon;
        s.batch_size = [batch](std::size_t) { return batch; };
        s.sweeps = [sweeps_per_stage](std::size_t) { return sweeps_per_stage; };
        s.initial_batch = initial;
        return s;
    }

    std::size_t total_observations() const {
        std::size_t n = initial_batch;
        for (std::size_t t = 1; t <= horizon; ++t) n += batch_size(t);
        return n;
    }
};

// ---------------------------------------------------------------------------
// Learner state

/// Posterior sample size per pair, floored at n_min and optionally capped.
class SampleSizeTable {
public:
    SampleSizeTable() = default;
    SampleSizeTable(std::size_t num_pairs, std::size_t n_min,
                    std::optional<std::size_t> cap = std::nullopt)
        : sizes_(num_pairs, n_min), n_min_(n_min), cap_(cap) {
        if (n_min < 1) throw std::invalid_argument("minimal sample size must be at least 1");
        if (cap && *cap < n_min) throw std::invalid_argument("sample size cap below the minimum");
    }

    std::size_t operator[](std::size_t pair) const { return sizes_[pair]; }
    std::size_t& at(std::size_t pair) { return sizes_[pair]; }
    std::size_t n_min() const { return n_min_; }
    std::optional<std::size_t> cap() const { return cap_; }
    std::size_t size() const { return sizes_.size(); }
    std::size_t min() const { return *std::min_element(sizes_.begin(), sizes_.end()); }
    std::size_t max() const { return *std::max_element(sizes_.begin(), sizes_.end()); }

    void grow(std::size_t pair) {
        auto& n = sizes_[pair];
        if (!cap_ || n < *cap_) ++n;
    }
    void shrink(std::size_t pair) {
        auto& n = sizes_[pair];
        n = std::max(n - 1, n_min_);
    }

    friend bool operator==(const SampleSizeTable&, const SampleSizeTable&) = default;

private:
    std::vector<std::size_t> sizes_;
    std::size_t n_min_ = 1;
    std::optional<std::size_t> cap_;
};

struct LearnerState {
    QTable q;
    DirichletPosterior posterior;
    SampleSizeTable sizes;
    std::uint64_t global_step = 0; // completed sweeps across all stages
    std::size_t stage = 0;

    static LearnerState initial(const MdpModel& model, DirichletPosterior prior, std::size_t n_min,
                                std::optional<std::size_t> cap = std::nullopt) {
        if (!(prior.layout() == model.layout()))
            throw std::invalid_argument("prior does not match the model's pairs");
        return {QTable::zeros(model), std::move(prior), SampleSizeTable(model.num_pairs(), n_min, cap),
                0, 0};
    }
};

/**
 * Ingests observations one at a time: the posterior gains the count, the
 * observed pair's sample size steps down (not below n_min) and every other
 * pair's steps up.
 */
inline void adapt_sample_sizes(LearnerState& state, std::span<const ObservationTriple> batch) {
    for (std::size_t i = 0; i < batch.size(); ++i)
        if (!state.posterior.valid(batch[i])) throw InvalidObservation(i, batch[i]);
    const auto& layout = state.posterior.layout();
    for (const auto& o : batch) {
        state.posterior.observe(o);
        const std::size_t hit = layout.pair(o.s, o.a);
        for (std::size_t k = 0; k < layout.num_pairs(); ++k) {
            if (k == hit)
                state.sizes.shrink(k);
            else
                state.sizes.grow(k);
        }
    }
}

/// Read-only view handed to Bellman targets during a sweep. `q` and
/// `state_values` are the pre-sweep table.
struct SweepContext {
    const MdpModel& model;
    const DirichletPosterior& posterior;
    const QTable& q;
    std::span<const double> state_values;
};

template <class T>
concept BellmanTarget = requires(T t, const SweepContext& ctx, std::size_t s, std::size_t a,
                                 std::size_t n, Rng& rng) {
    { t(ctx, s, a, n, rng) } -> std::convertible_to<double>;
};

/// Target of the Bayesian risk-averse learner: the Monte Carlo risk estimate
/// over posterior kernels.
class BayesianRiskTarget {
public:
    explicit BayesianRiskTarget(RiskFunctional risk) : risk_(risk) {}

    double operator()(const SweepContext& ctx, std::size_t s, std::size_t a, std::size_t n,
                      Rng& rng) {
        targets_.resize(ctx.model.num_states());
        one_step_targets(ctx.model, s, a, ctx.state_values, targets_);
        return estimate_bellman_targets(ctx.posterior, s, a, targets_, n, risk_, rng, scratch_);
    }

    const RiskFunctional& risk() const { return risk_; }

private:
    RiskFunctional risk_;
    std::vector<double> targets_;
    std::vector<double> scratch_;
};

/// Stream key for the target draws of one pair in one sweep.
inline RngKey sweep_key(const RngKey& base, std::uint64_t global_step, std::size_t pair) {
    return base.child({global_step, pair});
}

/**
 * One synchronous sweep: every target is computed from the pre-sweep Q, the
 * blended values go to a staging table, and the staging table is committed at
 * the end.
 */
template <BellmanTarget Target>
void q_sweep(LearnerState& state, const MdpModel& model, Target& target, const RateSchedule& rate,
             const RngKey& key) {
    const double lambda = rate(state.global_step + 1);
    const auto values = state_values(state.q);
    const SweepContext ctx{model, state.posterior, state.q, values};
    QTable staged(model.layout());
    for (std::size_t s = 0; s < model.num_states(); ++s) {
        for (std::size_t a = 0; a < model.num_actions(s); ++a) {
            const std::size_t k = model.layout().pair(s, a);
            Rng rng = sweep_key(key, state.global_step, k).stream();
            const double t = target(ctx, s, a, state.sizes[k], rng);
            staged(s, a) = (1.0 - lambda) * state.q(s, a) + lambda * t;
        }
    }
    state.q = std::move(staged);
    ++state.global_step;
}

struct Snapshot {
    std::size_t stage = 0;
    std::uint64_t global_step = 0;
    QTable q;
    Policy policy;
    double deployed_value = 0.0;
    double q_sup_norm = 0.0;
    std::size_t min_sample_size = 0;
    std::size_t max_sample_size = 0;

    friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

struct LearnerConfig {
    StageSchedule schedule;
    RateSchedule rate{0.7};
    std::size_t min_sample_size = 10;
    std::optional<std::size_t> sample_size_cap;
};

inline Snapshot take_snapshot(const LearnerState& state, const MdpModel& truth) {
    Snapshot snap;
    snap.stage = state.stage;
    snap.global_step = state.global_step;
    snap.q = state.q;
    snap.policy = greedy_policy(state.q);
    snap.deployed_value = deployed_value(truth, snap.policy);
    snap.q_sup_norm = state.q.sup_norm();
    snap.min_sample_size = state.sizes.min();
    snap.max_sample_size = state.sizes.max();
    return snap;
}

/**
 * Multi-stage loop. The n(0) batch is folded into the prior without sample
 * size adaptation; each stage t then ingests n(t) triples and runs m(t)
 * sweeps. Snapshot 0 is taken after the n(0) batch, then one per stage.
 */
template <BellmanTarget Target>
std::vector<Snapshot> run(const MdpModel& model, const LearnerConfig& config,
                          ObservationSource& observations, Target& target, const RngKey& key,
                          DirichletPosterior prior) {
    LearnerState state =
        LearnerState::initial(model, std::move(prior), config.min_sample_size, config.sample_size_cap);
    const auto& schedule = config.schedule;
    if (schedule.initial_batch > 0) state.posterior.update(observations.next_batch(schedule.initial_batch));

    std::vector<Snapshot> snapshots;
    snapshots.reserve(schedule.horizon + 1);
    snapshots.push_back(take_snapshot(state, model));
    for (std::size_t t = 1; t <= schedule.horizon; ++t) {
        state.stage = t;
        adapt_sample_sizes(state, observations.next_batch(schedule.batch_size(t)));
        const std::size_t m = schedule.sweeps(t);
        if (m < 1) throw std::invalid_argument("each stage needs at least one sweep");
        for (std::size_t l = 0; l < m; ++l) q_sweep(state, model, target, config.rate, key);
        snapshots.push_back(take_snapshot(state, model));
    }
    return snapshots;
}

template <BellmanTarget Target>
std::vector<Snapshot> run(const MdpModel& model, const LearnerConfig& config,
                          ObservationSource& observations, Target& target, const RngKey& key) {
    return run(model, config, observations, target, key, init_uniform_prior(model));
}

/// `stage,global_step,deployed_value,q_sup_norm,min_sample_size,max_sample_size`
inline void write_trace_csv(std::ostream& os, std::span<const Snapshot> snapshots) {
    os.precision(17);
    os << "stage,global_step,deployed_value,q_sup_norm,min_sample_size,max_sample_size\n";
    for (const auto& s : snapshots)
        os << s.stage << ',' << s.global_step << ',' << s.deployed_value << ',' << s.q_sup_norm << ','
           << s.min_sample_size << ',' << s.max_sample_size << '\n';
}

} // namespace brql

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace brql {

/// Tolerance for "row sums to one" checks on transition kernels.
inline constexpr double kProbabilityTolerance = 1e-12;

/// Sweep cap for the deterministic fixed-point iterations.
inline constexpr std::size_t kMaxSweeps = 1'000'000;

/// Thrown when a fixed-point iteration hits `kMaxSweeps`.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat enumeration of admissible (state, action) pairs.
class PairLayout {
public:
    PairLayout() = default;

    explicit PairLayout(std::span<const std::size_t> actions_per_state) {
        offsets_.reserve(actions_per_state.size() + 1);
        offsets_.push_back(0);
        for (std::size_t s = 0; s < actions_per_state.size(); ++s) {
            if (actions_per_state[s] == 0)
                throw std::invalid_argument("state " + std::to_string(s) +
                                            " has no admissible action");
            offsets_.push_back(offsets_.back() + actions_per_state[s]);
        }
    }

    std::size_t num_states() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    std::size_t num_actions(std::size_t s) const { return offsets_[s + 1] - offsets_[s]; }
    std::size_t num_pairs() const { return offsets_.empty() ? 0 : offsets_.back(); }
    std::size_t max_actions() const {
        std::size_t m = 0;
        for (std::size_t s = 0; s < num_states(); ++s) m = std::max(m, num_actions(s));
        return m;
    }

    bool admissible(std::size_t s, std::size_t a) const {
        return s < num_states() && a < num_actions(s);
    }

    std::size_t pair(std::size_t s, std::size_t a) const { return offsets_[s] + a; }
    std::size_t first_pair(std::size_t s) const { return offsets_[s]; }

    /// State of a flat pair index.
    std::size_t state_of(std::size_t pair) const {
        auto it = std::upper_bound(offsets_.begin(), offsets_.end(), pair);
        return static_cast<std::size_t>(it - offsets_.begin()) - 1;
    }

    friend bool operator==(const PairLayout&, const PairLayout&) = default;

private:
    std::vector<std::size_t> offsets_;
};

/**
 * Finite discounted MDP with per-state admissible action sets.
 *
 * Transitions and rewards are stored densely per admissible pair: row
 * `pair(s, a)` holds p(s'|s,a) and r(s,a,s') for every successor s'.
 */
class MdpModel {
public:
    MdpModel(std::vector<std::size_t> actions_per_state, std::vector<double> transitions,
             std::vector<double> rewards, double discount)
        : layout_(actions_per_state), transitions_(std::move(transitions)),
          rewards_(std::move(rewards)), discount_(discount) {
        const std::size_t n = layout_.num_states();
        if (n == 0) throw std::invalid_argument("MDP needs at least one state");
        if (!(discount > 0.0 && discount < 1.0))
            throw std::invalid_argument("discount must lie in (0,1)");
        const std::size_t cells = layout_.num_pairs() * n;
        if (transitions_.size() != cells || rewards_.size() != cells)
            throw std::invalid_argument("transition/reward tables must hold |pairs| x |S| entries");
        for (std::size_t k = 0; k < layout_.num_pairs(); ++k) {
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double p = transitions_[k * n + j];
                if (!(p >= 0.0) || !std::isfinite(p))
                    throw std::invalid_argument("negative or non-finite transition probability");
                if (!std::isfinite(rewards_[k * n + j]))
                    throw std::invalid_argument("non-finite reward");
                total += p;
            }
            if (std::abs(total - 1.0) > kProbabilityTolerance)
                throw std::invalid_argument("transition row " + std::to_string(k) +
                                            " does not sum to one");
        }
        reward_bound_ = 0.0;
        for (double r : rewards_) reward_bound_ = std::max(reward_bound_, std::abs(r));
    }

    const PairLayout& layout() const { return layout_; }
    std::size_t num_states() const { return layout_.num_states(); }
    std::size_t num_actions(std::size_t s) const { return layout_.num_actions(s); }
    std::size_t num_pairs() const { return layout_.num_pairs(); }
    bool admissible(std::size_t s, std::size_t a) const { return layout_.admissible(s, a); }

    double discount() const { return discount_; }
    /// max |r(s,a,s')| over admissible pairs.
    double reward_bound() const { return reward_bound_; }
    /// R / (1 - gamma): a priori bound on every value and Q entry.
    double value_bound() const { return reward_bound_ / (1.0 - discount_); }

    std::span<const double> transition(std::size_t s, std::size_t a) const {
        return row(transitions_, layout_.pair(s, a));
    }
    std::span<const double> rewards(std::size_t s, std::size_t a) const {
        return row(rewards_, layout_.pair(s, a));
    }
    double reward(std::size_t s, std::size_t a, std::size_t next) const {
        return rewards_[layout_.pair(s, a) * num_states() + next];
    }

    const std::vector<double>& transition_table() const { return transitions_; }
    const std::vector<double>& reward_table() const { return rewards_; }

    /// Same rewards and discount with a replacement kernel.
    MdpModel with_transitions(std::vector<double> transitions) const {
        return MdpModel(actions_per_state(), std::move(transitions), rewards_, discount_);
    }

    MdpModel with_discount(double discount) const {
        return MdpModel(actions_per_state(), transitions_, rewards_, discount);
    }

    std::vector<std::size_t> actions_per_state() const {
        std::vector<std::size_t> out(num_states());
        for (std::size_t s = 0; s < out.size(); ++s) out[s] = num_actions(s);
        return out;
    }

private:
    std::span<const double> row(const std::vector<double>& table, std::size_t pair) const {
        const std::size_t n = num_states();
        return {table.data() + pair * n, n};
    }

    PairLayout layout_;
    std::vector<double> transitions_;
    std::vector<double> rewards_;
    double discount_;
    double reward_bound_ = 0.0;
};

/// Q-function over admissible pairs.
class QTable {
public:
    QTable() = default;
    explicit QTable(PairLayout layout, double fill = 0.0)
        : layout_(std::move(layout)), values_(layout_.num_pairs(), fill) {}

    static QTable zeros(const MdpModel& model) { return QTable(model.layout()); }

    const PairLayout& layout() const { return layout_; }
    double operator()(std::size_t s, std::size_t a) const { return values_[layout_.pair(s, a)]; }
    double& operator()(std::size_t s, std::size_t a) { return values_[layout_.pair(s, a)]; }

    std::span<const double> state_row(std::size_t s) const {
        return {values_.data() + layout_.first_pair(s), layout_.num_actions(s)};
    }

    /// max_b Q(s, b)
    double state_max(std::size_t s) const {
        auto r = state_row(s);
        return *std::max_element(r.begin(), r.end());
    }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double sup_norm() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    friend double sup_distance(const QTable& x, const QTable& y) {
        double m = 0.0;
        for (std::size_t i = 0; i < x.values_.size(); ++i)
            m = std::max(m, std::abs(x.values_[i] - y.values_[i]));
        return m;
    }

    friend bool operator==(const QTable&, const QTable&) = default;

private:
    PairLayout layout_;
    std::vector<double> values_;
};

/// Deterministic stationary policy: one admissible action index per state.
struct Policy {
    std::vector<std::size_t> action;

    friend bool operator==(const Policy&, const Policy&) = default;
};

/// State values V(s).
struct ValueVector {
    std::vector<double> values;

    double sup_norm() const {
        double m = 0.0;
        for (double v : values) m = std::max(m, std::abs(v));
        return m;
    }
    double mean() const {
        return std::accumulate(values.begin(), values.end(), 0.0) /
               static_cast<double>(values.size());
    }
};

/// V_Q(s) = max_b Q(s, b) for every state.
inline std::vector<double> state_values(const QTable& q) {
    std::vector<double> v(q.layout().num_states());
    for (std::size_t s = 0; s < v.size(); ++s) v[s] = q.state_max(s);
    return v;
}

/// Argmax per state; ties go to the lowest action index.
inline Policy greedy_policy(const QTable& q) {
    Policy pi;
    pi.action.resize(q.layout().num_states());
    for (std::size_t s = 0; s < pi.action.size(); ++s) {
        auto r = q.state_row(s);
        std::size_t best = 0;
        for (std::size_t a = 1; a < r.size(); ++a)
            if (r[a] > r[best]) best = a;
        pi.action[s] = best;
    }
    return pi;
}

/// sum_s' p(s') * w(s')
inline double expectation(std::span<const double> p, std::span<const double> w) {
    double acc = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) acc += p[j] * w[j];
    return acc;
}

/// One-step targets w(s') = r(s,a,s') + gamma * V(s') for a fixed pair.
inline void one_step_targets(const MdpModel& model, std::size_t s, std::size_t a,
                             std::span<const double> values, std::span<double> out) {
    const auto r = model.rewards(s, a);
    const double g = model.discount();
    for (std::size_t j = 0; j < r.size(); ++j) out[j] = r[j] + g * values[j];
}

/// Risk-neutral Bellman operator under the model's own kernel.
inline QTable exact_bellman(const MdpModel& model, const QTable& q) {
    const auto v = state_values(q);
    std::vector<double> w(model.num_states());
    QTable out(model.layout());
    for (std::size_t s = 0; s < model.num_states(); ++s) {
        for (std::size_t a = 0; a < model.num_actions(s); ++a) {
            one_step_targets(model, s, a, v, w);
            out(s, a) = expectation(model.transition(s, a), w);
        }
    }
    return out;
}

/**
 * Iterates `op` from Q = 0 until the sup-change is at most tol (1-gamma)/gamma,
 * which bounds the fixed-point residual of the returned table by tol.
 */
template <class Operator>
QTable iterate_to_fixed_point(const MdpModel& model, Operator&& op, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    const double g = model.discount();
    const double stop = tol * (1.0 - g) / g;
    QTable q = QTable::zeros(model);
    for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
        QTable next = op(q);
        const double change = sup_distance(next, q);
        q = std::move(next);
        if (change <= stop) return q;
    }
    throw DivergenceError("fixed-point iteration hit the sweep cap");
}

/// Q^{c,*} by synchronous value iteration.
inline QTable value_iteration(const MdpModel& model, double tol) {
    return iterate_to_fixed_point(model, [&](const QTable& q) { return exact_bellman(model, q); },
                                  tol);
}

/// Solves (I - gamma P_pi) V = r_pi.
inline ValueVector policy_evaluation_exact(const MdpModel& model, const Policy& policy) {
    const std::size_t n = model.num_states();
    if (policy.action.size() != n) throw std::invalid_argument("policy has wrong state count");
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n),
                                                  static_cast<Eigen::Index>(n));
    Eigen::VectorXd b(static_cast<Eigen::Index>(n));
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t a = policy.action[s];
        if (!model.admissible(s, a))
            throw std::invalid_argument("policy action not admissible at state " +
                                        std::to_string(s));
        const auto p = model.transition(s, a);
        const auto r = model.rewards(s, a);
        const auto i = static_cast<Eigen::Index>(s);
        b(i) = expectation(p, r);
        for (std::size_t j = 0; j < n; ++j)
            A(i, static_cast<Eigen::Index>(j)) -= model.discount() * p[j];
    }
    Eigen::VectorXd v = A.partialPivLu().solve(b);
    ValueVector out;
    out.values.assign(v.data(), v.data() + v.size());
    return out;
}

/// Scalar performance of a policy: exact value averaged over a uniform start state.
inline double deployed_value(const MdpModel& model, const Policy& policy) {
    return policy_evaluation_exact(model, policy).mean();
}

// ---------------------------------------------------------------------------
// Plain-text dumps, one line per admissible (s, a).

/// `s a p_0 .. p_{n-1} r_0 .. r_{n-1}`
inline void write_kernel_dump(std::ostream& os, const MdpModel& model) {
    os.precision(17);
    for (std::size_t s = 0; s < model.num_states(); ++s) {
        for (std::size_t a = 0; a < model.num_actions(s); ++a) {
            os << s << ' ' << a;
            for (double p : model.transition(s, a)) os << ' ' << p;
            for (double r : model.rewards(s, a)) os << ' ' << r;
            os << '\n';
        }
    }
}

/// `s a q`
inline void write_q_dump(std::ostream& os, const QTable& q) {
    os.precision(17);
    const auto& layout = q.layout();
    for (std::size_t s = 0; s < layout.num_states(); ++s)
        for (std::size_t a = 0; a < layout.num_actions(s); ++a)
            os << s << ' ' << a << ' ' << q(s, a) << '\n';
}

inline QTable read_q_dump(std::istream& is, const PairLayout& layout) {
    QTable q(layout);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t s, a;
        double v;
        if (!(ls >> s >> a >> v) || !layout.admissible(s, a))
            throw std::invalid_argument("bad Q dump line " + std::to_string(lineno));
        q(s, a) = v;
    }
    return q;
}

} // namespace brql

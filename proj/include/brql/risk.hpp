#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "brql/mdp.hpp"
#include "brql/posterior.hpp"
#include "brql/rng.hpp"

namespace brql {

enum class RiskKind { VaR, CVaR, Mean };

/// VaR/CVaR at level alpha (lower tail, reward convention) or the plain mean.
class RiskFunctional {
public:
    static RiskFunctional var(double alpha) { return {RiskKind::VaR, alpha}; }
    static RiskFunctional cvar(double alpha) { return {RiskKind::CVaR, alpha}; }
    static RiskFunctional mean() { return {RiskKind::Mean, 1.0}; }

    RiskKind kind() const { return kind_; }
    double alpha() const { return alpha_; }

    /// Number of lower order statistics the estimator looks at: ceil(N alpha).
    std::size_t tail_count(std::size_t n) const {
        if (kind_ == RiskKind::Mean) return n;
        // nudge down before ceil so that e.g. 5 * 0.2 counts as exactly 1
        const double x = static_cast<double>(n) * alpha_;
        auto k = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
        return std::clamp<std::size_t>(k, 1, n);
    }

    std::string name() const {
        switch (kind_) {
        case RiskKind::VaR: return "VaR(" + std::to_string(alpha_) + ")";
        case RiskKind::CVaR: return "CVaR(" + std::to_string(alpha_) + ")";
        case RiskKind::Mean: return "Mean";
        }
        return {};
    }

    friend bool operator==(const RiskFunctional&, const RiskFunctional&) = default;

private:
    RiskFunctional(RiskKind kind, double alpha) : kind_(kind), alpha_(alpha) {
        if (kind != RiskKind::Mean && !(alpha > 0.0 && alpha <= 1.0))
            throw std::invalid_argument("risk level alpha must lie in (0,1]");
    }

    RiskKind kind_;
    double alpha_;
};

/// Nonempty batch of finite sample values X_1..X_N.
class SampleBatch {
public:
    explicit SampleBatch(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty()) throw std::invalid_argument("sample batch must be nonempty");
        for (double x : values_)
            if (!std::isfinite(x)) throw std::invalid_argument("sample batch has a non-finite value");
    }

    std::span<const double> values() const { return values_; }
    std::size_t size() const { return values_.size(); }

private:
    std::vector<double> values_;
};

/**
 * Order-statistic estimate on a scratch buffer, which is permuted.
 *
 * VaR is X_{k:N} and CVaR the mean of X_{1:N}..X_{k:N} with k = ceil(N alpha).
 * A selection puts the k smallest values in front and only those are sorted,
 * so the CVaR sum runs in the same order as after a full sort.
 */
inline double estimate_in_place(std::span<double> xs, const RiskFunctional& risk) {
    const std::size_t n = xs.size();
    if (n == 0) throw std::invalid_argument("cannot estimate from an empty batch");
    if (risk.kind() == RiskKind::Mean) {
        double acc = 0.0;
        for (double x : xs) acc += x;
        return acc / static_cast<double>(n);
    }
    const std::size_t k = risk.tail_count(n);
    std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(k - 1), xs.end());
    if (risk.kind() == RiskKind::VaR) return xs[k - 1];
    std::sort(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(k));
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += xs[i];
    return acc / static_cast<double>(k);
}

inline double estimate_from_samples(const SampleBatch& batch, const RiskFunctional& risk) {
    std::vector<double> scratch(batch.values().begin(), batch.values().end());
    return estimate_in_place(scratch, risk);
}

/// f(p | s, a, Q) = sum_s' p(s') [r(s,a,s') + gamma max_b Q(s', b)].
inline double f_eval(std::span<const double> p, std::size_t s, std::size_t a, const QTable& q,
                     const MdpModel& model) {
    const auto v = state_values(q);
    std::vector<double> w(model.num_states());
    one_step_targets(model, s, a, v, w);
    return expectation(p, w);
}

/**
 * Monte Carlo Bellman target at (s, a) from `n` posterior kernel draws.
 *
 * `targets` holds r(s,a,.) + gamma V_Q(.) for the pair; `scratch` must hold
 * n + |S| doubles. The Mean risk uses the posterior mean in closed form and
 * draws nothing.
 */
inline double estimate_bellman_targets(const DirichletPosterior& posterior, std::size_t s,
                                       std::size_t a, std::span<const double> targets,
                                       std::size_t n, const RiskFunctional& risk, Rng& rng,
                                       std::vector<double>& scratch) {
    if (n == 0) throw std::invalid_argument("need at least one posterior sample");
    if (risk.kind() == RiskKind::Mean) return expectation(posterior.mean(s, a), targets);
    const std::size_t dim = posterior.num_states();
    scratch.resize(n + dim);
    std::span<double> values(scratch.data(), n);
    std::span<double> kernel(scratch.data() + n, dim);
    for (std::size_t i = 0; i < n; ++i) {
        posterior.sample(s, a, rng, kernel);
        values[i] = expectation(kernel, targets);
    }
    return estimate_in_place(values, risk);
}

inline double estimate_bellman(const DirichletPosterior& posterior, std::size_t s, std::size_t a,
                               const QTable& q, std::size_t n, const RiskFunctional& risk, Rng& rng,
                               const MdpModel& model) {
    const auto v = state_values(q);
    std::vector<double> w(model.num_states());
    one_step_targets(model, s, a, v, w);
    std::vector<double> scratch;
    return estimate_bellman_targets(posterior, s, a, w, n, risk, rng, scratch);
}

/// Same estimator over externally supplied kernels.
inline double estimate_from_kernels(std::span<const std::vector<double>> kernels, std::size_t s,
                                    std::size_t a, const QTable& q, const RiskFunctional& risk,
                                    const MdpModel& model) {
    const auto v = state_values(q);
    std::vector<double> w(model.num_states());
    one_step_targets(model, s, a, v, w);
    std::vector<double> xs;
    xs.reserve(kernels.size());
    for (const auto& p : kernels) xs.push_back(expectation(p, w));
    return estimate_in_place(xs, risk);
}

} // namespace brql

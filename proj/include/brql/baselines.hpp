#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "brql/learner.hpp"
#include "brql/mdp.hpp"
#include "brql/posterior.hpp"

namespace brql {

/// Radius of a KL or Wasserstein ball around the nominal kernel.
class AmbiguityRadius {
public:
    explicit AmbiguityRadius(double delta) : delta_(delta) {
        if (!(delta >= 0.0) || !std::isfinite(delta))
            throw std::invalid_argument("ambiguity radius must be finite and nonnegative");
    }
    double value() const { return delta_; }

private:
    double delta_;
};

enum class AmbiguityKind { KL, Wasserstein };

/**
 * inf { E_p[x] : KL(p || p_hat) <= delta } through the scalar dual
 *
 *   sup_{beta > 0}  -beta log E_{p_hat}[exp(-x / beta)] - beta delta,
 *
 * which is concave in beta. Golden-section search runs over log(beta) on
 * [1e-8, (max x - min x) / delta + 1] down to a relative width of 1e-8.
 */
inline double kl_robust_target(std::span<const double> p_hat, std::span<const double> x,
                               AmbiguityRadius radius) {
    const double delta = radius.value();
    const double nominal = expectation(p_hat, x);
    // only the support of p_hat is reachable under a finite KL budget
    double lo_x = INFINITY, hi_x = -INFINITY;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (p_hat[j] > 0.0) {
            lo_x = std::min(lo_x, x[j]);
            hi_x = std::max(hi_x, x[j]);
        }
    if (delta == 0.0 || hi_x == lo_x) return hi_x == lo_x ? lo_x : nominal;

    auto dual = [&](double log_beta) {
        const double beta = std::exp(log_beta);
        double acc = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j)
            if (p_hat[j] > 0.0) acc += p_hat[j] * std::exp(-(x[j] - lo_x) / beta);
        return lo_x - beta * std::log(acc) - beta * delta;
    };

    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = std::log(1e-8);
    double b = std::log((hi_x - lo_x) / delta + 1.0);
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = dual(c), fd = dual(d);
    double best = std::max({dual(a), dual(b), fc, fd});
    while (b - a > 1e-8) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = dual(c);
            best = std::max(best, fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = dual(d);
            best = std::max(best, fd);
        }
    }
    return std::clamp(best, lo_x, nominal);
}

/**
 * inf of E_p[x] over the total-variation ball of radius delta, which is the
 * W1 ball under the 0/1 ground metric: drain up to delta mass from the
 * highest-x states onto the lowest-x state.
 */
inline double wasserstein_robust_target(std::span<const double> p_hat, std::span<const double> x,
                                        AmbiguityRadius radius) {
    const double delta = radius.value();
    const auto lowest = static_cast<std::size_t>(std::min_element(x.begin(), x.end()) - x.begin());
    if (delta >= 1.0) return x[lowest];

    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return x[i] > x[j]; });

    std::vector<double> p(p_hat.begin(), p_hat.end());
    double budget = delta;
    for (std::size_t idx : order) {
        if (budget <= 0.0 || x[idx] <= x[lowest]) break;
        const double moved = std::min(budget, p[idx]);
        p[idx] -= moved;
        p[lowest] += moved;
        budget -= moved;
    }
    return expectation(p, x);
}

inline double robust_target(AmbiguityKind kind, std::span<const double> p_hat,
                            std::span<const double> x, AmbiguityRadius radius) {
    return kind == AmbiguityKind::KL ? kl_robust_target(p_hat, x, radius)
                                     : wasserstein_robust_target(p_hat, x, radius);
}

/// Empirical next-state frequencies per pair; pairs without data get the uniform row.
inline std::vector<double> empirical_kernel(const PairLayout& layout,
                                            std::span<const ObservationTriple> data) {
    const std::size_t n = layout.num_states();
    std::vector<double> counts(layout.num_pairs() * n, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& o = data[i];
        if (!layout.admissible(o.s, o.a) || o.next >= n) throw InvalidObservation(i, o);
        counts[layout.pair(o.s, o.a) * n + o.next] += 1.0;
    }
    for (std::size_t k = 0; k < layout.num_pairs(); ++k) {
        double* row = counts.data() + k * n;
        const double total = std::accumulate(row, row + n, 0.0);
        for (std::size_t j = 0; j < n; ++j)
            row[j] = total > 0.0 ? row[j] / total : 1.0 / static_cast<double>(n);
    }
    return counts;
}

/**
 * Distributionally robust target around a nominal kernel fixed at
 * construction. Streaming data never moves the ball.
 */
class RobustTarget {
public:
    RobustTarget(AmbiguityKind kind, AmbiguityRadius radius, std::vector<double> nominal)
        : kind_(kind), radius_(radius), nominal_(std::move(nominal)) {}

    double operator()(const SweepContext& ctx, std::size_t s, std::size_t a, std::size_t,
                      Rng&) {
        const std::size_t n = ctx.model.num_states();
        targets_.resize(n);
        one_step_targets(ctx.model, s, a, ctx.state_values, targets_);
        return robust_target(kind_, nominal(ctx.model.layout().pair(s, a), n), targets_, radius_);
    }

    std::span<const double> nominal(std::size_t pair, std::size_t n) const {
        return {nominal_.data() + pair * n, n};
    }

private:
    AmbiguityKind kind_;
    AmbiguityRadius radius_;
    std::vector<double> nominal_;
    std::vector<double> targets_;
};

inline RobustTarget drql_target(AmbiguityKind kind, AmbiguityRadius radius,
                                const PairLayout& layout,
                                std::span<const ObservationTriple> initial_data) {
    return RobustTarget(kind, radius, empirical_kernel(layout, initial_data));
}

/// Bayesian learner with the posterior-mean (risk-neutral) target.
inline BayesianRiskTarget brql_mean_target() { return BayesianRiskTarget(RiskFunctional::mean()); }

/// Fixed point of the robust operator at a frozen nominal kernel.
inline QTable robust_value_iteration(const MdpModel& model, RobustTarget target, double tol) {
    const auto prior = init_uniform_prior(model);
    Rng unused(0);
    return iterate_to_fixed_point(
        model,
        [&](const QTable& q) {
            const auto values = state_values(q);
            const SweepContext ctx{model, prior, q, values};
            QTable out(model.layout());
            for (std::size_t s = 0; s < model.num_states(); ++s)
                for (std::size_t a = 0; a < model.num_actions(s); ++a)
                    out(s, a) = target(ctx, s, a, 1, unused);
            return out;
        },
        tol);
}

} // namespace brql

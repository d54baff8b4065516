#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "brql/mdp.hpp"
#include "brql/posterior.hpp"
#include "brql/risk.hpp"
#include "brql/rng.hpp"

namespace brql {

inline constexpr std::size_t kDefaultSaaSamples = 20000;

/// 1e-6 R / (1 - gamma), or 1e-6 for a reward-free model.
inline double default_oracle_tolerance(const MdpModel& model) {
    const double b = model.value_bound();
    return 1e-6 * (b > 0.0 ? b : 1.0);
}

/**
 * Limiting posterior per pair: a point mass at the true kernel for pairs
 * treated as infinitely observed, the frozen Dirichlet otherwise.
 */
struct LimitingPosteriorSpec {
    std::vector<bool> dirac; // indexed by flat pair
    DirichletPosterior frozen;

    static LimitingPosteriorSpec all_frozen(DirichletPosterior posterior) {
        std::vector<bool> dirac(posterior.layout().num_pairs(), false);
        return {std::move(dirac), std::move(posterior)};
    }
    static LimitingPosteriorSpec all_dirac(const MdpModel& model) {
        return {std::vector<bool>(model.num_pairs(), true), init_uniform_prior(model)};
    }
};

/// One frozen set of posterior kernel draws per pair. Dirac pairs hold no draws.
class SaaSampleSet {
public:
    SaaSampleSet(const LimitingPosteriorSpec& spec, std::size_t n_big, const RngKey& key)
        : layout_(spec.frozen.layout()), n_big_(n_big), dirac_(spec.dirac),
          samples_(layout_.num_pairs()), means_(layout_.num_pairs()) {
        if (n_big < 1) throw std::invalid_argument("SAA sample count must be at least 1");
        if (dirac_.size() != layout_.num_pairs())
            throw std::invalid_argument("coverage labels must cover every pair");
        const std::size_t dim = layout_.num_states();
        for (std::size_t s = 0; s < layout_.num_states(); ++s) {
            for (std::size_t a = 0; a < layout_.num_actions(s); ++a) {
                const std::size_t k = layout_.pair(s, a);
                if (dirac_[k]) continue;
                Rng rng = key.child(k).stream();
                auto& block = samples_[k];
                block.resize(n_big * dim);
                auto& mean = means_[k];
                mean.assign(dim, 0.0);
                for (std::size_t i = 0; i < n_big; ++i) {
                    std::span<double> row(block.data() + i * dim, dim);
                    spec.frozen.sample(s, a, rng, row);
                    for (std::size_t j = 0; j < dim; ++j) mean[j] += row[j];
                }
                for (auto& m : mean) m /= static_cast<double>(n_big);
            }
        }
    }

    const PairLayout& layout() const { return layout_; }
    std::size_t size() const { return n_big_; }
    bool dirac(std::size_t pair) const { return dirac_[pair]; }

    std::span<const double> kernel(std::size_t pair, std::size_t i) const {
        const std::size_t dim = layout_.num_states();
        return {samples_[pair].data() + i * dim, dim};
    }
    /// Empirical mean of the frozen draws.
    std::span<const double> mean_kernel(std::size_t pair) const { return means_[pair]; }

private:
    PairLayout layout_;
    std::size_t n_big_;
    std::vector<bool> dirac_;
    std::vector<std::vector<double>> samples_;
    std::vector<std::vector<double>> means_;
};

/**
 * Deterministic sample-average operator: per pair, the risk estimate over the
 * frozen draws (true kernel for Dirac pairs, empirical mean kernel for Mean).
 */
inline QTable apply_saa_operator(const SaaSampleSet& set, const MdpModel& model,
                                 const RiskFunctional& risk, const QTable& q) {
    const std::size_t dim = model.num_states();
    const auto values = state_values(q);
    std::vector<double> w(dim);
    std::vector<double> xs(set.size());
    QTable out(model.layout());
    for (std::size_t s = 0; s < dim; ++s) {
        for (std::size_t a = 0; a < model.num_actions(s); ++a) {
            const std::size_t k = model.layout().pair(s, a);
            one_step_targets(model, s, a, values, w);
            if (set.dirac(k)) {
                out(s, a) = expectation(model.transition(s, a), w);
            } else if (risk.kind() == RiskKind::Mean) {
                out(s, a) = expectation(set.mean_kernel(k), w);
            } else {
                for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = expectation(set.kernel(k, i), w);
                out(s, a) = estimate_in_place(xs, risk);
            }
        }
    }
    return out;
}

inline QTable brmdp_fixed_point(const SaaSampleSet& set, const MdpModel& model,
                                const RiskFunctional& risk, double tol) {
    if (!(set.layout() == model.layout()))
        throw std::invalid_argument("sample set does not match the model's pairs");
    return iterate_to_fixed_point(
        model, [&](const QTable& q) { return apply_saa_operator(set, model, risk, q); }, tol);
}

/// Q^{phi,*} for a limiting posterior, via one frozen sample set of size n_big.
inline QTable brmdp_fixed_point(const LimitingPosteriorSpec& spec, const RiskFunctional& risk,
                                const MdpModel& model, std::size_t n_big, double tol,
                                const RngKey& key) {
    return brmdp_fixed_point(SaaSampleSet(spec, n_big, key), model, risk, tol);
}

inline QTable brmdp_fixed_point(const DirichletPosterior& posterior, const RiskFunctional& risk,
                                const MdpModel& model, std::size_t n_big, double tol,
                                const RngKey& key) {
    return brmdp_fixed_point(LimitingPosteriorSpec::all_frozen(posterior), risk, model, n_big, tol,
                             key);
}

/**
 * Q^{omega,*}: pairs labelled covered get the true kernel; the rest keep
 * Dirichlet(prior + observed counts).
 */
inline QTable data_conditional_optimal(std::span<const ObservationTriple> observations,
                                       const MdpModel& model, const RiskFunctional& risk,
                                       DirichletPosterior prior, std::size_t n_big, double tol,
                                       const RngKey& key, const std::vector<bool>& covered) {
    prior.update(observations);
    return brmdp_fixed_point(LimitingPosteriorSpec{covered, std::move(prior)}, risk, model, n_big,
                             tol, key);
}

struct ConcentrationBound {
    double probability_floor; // may be <= 0, in which case the bound says nothing
    double sup_norm_bound;

    bool vacuous() const { return probability_floor <= 0.0; }
};

/**
 * With probability at least 1 - O^(-1/3) sqrt(|S|/alpha), the BRMDP value
 * (unit Dirichlet prior, VaR or CVaR) is within
 * O^(-1/3) sqrt(|S|/alpha) 5 |S| R / (1-gamma)^2 of the true value, where O
 * is the smallest per-pair observation count.
 */
inline ConcentrationBound concentration_bound(std::size_t o_min, std::size_t num_states,
                                              double alpha, double r_bar, double gamma) {
    if (o_min < 1) throw std::invalid_argument("minimum observation count must be at least 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
    const double n = static_cast<double>(num_states);
    const double eps = std::cbrt(1.0 / static_cast<double>(o_min)) * std::sqrt(n / alpha);
    return {1.0 - eps, eps * 5.0 * n * r_bar / ((1.0 - gamma) * (1.0 - gamma))};
}

} // namespace brql

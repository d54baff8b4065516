#pragma once

// Hand-rolled generators shared by the property tests.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "brql/mdp.hpp"
#include "brql/posterior.hpp"
#include "brql/rng.hpp"

namespace brql::gen {

/// Random |S| x |A| MDP: Dirichlet(1,..,1) rows, rewards uniform on [lo, hi].
inline MdpModel random_mdp(Rng& rng, std::size_t states, std::size_t actions, double discount = 0.95,
                           double lo = 0.0, double hi = 1.0) {
    const std::size_t pairs = states * actions;
    std::vector<double> p(pairs * states), r(pairs * states);
    std::vector<double> ones(states, 1.0);
    for (std::size_t k = 0; k < pairs; ++k) {
        rng.dirichlet(ones, std::span<double>(p.data() + k * states, states));
        for (std::size_t j = 0; j < states; ++j) r[k * states + j] = lo + (hi - lo) * rng.uniform();
    }
    return MdpModel(std::vector<std::size_t>(states, actions), std::move(p), std::move(r), discount);
}

/// Random nonuniform action counts in [1, max_actions].
inline MdpModel random_ragged_mdp(Rng& rng, std::size_t states, std::size_t max_actions,
                                  double discount) {
    std::vector<std::size_t> acts(states);
    std::size_t pairs = 0;
    for (auto& a : acts) pairs += (a = 1 + rng.index(max_actions));
    std::vector<double> p(pairs * states), r(pairs * states);
    std::vector<double> ones(states, 1.0);
    for (std::size_t k = 0; k < pairs; ++k) {
        rng.dirichlet(ones, std::span<double>(p.data() + k * states, states));
        for (std::size_t j = 0; j < states; ++j) r[k * states + j] = 2.0 * rng.uniform() - 1.0;
    }
    return MdpModel(std::move(acts), std::move(p), std::move(r), discount);
}

inline QTable random_q(Rng& rng, const PairLayout& layout, double scale) {
    QTable q(layout);
    for (std::size_t s = 0; s < layout.num_states(); ++s)
        for (std::size_t a = 0; a < layout.num_actions(s); ++a) q(s, a) = scale * (2.0 * rng.uniform() - 1.0);
    return q;
}

/// Posterior with random integer counts added to the unit prior.
inline DirichletPosterior random_posterior(Rng& rng, const PairLayout& layout, std::size_t max_extra) {
    auto post = DirichletPosterior::uniform(layout);
    for (std::size_t s = 0; s < layout.num_states(); ++s)
        for (std::size_t a = 0; a < layout.num_actions(s); ++a)
            for (auto& c : post.counts(s, a)) c += static_cast<double>(rng.index(max_extra + 1));
    return post;
}

/// Integer-valued batch in [-range, range]; sums stay exact in double.
inline std::vector<double> integer_batch(Rng& rng, std::size_t n, int range) {
    std::vector<double> xs(n);
    for (auto& x : xs) x = static_cast<double>(static_cast<int>(rng.index(2 * range + 1)) - range);
    return xs;
}

inline std::vector<double> random_simplex(Rng& rng, std::size_t n) {
    std::vector<double> ones(n, 1.0), out(n);
    rng.dirichlet(ones, out);
    return out;
}

/// |a - b| within k units in the last place of the larger magnitude.
inline bool within_ulps(double a, double b, int k) {
    const double scale = std::max({std::abs(a), std::abs(b), std::numeric_limits<double>::min()});
    return std::abs(a - b) <= k * std::numeric_limits<double>::epsilon() * scale;
}

} // namespace brql::gen

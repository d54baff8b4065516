#pragma once

#include <cmath>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "brql/mdp.hpp"

namespace brql {

/// Distribution of the number of successes among independent Bernoulli trials.
inline std::vector<double> poisson_binomial_pmf(const std::vector<double>& probs) {
    std::vector<double> pmf{1.0};
    for (double p : probs) {
        std::vector<double> next(pmf.size() + 1, 0.0);
        for (std::size_t k = 0; k < pmf.size(); ++k) {
            next[k] += pmf[k] * (1.0 - p);
            next[k + 1] += pmf[k] * p;
        }
        pmf = std::move(next);
    }
    return pmf;
}

/// Poisson(mean) conditioned on {0..support_max}.
inline std::vector<double> truncated_poisson_pmf(double mean, std::size_t support_max) {
    if (!(mean > 0.0)) throw std::invalid_argument("Poisson mean must be positive");
    std::vector<double> pmf(support_max + 1);
    double total = 0.0;
    for (std::size_t d = 0; d <= support_max; ++d) {
        const double k = static_cast<double>(d);
        pmf[d] = std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
        total += pmf[d];
    }
    for (auto& p : pmf) p /= total;
    return pmf;
}

// ---------------------------------------------------------------------------
// Coin toss: K coins, guess whether the next toss shows more (+1) or fewer
// (-1) heads, or abstain (0).

namespace coin {

/// Action index -> guess in {-1, 0, +1}.
inline int guess(std::size_t action) { return static_cast<int>(action) - 1; }

inline double reward(std::size_t s, std::size_t action, std::size_t next) {
    const int a = guess(action);
    if (s < next) return a;
    if (s > next) return -a;
    return -std::abs(a);
}

} // namespace coin

inline MdpModel coin_toss_env(std::size_t num_coins, const std::vector<double>& head_probs,
                              double discount = 0.95) {
    if (num_coins < 1) throw std::invalid_argument("coin toss needs at least one coin");
    if (head_probs.size() != num_coins)
        throw std::invalid_argument("need one head probability per coin");
    for (double p : head_probs)
        if (!(p > 0.0 && p < 1.0))
            throw std::invalid_argument("head probability must lie in (0,1)");

    const std::size_t n = num_coins + 1;
    const auto row = poisson_binomial_pmf(head_probs);
    std::vector<double> transitions, rewards;
    transitions.reserve(n * 3 * n);
    rewards.reserve(n * 3 * n);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t a = 0; a < 3; ++a) {
            transitions.insert(transitions.end(), row.begin(), row.end());
            for (std::size_t next = 0; next < n; ++next)
                rewards.push_back(coin::reward(s, a, next));
        }
    }
    return MdpModel(std::vector<std::size_t>(n, 3), std::move(transitions), std::move(rewards),
                    discount);
}

inline MdpModel coin_toss_env(std::size_t num_coins, double head_prob = 0.5,
                              double discount = 0.95) {
    return coin_toss_env(num_coins, std::vector<double>(num_coins, head_prob), discount);
}

// ---------------------------------------------------------------------------
// Capacitated inventory with lost sales. States are levels -K..K stored at
// index level + K; negative levels record the demand lost last period.

struct InventoryCosts {
    double order_cost = 1.0; // c
    double profit = 5.0;     // u
    double penalty = 2.0;    // q
    double holding = 1.0;    // h
};

/// Demand pmf over {0..K} given the pre-order on-hand stock s+.
using DemandModel = std::function<std::vector<double>(std::size_t on_hand)>;

class Inventory {
public:
    Inventory(std::size_t capacity, InventoryCosts costs)
        : capacity_(capacity), costs_(costs) {
        if (capacity < 1) throw std::invalid_argument("inventory capacity must be at least 1");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t num_states() const { return 2 * capacity_ + 1; }
    int level(std::size_t index) const {
        return static_cast<int>(index) - static_cast<int>(capacity_);
    }
    std::size_t index(int level) const {
        return static_cast<std::size_t>(level + static_cast<int>(capacity_));
    }
    static std::size_t on_hand(int level) { return level > 0 ? static_cast<std::size_t>(level) : 0; }
    std::size_t num_orders(int level) const { return capacity_ - on_hand(level) + 1; }

    /// Level after ordering `order` and facing `demand`.
    int next_level(int level, std::size_t order, std::size_t demand) const {
        check_order(level, order);
        const auto stock = static_cast<long>(on_hand(level) + order);
        const auto d = static_cast<long>(demand);
        return static_cast<int>(d <= stock ? stock - d : -(d - stock));
    }

    double reward(int level, std::size_t order, int next) const {
        check_order(level, order);
        const double a = static_cast<double>(order);
        const double held = next > 0 ? next : 0;
        const double lost = next < 0 ? -next : 0;
        const double sold = static_cast<double>(on_hand(level)) + a - held;
        return -(costs_.order_cost * a + costs_.holding * held + costs_.penalty * lost) +
               costs_.profit * sold;
    }

    MdpModel model(const DemandModel& demand, double discount = 0.95) const {
        const std::size_t n = num_states();
        std::vector<std::size_t> actions(n);
        std::vector<double> transitions, rewards;
        for (std::size_t i = 0; i < n; ++i) {
            const int s = level(i);
            actions[i] = num_orders(s);
            const auto pmf = demand(on_hand(s));
            if (pmf.size() > capacity_ + 1)
                throw std::invalid_argument("demand support exceeds {0..K}");
            for (std::size_t a = 0; a < actions[i]; ++a) {
                std::vector<double> row(n, 0.0);
                for (std::size_t d = 0; d < pmf.size(); ++d)
                    row[index(next_level(s, a, d))] += pmf[d];
                transitions.insert(transitions.end(), row.begin(), row.end());
                for (std::size_t j = 0; j < n; ++j) rewards.push_back(reward(s, a, level(j)));
            }
        }
        return MdpModel(std::move(actions), std::move(transitions), std::move(rewards), discount);
    }

private:
    void check_order(int level, std::size_t order) const {
        if (order > capacity_ - on_hand(level))
            throw std::invalid_argument("order " + std::to_string(order) +
                                        " exceeds free capacity at level " + std::to_string(level));
    }

    std::size_t capacity_;
    InventoryCosts costs_;
};

inline MdpModel inventory_env(std::size_t capacity, InventoryCosts costs, const DemandModel& demand,
                              double discount = 0.95) {
    return Inventory(capacity, costs).model(demand, discount);
}

namespace demand {

inline DemandModel uniform(std::size_t capacity) {
    return [capacity](std::size_t) {
        return std::vector<double>(capacity + 1, 1.0 / static_cast<double>(capacity + 1));
    };
}

inline DemandModel poisson(double mean, std::size_t capacity) {
    auto pmf = truncated_poisson_pmf(mean, capacity);
    return [pmf](std::size_t) { return pmf; };
}

/// Truncated Poisson with mean base + slope * s+ / K.
inline DemandModel state_dependent(std::size_t capacity, double base = 2.0, double slope = 2.0) {
    return [=](std::size_t on_hand) {
        const double mean =
            base + slope * static_cast<double>(on_hand) / static_cast<double>(capacity);
        return truncated_poisson_pmf(mean, capacity);
    };
}

} // namespace demand

} // namespace brql

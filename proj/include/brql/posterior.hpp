#pragma once

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "brql/mdp.hpp"
#include "brql/rng.hpp"

namespace brql {

/// One observed transition (s, a, s').
struct ObservationTriple {
    std::size_t s = 0;
    std::size_t a = 0;
    std::size_t next = 0;

    friend bool operator==(const ObservationTriple&, const ObservationTriple&) = default;
};

/// Thrown for an observation outside the model; carries the batch position.
class InvalidObservation : public std::invalid_argument {
public:
    InvalidObservation(std::size_t index, const ObservationTriple& o)
        : std::invalid_argument("invalid observation at index " + std::to_string(index) + ": (" +
                                std::to_string(o.s) + ", " + std::to_string(o.a) + ", " +
                                std::to_string(o.next) + ")"),
          index_(index) {}

    std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

/**
 * Independent Dirichlet distributions over successor states, one per
 * admissible (s, a). Counts are reals so non-unit priors are allowed;
 * observations only ever add whole counts.
 */
class DirichletPosterior {
public:
    DirichletPosterior() = default;

    DirichletPosterior(PairLayout layout, std::vector<double> counts)
        : layout_(std::move(layout)), counts_(std::move(counts)) {
        if (counts_.size() != layout_.num_pairs() * layout_.num_states())
            throw std::invalid_argument("count table has wrong size");
        for (double c : counts_)
            if (!(c > 0.0) || !std::isfinite(c))
                throw std::invalid_argument("Dirichlet counts must be positive and finite");
    }

    /// Every count equal to `concentration` (1 gives the uniform prior).
    static DirichletPosterior uniform(const PairLayout& layout, double concentration = 1.0) {
        return DirichletPosterior(layout, std::vector<double>(layout.num_pairs() * layout.num_states(),
                                                              concentration));
    }

    const PairLayout& layout() const { return layout_; }
    std::size_t num_states() const { return layout_.num_states(); }

    std::span<const double> counts(std::size_t s, std::size_t a) const {
        return {counts_.data() + layout_.pair(s, a) * num_states(), num_states()};
    }
    std::span<double> counts(std::size_t s, std::size_t a) {
        return {counts_.data() + layout_.pair(s, a) * num_states(), num_states()};
    }
    const std::vector<double>& count_table() const { return counts_; }

    bool valid(const ObservationTriple& o) const {
        return layout_.admissible(o.s, o.a) && o.next < num_states();
    }

    /// Adds one count for a single observation.
    void observe(const ObservationTriple& o, std::size_t index = 0) {
        if (!valid(o)) throw InvalidObservation(index, o);
        counts(o.s, o.a)[o.next] += 1.0;
    }

    /// Adds the batch; validated up front so a bad batch leaves counts untouched.
    void update(std::span<const ObservationTriple> batch) {
        for (std::size_t i = 0; i < batch.size(); ++i)
            if (!valid(batch[i])) throw InvalidObservation(i, batch[i]);
        for (const auto& o : batch) counts(o.s, o.a)[o.next] += 1.0;
    }

    std::vector<double> mean(std::size_t s, std::size_t a) const {
        auto c = counts(s, a);
        double total = 0.0;
        for (double x : c) total += x;
        std::vector<double> out(c.begin(), c.end());
        for (auto& x : out) x /= total;
        return out;
    }

    /// Posterior-mean kernel for every pair, laid out like MdpModel::transition_table.
    std::vector<double> mean_table() const {
        std::vector<double> out;
        out.reserve(counts_.size());
        for (std::size_t s = 0; s < num_states(); ++s)
            for (std::size_t a = 0; a < layout_.num_actions(s); ++a) {
                auto m = mean(s, a);
                out.insert(out.end(), m.begin(), m.end());
            }
        return out;
    }

    void sample(std::size_t s, std::size_t a, Rng& rng, std::span<double> out) const {
        rng.dirichlet(counts(s, a), out);
    }

    std::vector<double> sample(std::size_t s, std::size_t a, Rng& rng) const {
        std::vector<double> out(num_states());
        sample(s, a, rng, out);
        return out;
    }

    friend bool operator==(const DirichletPosterior&, const DirichletPosterior&) = default;

private:
    PairLayout layout_;
    std::vector<double> counts_;
};

inline DirichletPosterior init_uniform_prior(const MdpModel& model) {
    return DirichletPosterior::uniform(model.layout());
}

inline DirichletPosterior update(DirichletPosterior posterior,
                                 std::span<const ObservationTriple> batch) {
    posterior.update(batch);
    return posterior;
}

inline std::vector<double> posterior_mean(const DirichletPosterior& posterior, std::size_t s,
                                          std::size_t a) {
    return posterior.mean(s, a);
}

inline std::vector<double> sample_kernel(const DirichletPosterior& posterior, std::size_t s,
                                         std::size_t a, Rng& rng) {
    return posterior.sample(s, a, rng);
}

/// `s a count_0 .. count_{n-1}` per admissible pair.
inline void write_posterior(std::ostream& os, const DirichletPosterior& posterior) {
    os.precision(17);
    const auto& layout = posterior.layout();
    for (std::size_t s = 0; s < layout.num_states(); ++s)
        for (std::size_t a = 0; a < layout.num_actions(s); ++a) {
            os << s << ' ' << a;
            for (double c : posterior.counts(s, a)) os << ' ' << c;
            os << '\n';
        }
}

inline DirichletPosterior read_posterior(std::istream& is, const PairLayout& layout) {
    std::vector<double> counts(layout.num_pairs() * layout.num_states(), 0.0);
    std::vector<bool> seen(layout.num_pairs(), false);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t s, a;
        if (!(ls >> s >> a) || !layout.admissible(s, a))
            throw std::invalid_argument("bad posterior line " + std::to_string(lineno));
        const std::size_t k = layout.pair(s, a);
        for (std::size_t j = 0; j < layout.num_states(); ++j)
            if (!(ls >> counts[k * layout.num_states() + j]))
                throw std::invalid_argument("short posterior line " + std::to_string(lineno));
        seen[k] = true;
    }
    for (std::size_t k = 0; k < seen.size(); ++k)
        if (!seen[k]) throw std::invalid_argument("posterior snapshot is missing a pair");
    return DirichletPosterior(layout, std::move(counts));
}

} // namespace brql

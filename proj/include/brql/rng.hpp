#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>

namespace brql {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

class Rng;

/**
 * Names a random stream by a path of integers and labels.
 *
 * Keys are values; `child` derives a new key without touching the parent, so
 * the stream used for, say, posterior sampling at sweep 17 for pair 3 does not
 * depend on how many draws any other stream has made.
 */
class RngKey {
public:
    constexpr explicit RngKey(std::uint64_t seed = 0) noexcept : state_(detail::splitmix64(seed)) {}

    [[nodiscard]] constexpr RngKey child(std::uint64_t index) const noexcept {
        RngKey k;
        k.state_ = detail::splitmix64(state_ ^ detail::splitmix64(index + 0x632be59bd9b4e019ULL));
        return k;
    }

    [[nodiscard]] constexpr RngKey child(std::string_view label) const noexcept {
        return child(detail::fnv1a(label));
    }

    [[nodiscard]] constexpr RngKey child(std::initializer_list<std::uint64_t> path) const noexcept {
        RngKey k = *this;
        for (auto i : path) k = k.child(i);
        return k;
    }

    [[nodiscard]] constexpr std::uint64_t value() const noexcept { return state_; }

    [[nodiscard]] Rng stream() const;

    friend constexpr bool operator==(const RngKey&, const RngKey&) = default;

private:
    std::uint64_t state_ = 0;
};

/// Deterministic generator with its own uniform/normal/gamma transforms, so
/// draws are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on the open interval (0, 1).
    double uniform_open() {
        double u;
        do {
            u = uniform();
        } while (u == 0.0);
        return u;
    }

    /// Uniform integer in [0, n); bias is at most n * 2^-53.
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n));
    }

    /// Standard normal by the Marsaglia polar method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    /// Gamma(shape, 1) by Marsaglia-Tsang; shapes below one use the
    /// U^(1/shape) boost of a Gamma(shape + 1) draw.
    double gamma(double shape) {
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0);
            return g * std::pow(uniform_open(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_open();
            const double x2 = x * x;
            if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
            if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// One Dirichlet(alpha) draw written into `out` (same length as alpha).
    void dirichlet(std::span<const double> alpha, std::span<double> out) {
        double total = 0.0;
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            out[i] = gamma(alpha[i]);
            total += out[i];
        }
        for (auto& x : out) x /= total;
    }

    /// Index drawn from a probability vector by inversion.
    std::size_t categorical(std::span<const double> probs) {
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        // rounding: fall back to the last index with positive mass
        for (std::size_t i = probs.size(); i-- > 0;)
            if (probs[i] > 0.0) return i;
        return probs.size() - 1;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline Rng RngKey::stream() const { return Rng(state_); }

} // namespace brql

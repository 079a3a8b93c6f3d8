#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace levelcast {

// SplitMix64 step; used to derive independent child seeds from a master
// seed so parallel units (players, trees) get decorrelated streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d49b3297763331ULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t s = master + 0x9e3779b97f4a7c15ULL * (index + 1);
    return splitmix64(s);
}

// Bounded draw via modulo. The bias is negligible for 64-bit state and the
// point here is a stable, implementation-independent mapping.
inline std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

// Fisher-Yates with an explicit draw so shuffles are reproducible across
// standard library implementations (std::shuffle is unspecified).
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = bounded(rng, i);
        std::swap(items[i - 1], items[j]);
    }
}

// Distribution sampler over mt19937_64 with explicit transforms
// (Box-Muller, Marsaglia-Tsang) instead of std::*_distribution, whose
// draw sequences differ between standard library implementations.
class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}

    std::mt19937_64& engine() { return rng_; }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe under log().
    double uniform_pos() {
        return (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (cosine branch only, so each call
    // consumes exactly two engine draws).
    double normal() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Gamma(shape, rate) via Marsaglia-Tsang squeeze; the shape < 1 case
    // boosts through Gamma(shape + 1).
    double gamma(double shape, double rate) {
        if (shape < 1.0)
            return gamma(shape + 1.0, rate) * std::pow(uniform_pos(), 1.0 / shape);
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double t = 1.0 + c * x;
            if (t <= 0.0) continue;
            double v = t * t * t;
            double u = uniform_pos();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v / rate;
        }
    }

private:
    static constexpr double kPi = 3.141592653589793238462643383279502884;
    std::mt19937_64 rng_;
};

} // namespace levelcast

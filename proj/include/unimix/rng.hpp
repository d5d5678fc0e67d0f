// Deterministic random number generation.
//
// All randomness in the library flows through Rng so that identical seeds
// give bit-identical results on every platform. std::mt19937_64 has a
// standard-specified output sequence; the distributions below are implemented
// by hand because the standard <random> distributions are
// implementation-defined.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace unimix {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Fixed sub-seed derivation: every component draws its seed from
// (global seed, purpose string, index) so concurrent or reordered work
// cannot perturb another component's stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose,
                                 std::uint64_t index = 0) {
    return splitmix64(splitmix64(base ^ fnv1a64(purpose)) ^ index);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + uniform01() * (hi - lo);
    }

    // Uniform in [0, n). Modulo bias is negligible for the small n used here.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: n must be > 0");
        return gen_() % n;
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Inverse-CDF exponential with the given mean.
    double exponential(double mean) {
        return -mean * std::log1p(-uniform01());
    }

    // Box-Muller, no caching so the draw count per call site is fixed.
    double normal(double mean, double sigma) {
        double u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return mean + sigma * r * std::cos(2.0 * M_PI * u2);
    }

    // Index into a discrete weight vector; weights must sum to > 0.
    std::size_t pick_weighted(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw std::invalid_argument("pick_weighted: negative weight");
            total += w;
        }
        if (total <= 0.0) throw std::invalid_argument("pick_weighted: weights sum to zero");
        double u = uniform01() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.size() - 1;
    }

    // Fisher-Yates; std::shuffle is implementation-defined, this is not.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace unimix

#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "subcluster/errors.hpp"

namespace subcluster {

// splitmix64 finalizer; used for seed expansion and deriving child seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    return mix64(seed ^ mix64(tag + 0x632be59bd9b4e019ULL));
}

// Deterministic xoshiro256++ stream. The output sequence depends only on the
// seed, never on the platform's <random> internals, so runs reproduce
// bit-identically everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) {
            word = mix64(x);
            x = word;
        }
    }

    std::uint64_t seed() const { return seed_; }

    // Child stream tied to (construction seed, tag); independent of how much
    // of this stream has already been consumed.
    Rng fork(std::uint64_t tag) const { return Rng(derive_seed(seed_, tag)); }

    std::uint64_t next_u64() {
        const std::uint64_t result = std::rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = std::rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53 mantissa bits.
    double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1]; safe to pass through log().
    double next_uniform_open() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Box-Muller; consumes exactly two uniforms per draw.
    double next_gaussian() {
        const double u1 = next_uniform_open();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    std::vector<double> uniform(std::size_t n) {
        std::vector<double> out(n);
        for (auto& v : out) v = next_uniform();
        return out;
    }

    std::vector<double> gaussian(std::size_t n, double mu = 0.0, double sigma = 1.0) {
        if (sigma < 0.0) throw ParameterError("gaussian: sigma must be non-negative");
        std::vector<double> out(n);
        for (auto& v : out) v = mu + sigma * next_gaussian();
        return out;
    }

    // Unbiased index in [0, n) via masked rejection.
    std::size_t next_index(std::size_t n) {
        if (n == 0) throw ParameterError("next_index: n must be positive");
        if (n == 1) return 0;
        const std::uint64_t mask = ~std::uint64_t{0} >> std::countl_zero(std::uint64_t{n - 1});
        for (;;) {
            const std::uint64_t v = next_u64() & mask;
            if (v < n) return static_cast<std::size_t>(v);
        }
    }

    // Fisher-Yates.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[next_index(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_;
};

}  // namespace subcluster

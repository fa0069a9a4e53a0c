#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace crys {

/// Deterministic SplitMix64 generator. All randomness in the project flows
/// through this class so that runs are bit-reproducible across platforms;
/// no std:: distribution or engine is used anywhere. Named sub-streams keep
/// the shuffle / init / negative-sampling / synthetic streams independent:
/// perturbing one does not shift the others.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// Derive an independent sub-stream. The child seed is
    /// mix(parent_state XOR fnv1a64(name)), so equal names on equal parents
    /// always yield equal streams.
    Rng stream(std::string_view name) const {
        return Rng(mix(state_ ^ fnv1a64(name)));
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Uniform integer in [lo, hi], both inclusive. Rejection sampling, so the
    /// result does not depend on platform integer division quirks.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        if (span == 0) return lo + static_cast<std::int64_t>(next_u64()); // full 64-bit range
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return lo + static_cast<std::int64_t>(x % span);
    }

    /// Box-Muller without caching the second deviate; each call consumes
    /// exactly two uniforms, which keeps the stream position predictable.
    double normal(double mean, double stddev) {
        const double u1 = 1.0 - uniform(); // (0, 1], log-safe
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Fisher-Yates with our own uniform_int; std::shuffle is unspecified.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t fnv1a64(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    std::uint64_t state_;
};

} // namespace crys

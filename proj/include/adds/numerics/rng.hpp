// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace adds::num {

/// 64-bit FNV-1a. Used for stream labels, config hashes and weight
/// fingerprints, so it must stay stable across platforms.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a_bytes(const void* p, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based generator: draw i of stream (seed, label) is a pure hash of
/// the triple, so a stream's whole state is its counter. Distinct consumers
/// (init, dropout, sampler, shuffling) each get their own labeled stream.
///
/// Distribution conversions are written out here rather than taken from
/// <random>, whose distributions are implementation-defined.
class SeedStream {
public:
    SeedStream() = default;
    SeedStream(std::uint64_t seed, std::string_view label, std::uint64_t counter = 0)
        : key_(splitmix64(seed ^ splitmix64(fnv1a(label)))), counter_(counter) {}

    /// Sub-stream keyed by an index, e.g. one per sample or per epoch.
    SeedStream fork(std::uint64_t index) const {
        SeedStream s;
        s.key_ = splitmix64(key_ ^ splitmix64(index + 0x632be59bd9b4e019ULL));
        return s;
    }

    std::uint64_t next_u64() { return splitmix64(key_ + splitmix64(counter_++)); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller (one draw per pair, no caching, so the
    /// counter fully describes the state).
    double normal() {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t counter() const noexcept { return counter_; }
    void set_counter(std::uint64_t c) noexcept { counter_ = c; }
    std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace adds::num

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <utility>

namespace lrx::rng {

// Counter-based deterministic generation: every variate is a pure function of
// its key, so streamed consumers can regenerate any draw without storing it.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                            std::uint64_t c) noexcept {
    std::uint64_t h = splitmix64(seed ^ 0x8edb1f4b44c9a1d3ULL);
    h = splitmix64(h ^ (a * 0x9e3779b97f4a7c15ULL + 1));
    h = splitmix64(h ^ (b * 0xbf58476d1ce4e5b9ULL + 1));
    h = splitmix64(h ^ (c * 0x94d049bb133111ebULL + 1));
    return h;
}

// Uniform on (0, 1] from the top 53 bits.
inline double uniform01(std::uint64_t word) noexcept {
    return static_cast<double>((word >> 11) + 1) * 0x1.0p-53;
}

// Standard normal draw keyed by (seed, a, b, c): two derived uniforms through
// the Box-Muller cosine branch.
inline double gaussian(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c) noexcept {
    const std::uint64_t w1 = mix(seed, a, b, c);
    const std::uint64_t w2 = splitmix64(w1 ^ 0xd1b54a32d192ed03ULL);
    const double u1 = uniform01(w1);
    const double u2 = uniform01(w2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Sequential labeled stream over the counter space.
class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t label) : seed_(seed), label_(label) {}

    std::uint64_t next_u64() { return mix(seed_, label_, counter_++, 0); }
    double next_uniform() { return uniform01(next_u64()); }
    double next_gaussian() { return gaussian(seed_, label_, counter_++, 1); }

private:
    std::uint64_t seed_;
    std::uint64_t label_;
    std::uint64_t counter_ = 0;
};

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic seed derivation by folding labeled indices into a hash chain.
// Order-sensitive by construction.
inline std::uint64_t derive(std::uint64_t master,
                            std::initializer_list<std::pair<std::string_view, std::uint64_t>> labels) {
    std::uint64_t h = splitmix64(master ^ 0xa0761d6478bd642fULL);
    for (const auto& [name, index] : labels) {
        h = splitmix64(h ^ fnv1a(name));
        h = splitmix64(h ^ (index * 0xe7037ed1a0b428dbULL + 0x1d8e4e27c47d124fULL));
    }
    return h;
}

} // namespace lrx::rng

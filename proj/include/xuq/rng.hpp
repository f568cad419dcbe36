#pragma once
// Self-contained deterministic random number generation.
//
// The standard library distributions are not bit-identical across
// implementations, so everything that feeds randomness into results goes
// through this header: a xoshiro256++ generator plus hand-rolled uniform,
// normal and Bernoulli draws. Seed derivation is a documented pure function
// of (seed, tags...) so that parallel schedules cannot perturb any result.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <concepts>
#include <string>
#include <string_view>
#include <vector>

namespace xuq::rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer; bijective scrambling of a 64-bit word.
inline constexpr std::uint64_t scramble(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a over the bytes of a label; used to turn tag strings into words.
inline constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// One component of a derivation path: either an integer or a hashed label.
struct Tag {
    std::uint64_t value;
    template <std::integral T>
    constexpr Tag(T v) : value(static_cast<std::uint64_t>(v)) {}
    constexpr Tag(std::string_view s) : value(fnv1a(s)) {}
    constexpr Tag(const char* s) : value(fnv1a(s)) {}
    Tag(const std::string& s) : value(fnv1a(s)) {}
};

// derive(seed, {a, b, ...}) folds each tag into the seed with
// h <- scramble((h + golden) ^ (tag * M)). The scheme is fixed; results in
// reports depend on it, so treat any change as a breaking format change.
inline constexpr std::uint64_t derive(std::uint64_t seed, std::initializer_list<Tag> tags) noexcept {
    std::uint64_t h = seed;
    for (const Tag& t : tags) {
        h = scramble((h + kGolden) ^ (t.value * 0xff51afd7ed558ccdULL));
    }
    return h;
}

inline constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
}

// xoshiro256++ seeded through splitmix64.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) {
            s += kGolden;
            word = scramble(s);
        }
    }

    std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; consumes exactly two uniforms per call.
    double normal() noexcept {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n == 0) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = next();
        while (x >= limit) x = next();
        return x % n;
    }

    std::size_t index(std::size_t n) noexcept { return static_cast<std::size_t>(below(n)); }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) noexcept {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::uint64_t state_[4]{};
};

}  // namespace xuq::rng

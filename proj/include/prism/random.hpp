#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace prism {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Child seed for a task identified by `path`, e.g. (seed, level, trial).
/// Depends only on the arguments, never on scheduling.
inline std::uint64_t split_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = mix64(seed);
    for (auto p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

/// Seeded generator with platform-independent draws.
///
/// The standard distributions are implementation-defined, so the few we
/// need are derived here directly from the mt19937_64 bit stream, which
/// the standard does pin down.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    /// Standard normal (Box-Muller, one value per call).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace prism

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace bizmodel {

/// Mixes a 64-bit value (SplitMix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

/// Child seed for the i-th member of a family (tree t, k-means start s, ...).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Child seed for a named substream ("forest", "kmeans", "synth", "gb").
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

/// Seeded random stream. Draw helpers avoid the standard distributions so
/// that streams are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);

    /// Uniform real in [0, 1).
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal draw (Box-Muller, one value per call).
    double normal();

    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    std::mt19937_64 engine_;
};

} // namespace bizmodel

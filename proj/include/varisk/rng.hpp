#pragma once

#include <cstdint>
#include <random>

namespace varisk {

std::uint64_t splitmix64(std::uint64_t x);

/// Derives an independent seed for substream `key` of a run seeded with `seed`.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t key);

/// Deterministic random stream. Every variate is built from raw 64-bit engine
/// output so results do not depend on the standard library's distributions.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : engine_(seed) {}
    Stream(std::uint64_t seed, std::uint64_t key) : engine_(substream_seed(seed, key)) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform on the open interval (0, 1).
    double uniform_open();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    /// Unit-rate exponential.
    double exponential();
    /// Standard normal via Box-Muller (one variate per call).
    double normal();

private:
    std::mt19937_64 engine_;
};

} // namespace varisk

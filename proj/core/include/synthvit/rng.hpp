#pragma once

#include <cstdint>

namespace synthvit {

/// Deterministic random stream: xoshiro256++ seeded through splitmix64.
///
/// The integer and uniform-double streams are pure integer arithmetic and
/// therefore bit-identical across platforms for the same seed and call
/// sequence. normal() uses Box-Muller (sqrt/log/cos), so its bits depend on
/// the libm build; within one build it is fully deterministic.
///
/// Instances are single-owner. Hand a split() child to anything that runs
/// concurrently.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform in [0,1), 53-bit mantissa construction.
    double uniform();

    /// Uniform in [lo,hi).
    double uniform(double lo, double hi);

    /// Uniform integer in [0,n), unbiased via rejection. n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n);

    /// Standard normal via Box-Muller with a cached spare.
    double normal();
    double normal(double mean, double stddev);

    /// Independent child stream; deterministic function of the parent state.
    Rng split();

private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace synthvit

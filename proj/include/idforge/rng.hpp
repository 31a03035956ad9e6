#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace idforge {

// Deterministic splittable PRNG: xoshiro256++ state expanded from a 64-bit
// seed via splitmix64. Child streams are derived from the *seed identity*
// (not the consumption position), so `rng.child("x")` yields the same stream
// no matter how much of `rng` has been consumed. That is what makes stage
// reruns and trajectory replay reproducible.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution.
    double uniform();

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);

    // Standard normal via Box-Muller; consumes exactly two u64 draws.
    double normal();

    std::vector<double> normal_vec(std::size_t n);

    // Independent child stream named by label (and optional index).
    Rng child(std::string_view label) const;
    Rng child(std::string_view label, std::uint64_t index) const;

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
};

} // namespace idforge

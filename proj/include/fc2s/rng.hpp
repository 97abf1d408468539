#pragma once

#include <cstdint>
#include <string_view>

namespace fc2s {

// Counter-based generator: output k is a SplitMix64 finalizer applied to
// seed + k * golden-gamma. Identical seeds give identical streams everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept;
    // Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    // Uniform in the open interval (0, 1).
    double uniform_open() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    double normal() noexcept;
    // Uniform integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n) noexcept;

    // Independent child stream; depends only on this generator's seed and the tag.
    Rng fork(std::string_view tag) const noexcept;
    Rng fork(std::uint64_t index) const noexcept;

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z) noexcept;

}  // namespace fc2s

#pragma once

#include <cstdint>
#include <string_view>

namespace snerf {

/// Small deterministic generator (splitmix64 seeding + xoshiro256**).
/// Sequences are identical on every platform, unlike std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();

  /// Independent stream keyed by a label, e.g. rng.derive("trajectory").
  Rng derive(std::string_view label) const;
  Rng derive(std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

}  // namespace snerf

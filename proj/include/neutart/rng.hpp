#pragma once

#include <cmath>
#include <cstdint>

namespace neutart {

// 64-bit linear congruential generator with Knuth's MMIX constants:
//   state <- state * 6364136223846793005 + 1442695040888963407 (mod 2^64)
// Doubles take the top 53 bits of the state. All seeded behaviour in the
// project (parameter init, batch shuffling, synthetic data) goes through
// this generator so runs are byte-reproducible across platforms.
class Lcg {
public:
  explicit Lcg(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
    return state_;
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Box-Muller; consumes two uniforms per call.
  double normal(double mean, double stddev) {
    double u1 = 1.0 - next_double(); // (0, 1]
    double u2 = next_double();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    return mean + stddev * z;
  }

  // Uniform integer in [0, n).
  long next_below(long n) {
    return static_cast<long>(next_u64() % static_cast<std::uint64_t>(n));
  }

private:
  std::uint64_t state_;
};

} // namespace neutart

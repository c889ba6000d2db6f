// Deterministic RNG with named substreams. All randomness in the project
// flows from one seed through Rng::substream so runs are reproducible
// bit-for-bit regardless of which components consume how many draws.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace mvdepth {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Scramble once so seeds 0,1,2,... do not start in nearby states.
    detail::splitmix64(state_);
  }

  // Independent stream derived from this one's seed, not its position.
  Rng substream(std::string_view name) const {
    return Rng(seed_mix(detail::fnv1a64(name)));
  }
  Rng substream(std::uint64_t index) const {
    return Rng(seed_mix(0x632be59bd9b4e019ULL ^ index));
  }

  std::uint64_t next_u64() { return detail::splitmix64(state_); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; draws two uniforms per call, no cached second value.
  double normal() {
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double stddev) { return stddev * normal(); }

  // Uniform integer in [0, n) via multiply-shift.
  std::int64_t uniform_int(std::int64_t n) {
    return static_cast<std::int64_t>(
        (static_cast<__uint128_t>(next_u64()) * static_cast<std::uint64_t>(n)) >> 64);
  }

 private:
  std::uint64_t seed_mix(std::uint64_t salt) const {
    std::uint64_t s = state_ ^ salt;
    return detail::splitmix64(s);
  }

  std::uint64_t state_;
};

}  // namespace mvdepth

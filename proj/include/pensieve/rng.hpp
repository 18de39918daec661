#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace pensieve {

// Counter-based pseudorandom generator on the SplitMix64 finalizer.
//
// Every draw is a pure function of (seed, stream, counter). There is no
// mutable state, so any counter can be evaluated in any order and a parallel
// fill produces bit-identical values to a serial one. Distinct streams keep
// independent uses of one run seed (noise, token sampling, weight init) from
// overlapping.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix(seed ^ mix(stream ^ 0x9e3779b97f4a7c15ull))) {}

  // counter-th 64-bit word of this stream
  std::uint64_t word(std::uint64_t counter) const {
    return mix(key_ + (counter + 1) * 0x9e3779b97f4a7c15ull);
  }

  // uniform double in [0, 1) with 53 random mantissa bits
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(word(counter) >> 11) * 0x1.0p-53;
  }

  // counter-th standard normal draw, Box-Muller over words 2i and 2i+1.
  // u1 < 1 keeps the log argument in (0, 1], so the result is finite.
  double normal(std::uint64_t counter) const {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
};

// Stream ids, one per independent consumer of the run seed.
namespace streams {
inline constexpr std::uint64_t kDiffusionNoise = 0x6e6f6973;  // forward noise
inline constexpr std::uint64_t kToyWeights = 0x746f79;        // toy scorer init
// Token selection draws one stream per decode step so a step's draw does not
// depend on how many tokens earlier steps consumed.
inline std::uint64_t select(int step) {
  return 0x73656c0000000000ull + static_cast<std::uint64_t>(step);
}
}  // namespace streams

}  // namespace pensieve

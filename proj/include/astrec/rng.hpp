#pragma once

#include <cmath>
#include <cstdint>

namespace astrec {

// Counter-style PRNG built on the splitmix64 mixer. One generator is a
// (state, stream_id) pair; the same pair yields the same sequence on every
// platform, and distinct stream ids derived from one seed give independent
// streams. Gaussian deviates use the Box-Muller cosine branch (two uniforms
// per draw, no cached spare), so a generator's output is a pure function of
// how many draws preceded it.
struct Rng {
  std::uint64_t state = 0;
  std::uint64_t stream_id = 0;

  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  Rng() = default;

  Rng(std::uint64_t seed, std::uint64_t stream) : stream_id(stream) {
    state = mix(seed + kGolden) ^ mix(stream * kGolden + 0x5851F42D4C957F2DULL);
  }

  // Deterministic child generator; does not advance this one. Children with
  // distinct `sub` values are independent, which is what lets parallel loops
  // hand one generator to every index and stay bit-identical to a serial run.
  Rng substream(std::uint64_t sub) const {
    Rng child;
    child.stream_id = sub;
    child.state = mix(state + mix(sub ^ 0x6A09E667F3BCC909ULL));
    return child;
  }

  std::uint64_t next_u64() {
    state += kGolden;
    return mix(state);
  }

  // Uniform in [0,1) with the full 53-bit mantissa filled.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0,n) via 128-bit multiply-shift.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal deviate. u1 is shifted into (0,1] so the log is finite.
  double gaussian() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }
};

}  // namespace astrec

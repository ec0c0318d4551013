#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace grasp {

// splitmix64 finalizer. Used to derive independent child streams from a base
// seed so that per-sample / per-iteration generators can run in parallel
// without changing results.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (b * 0xff51afd7ed558ccdull + 0x2545f4914f6cdd1dull));
}

// PCG32 (pcg_setseq_64_xsh_rr_32_random_r from the PCG reference
// implementation). The full generator algorithm is spelled out here so the
// streams are portable across platforms and languages:
//   state' = state * 6364136223846793005 + inc      (64-bit wraparound)
//   out    = rotr32(((state >> 18) ^ state) >> 27, state >> 59)
// Seeding: state = 0, inc = (stream << 1) | 1, advance once, add seed,
// advance once more.
//
// Derived values:
//   uniform():        (next_u32() >> 8) * 2^-24            in [0, 1)
//   uniform(a, b):    a + uniform() * (b - a), nudged below b on rounding
//   uniform_u32(n):   Lemire's unbiased multiply-shift rejection
//   normal():         Box-Muller from exactly two 32-bit draws,
//                     u1 = (d1 + 1) * 2^-32 in (0, 1], u2 = d2 * 2^-32,
//                     z = sqrt(-2 ln u1) * cos(2 pi u2), computed in double
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(0), inc_((stream << 1u) | 1u) {
    next_u32();
    state_ += seed;
    next_u32();
  }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ull + inc_;
    std::uint32_t xorshifted =
        static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  std::uint64_t next_u64() {
    std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform float in [0, 1) with 24-bit resolution.
  float uniform() {
    return static_cast<float>(next_u32() >> 8) * 0x1.0p-24f;
  }

  // Uniform float in [lo, hi).
  float uniform(float lo, float hi) {
    double u = static_cast<double>(next_u32() >> 8) * 0x1.0p-24;
    float v = static_cast<float>(lo + u * (static_cast<double>(hi) - lo));
    if (v >= hi) v = std::nextafter(hi, lo);
    if (v < lo) v = lo;
    return v;
  }

  // Unbiased integer in [0, bound). bound must be > 0.
  std::uint32_t uniform_u32(std::uint32_t bound) {
    std::uint64_t m = static_cast<std::uint64_t>(next_u32()) * bound;
    auto lo = static_cast<std::uint32_t>(m);
    if (lo < bound) {
      std::uint32_t t = (0u - bound) % bound;
      while (lo < t) {
        m = static_cast<std::uint64_t>(next_u32()) * bound;
        lo = static_cast<std::uint32_t>(m);
      }
    }
    return static_cast<std::uint32_t>(m >> 32);
  }

  // Standard normal draw; consumes exactly two 32-bit outputs.
  float normal() {
    double u1 = (static_cast<double>(next_u32()) + 1.0) * 0x1.0p-32;
    double u2 = static_cast<double>(next_u32()) * 0x1.0p-32;
    double z = std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    return static_cast<float>(z);
  }

  float normal(float mean, float stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
};

// Child stream for (base, k1, k2). Both the PCG seed and the stream selector
// are derived through mix64, so distinct keys give unrelated sequences.
inline Rng derive_rng(std::uint64_t base, std::uint64_t k1,
                      std::uint64_t k2 = 0) {
  std::uint64_t s = mix64(base, k1);
  return Rng(mix64(s, k2), mix64(s, ~k2));
}

}  // namespace grasp

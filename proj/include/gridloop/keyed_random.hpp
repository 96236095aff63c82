#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gridloop {

// Counter-based random numbers: every draw is a pure function of its key, so
// a trial can be replayed, split across threads or reordered without changing
// a single bit. The mixer is SplitMix64 (Steele, Lea & Flood 2014); keys are
// folded in one word at a time.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

constexpr std::uint64_t mix_key(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_key(mix_key(a, b), c);
}

// Uniform on (0, 1], 53-bit resolution.
inline double unit_uniform(std::uint64_t key) {
  return (static_cast<double>(splitmix64(key) >> 11) + 1.0) * 0x1.0p-53;
}

// Standard normal via Box-Muller (cosine branch) from two sub-keys.
inline double standard_normal(std::uint64_t key) {
  const double u1 = unit_uniform(key);
  const double u2 = unit_uniform(key ^ 0xd1b54a32d192ed03ULL);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace gridloop

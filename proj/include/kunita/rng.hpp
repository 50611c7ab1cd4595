#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace kunita {

// Counter-based random numbers: every draw is a pure function of
// (seed, stream, step, node, axis). This is what makes noise realizations
// replayable and lets a superset of driven points reuse the exact increments
// of any subset.
namespace rng {

// Philox4x32-10 block cipher.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
           static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
           static_cast<std::uint32_t>(p0)};
    key[0] += W0;
    key[1] += W1;
  }
  return ctr;
}

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace rng

// One keyed stream of standard normals.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream = 0) {
    const std::uint64_t k = rng::mix64(seed ^ rng::mix64(stream));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  }

  // Standard normal keyed by (step, node, axis); Box-Muller on one block.
  double normal(std::uint64_t step, std::uint64_t node, std::uint32_t axis) const {
    const auto blk = rng::philox4x32(
        {static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
         static_cast<std::uint32_t>(node) ^ (static_cast<std::uint32_t>(node >> 32) * 0x85EBCA6Bu),
         axis},
        key_);
    const double u1 = (static_cast<double>(blk[0]) + 0.5) * 0x1p-32;
    const double u2 = (static_cast<double>(blk[1]) + 0.5) * 0x1p-32;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform in (0,1), same keying.
  double uniform(std::uint64_t step, std::uint64_t node, std::uint32_t axis) const {
    const auto blk = rng::philox4x32(
        {static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
         static_cast<std::uint32_t>(node) ^ (static_cast<std::uint32_t>(node >> 32) * 0x85EBCA6Bu),
         axis},
        key_);
    return (static_cast<double>(blk[0]) + 0.5) * 0x1p-32;
  }

 private:
  std::array<std::uint32_t, 2> key_;
};

}  // namespace kunita

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace kinediff {

// Counter-based generator (Philox4x32-10). A fixed seed plus an identical
// call sequence reproduces the stream bitwise; independent substreams come
// from fork(), which derives a new key instead of sharing counter space.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    key_[0] = static_cast<std::uint32_t>(seed);
    key_[1] = static_cast<std::uint32_t>(seed >> 32);
  }

  static const char* algorithm() { return "philox4x32-10"; }
  std::uint64_t seed() const { return seed_; }

  // Independent substream; deterministic in (seed, stream).
  Rng fork(std::uint64_t stream) const {
    return Rng(splitmix64(splitmix64(seed_ ^ 0x9E3779B97F4A7C15ull) + stream));
  }
  Rng fork(const std::string& tag) const { return fork(fnv1a64(tag)); }

  std::uint32_t next_u32() {
    if (buf_pos_ == 4) {
      philox_block();
      buf_pos_ = 0;
    }
    return buf_[buf_pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    const std::uint64_t lo = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes exactly two uniforms per call.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  std::uint64_t uniform_index(std::uint64_t n) { return n ? next_u64() % n : 0; }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  static std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ull;
    }
    return h;
  }

 private:
  void philox_block() {
    std::uint32_t c0 = static_cast<std::uint32_t>(ctr_lo_);
    std::uint32_t c1 = static_cast<std::uint32_t>(ctr_lo_ >> 32);
    std::uint32_t c2 = static_cast<std::uint32_t>(ctr_hi_);
    std::uint32_t c3 = static_cast<std::uint32_t>(ctr_hi_ >> 32);
    std::uint32_t k0 = key_[0], k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ull * c0;
      const std::uint64_t p1 = 0xCD9E8D57ull * c2;
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      const std::uint32_t n0 = hi1 ^ c1 ^ k0;
      const std::uint32_t n1 = lo1;
      const std::uint32_t n2 = hi0 ^ c3 ^ k1;
      const std::uint32_t n3 = lo0;
      c0 = n0;
      c1 = n1;
      c2 = n2;
      c3 = n3;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    buf_[0] = c0;
    buf_[1] = c1;
    buf_[2] = c2;
    buf_[3] = c3;
    if (++ctr_lo_ == 0) ++ctr_hi_;
  }

  std::uint64_t seed_;
  std::uint32_t key_[2];
  std::uint64_t ctr_lo_ = 0, ctr_hi_ = 0;
  std::uint32_t buf_[4] = {0, 0, 0, 0};
  int buf_pos_ = 4;
};

}  // namespace kinediff

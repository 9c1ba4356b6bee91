#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace dbo {

// Philox4x32-10 counter-based generator (Salmon, Moraes, Dror, Shaw 2011).
//
// Every random quantity in this library is drawn from a stream identified by
// (seed, domain, stream): the 64-bit seed is the key, while the domain/stream
// pair occupies the upper two counter words and the draw index the lower two.
// The generator is fully specified here, with no dependence on libstdc++
// distributions, so fixtures and trajectories are bit-stable across platforms
// and the streams are splittable without coordination.
struct Philox4x32 {
  static std::array<std::uint32_t, 4> block(std::uint32_t key0, std::uint32_t key1,
                                            std::array<std::uint32_t, 4> ctr) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key0 += 0x9E3779B9u;
        key1 += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key0, lo1, hi0 ^ ctr[3] ^ key1, lo0};
    }
    return ctr;
  }
};

// Stream domains. Keeping them in one place avoids accidental stream reuse.
enum class RngDomain : std::uint32_t {
  topology = 0,  // graph generation; stream index = rejection attempt
  problem = 1,   // synthetic problem matrices
  agent = 2,     // per-agent sampling; stream index = agent id
  harness = 3,   // test-only draws
};

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, RngDomain domain, std::uint32_t stream)
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        domain_(static_cast<std::uint32_t>(domain)),
        stream_(stream) {}

  std::uint32_t next_u32() {
    if (pos_ == 4) {
      buf_ = Philox4x32::block(key0_, key1_,
                               {static_cast<std::uint32_t>(draws_),
                                static_cast<std::uint32_t>(draws_ >> 32), domain_, stream_});
      ++draws_;
      pos_ = 0;
    }
    return buf_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    const std::uint64_t lo = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform index in [0, n). Modulo bias is below 1e-15 for any n used here.
  std::int64_t uniform_index(std::int64_t n) {
    return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double normal() {
    const double u1 = 1.0 - next_double();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::uint32_t key0_, key1_;
  std::uint32_t domain_, stream_;
  std::uint64_t draws_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
};

}  // namespace dbo

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include <boost/random/normal_distribution.hpp>

namespace coag {

__extension__ using uint128 = unsigned __int128;

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Satisfies
/// UniformRandomBitGenerator with 64-bit output; each counter block yields two
/// outputs.
class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  explicit Philox4x32(std::uint64_t seed = 0, std::uint64_t stream = 0) {
    key_ = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    ctr_ = {0, 0, static_cast<std::uint32_t>(stream),
            static_cast<std::uint32_t>(stream >> 32)};
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 0) {
      block_ = bijection(ctr_, key_);
      increment();
    }
    const result_type out = (static_cast<result_type>(block_[2 * pos_ + 1]) << 32) |
                            block_[2 * pos_];
    pos_ ^= 1;
    return out;
  }

  /// Uniform double in [0,1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0,1].
  double uniform_pos() { return (static_cast<double>((*this)() >> 11) + 1.0) * 0x1.0p-53; }

  /// Standard normal (ziggurat).
  double normal() { return normal_(*this); }

  /// Uniform integer in [0, n) by Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    uint128 m = static_cast<uint128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<uint128>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  static Counter bijection(Counter ctr, Key key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }

 private:
  void increment() {
    if (++ctr_[0] == 0) ++ctr_[1];
  }

  Key key_{};
  Counter ctr_{};
  Counter block_{};
  int pos_ = 0;
  boost::random::normal_distribution<double> normal_;
};

inline constexpr std::uint64_t kReplicaSeedStride = 0x9E3779B97F4A7C15ull;

/// Seed of replica k: seed XOR (k * 0x9E3779B97F4A7C15).
constexpr std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t k) {
  return seed ^ (k * kReplicaSeedStride);
}

}  // namespace coag

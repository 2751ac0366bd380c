#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace dpie {

// Philox 4x64 counter-based generator, 10 rounds (Salmon et al. 2011),
// with the same constants and counter convention as numpy.random.Philox,
// so streams can be cross-checked externally. Keyed as (seed, stream):
// distinct keys give independent streams, which makes per-replicate
// seeding order-independent.
class Philox {
 public:
  explicit Philox(uint64_t seed, uint64_t stream = 0)
      : key_{seed, stream} {}

  static std::array<uint64_t, 4> block(std::array<uint64_t, 4> ctr,
                                       std::array<uint64_t, 2> key) {
    constexpr uint64_t M0 = 0xD2E7470EE14C6C93ULL;
    constexpr uint64_t M1 = 0xCA5A826395121157ULL;
    constexpr uint64_t W0 = 0x9E3779B97F4A7C15ULL;
    constexpr uint64_t W1 = 0xBB67AE8584CAA73BULL;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += W0;
        key[1] += W1;
      }
      const unsigned __int128 p0 =
          static_cast<unsigned __int128>(M0) * ctr[0];
      const unsigned __int128 p1 =
          static_cast<unsigned __int128>(M1) * ctr[2];
      const uint64_t hi0 = static_cast<uint64_t>(p0 >> 64);
      const uint64_t lo0 = static_cast<uint64_t>(p0);
      const uint64_t hi1 = static_cast<uint64_t>(p1 >> 64);
      const uint64_t lo1 = static_cast<uint64_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

  uint64_t next_u64() {
    if (buf_pos_ == 4) {
      // counter advances before the block, matching numpy
      for (int i = 0; i < 4; ++i) {
        if (++counter_[i] != 0) break;
      }
      buf_ = block(counter_, key_);
      buf_pos_ = 0;
    }
    return buf_[buf_pos_++];
  }

  // uniform on [0,1) with 53-bit resolution
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  bool bernoulli(double p) { return next_double() < p; }

  // Box-Muller pair; the spare is kept so draws stay deterministic
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // unbiased draw from {0, ..., n-1} by rejection
  uint64_t below(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    uint64_t x = next_u64();
    while (x < threshold) x = next_u64();
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::array<uint64_t, 2> key_;
  std::array<uint64_t, 4> counter_{0, 0, 0, 0};
  std::array<uint64_t, 4> buf_{};
  int buf_pos_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dpie

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "ddpmc/error.hpp"

namespace ddpmc {

/// Counter-based Philox4x64-10 stream. A stream is keyed by the seed; the
/// stream id occupies the second counter word, so distinct ids never share
/// a counter value and cannot overlap for 2^64 blocks (2^66 draws).
///
/// The full generator state is (seed, stream_id, position), which makes it
/// cheap to persist and restore. Single owner: never share a live stream
/// between threads.
class RngStream {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint64_t, 4>;

  RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t position = 0)
      : seed_(seed), stream_id_(stream_id) {
    seek(position);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  /// Number of 64-bit words consumed so far.
  std::uint64_t position() const { return position_; }

  void seek(std::uint64_t position) {
    position_ = position;
    buffered_block_ = std::numeric_limits<std::uint64_t>::max();
  }

  result_type operator()() {
    const std::uint64_t block = position_ >> 2;
    if (block != buffered_block_) {
      buffer_ = philox({block, stream_id_, 0, 0}, {seed_, 0});
      buffered_block_ = block;
    }
    return buffer_[position_++ & 3u];
  }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Box-Muller without caching, so the position fully determines the state.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double exponential() { return -std::log(uniform()); }

  /// Marsaglia-Tsang; shapes below one use the u^(1/shape) boost.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw DomainError("gamma: shape must be positive");
    if (shape < 1.0) return gamma(shape + 1.0) * std::pow(uniform(), 1.0 / shape);
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double chi_square(double df) { return 2.0 * gamma(0.5 * df); }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  /// One Philox4x64-10 block, exposed for known-answer tests.
  static Block philox(Block ctr, std::array<std::uint64_t, 2> key) {
    constexpr std::uint64_t kM0 = 0xD2E7470EE14C6C93ULL;
    constexpr std::uint64_t kM1 = 0xCA5A826395121157ULL;
    constexpr std::uint64_t kW0 = 0x9E3779B97F4A7C15ULL;
    constexpr std::uint64_t kW1 = 0xBB67AE8584CAA73BULL;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const unsigned __int128 p0 = static_cast<unsigned __int128>(kM0) * ctr[0];
      const unsigned __int128 p1 = static_cast<unsigned __int128>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint64_t>(p0 >> 64);
      const auto lo0 = static_cast<std::uint64_t>(p0);
      const auto hi1 = static_cast<std::uint64_t>(p1 >> 64);
      const auto lo1 = static_cast<std::uint64_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t position_ = 0;
  std::uint64_t buffered_block_ = std::numeric_limits<std::uint64_t>::max();
  Block buffer_{};
};

}  // namespace ddpmc

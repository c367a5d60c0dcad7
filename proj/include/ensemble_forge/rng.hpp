#pragma once

// Counter-based random streams. A stream is identified by (seed, stream id);
// draw i of a stream depends only on (seed, stream id, i), so samples can be
// produced in any order or on any number of threads with identical results.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

#include "ensemble_forge/error.hpp"

namespace ensemble_forge {

/// Philox4x32-10 block function (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// UniformRandomBitGenerator over a Philox stream, plus the continuous
/// variates the samplers need. The variate algorithms are written out here
/// (not taken from <random>) so sequences are identical across standard
/// library implementations.
class RandomStream {
 public:
  using result_type = std::uint32_t;

  explicit RandomStream(RngSpec spec) : spec_(spec) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (lane_ == 4) refill();
    return buffer_[lane_++];
  }

  const RngSpec& spec() const noexcept { return spec_; }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    const std::uint64_t hi = (*this)() >> 5;  // 27 bits
    const std::uint64_t lo = (*this)() >> 6;  // 26 bits
    const double u = static_cast<double>((hi << 26) | lo) * 0x1.0p-53;
    return u + 0x1.0p-54;
  }

  /// Standard normal via the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double v1, v2, s;
    do {
      v1 = 2.0 * uniform() - 1.0;
      v2 = 2.0 * uniform() - 1.0;
      s = v1 * v1 + v2 * v2;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v2 * m;
    has_spare_ = true;
    return v1 * m;
  }

  /// Gamma(shape, scale = 1) by Marsaglia-Tsang squeeze/rejection, with the
  /// U^(1/shape) boost for shape < 1.
  double gamma(double shape) {
    detail::require(shape > 0.0 && std::isfinite(shape), "gamma variate: shape must be positive");
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Chi-square with real dof, as Gamma(dof/2, scale 2).
  double chi2(double dof) {
    detail::require(dof > 0.0, "chi2 variate: dof must be positive");
    return 2.0 * gamma(0.5 * dof);
  }

 private:
  void refill() {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(counter_),
                                  static_cast<std::uint32_t>(counter_ >> 32),
                                  static_cast<std::uint32_t>(spec_.stream),
                                  static_cast<std::uint32_t>(spec_.stream >> 32)};
    const Philox4x32::Key key{static_cast<std::uint32_t>(spec_.seed),
                              static_cast<std::uint32_t>(spec_.seed >> 32)};
    buffer_ = Philox4x32::block(ctr, key);
    ++counter_;
    lane_ = 0;
  }

  RngSpec spec_;
  std::uint64_t counter_ = 0;
  Philox4x32::Counter buffer_{};
  int lane_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ensemble_forge

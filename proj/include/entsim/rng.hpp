#pragma once

// Counter-based random numbers.
//
// Every stochastic stage draws from Philox4x32-10 (Salmon et al., SC'11): a
// keyed bijection on 128-bit counters, so the value at any (key, counter) is
// available without replaying a sequence. Stages obtain keys from
// derive_seed(master, label, index); the index is a time-slice or tag index,
// which makes results independent of how work is split across threads.

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace entsim::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

Counter philox4x32_10(Counter counter, Key key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Sub-seed for one stage (`label`) and one work unit (`index`).
std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::uint64_t index = 0) noexcept;

/// Sequential view over the Philox counter space for a fixed (key, stream).
/// Cheap to construct; a stream per work item is the intended use.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key, std::uint64_t stream = 0) noexcept
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
        stream_(stream) {}

  std::uint64_t next_u64() noexcept {
    if (cached_ == 0) refill();
    --cached_;
    return buffer_[static_cast<unsigned>(cached_) & 1u];
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1), safe as a logarithm argument.
  double uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Standard normal deviate (Box-Muller, cosine branch only).
  double normal() noexcept {
    const double radius = std::sqrt(-2.0 * std::log(uniform_open()));
    return radius * std::cos(2.0 * 3.14159265358979323846 * uniform());
  }

  double exponential(double rate) noexcept { return -std::log(uniform_open()) / rate; }

  /// Failures before the first success of a Bernoulli(p) sequence.
  std::uint64_t geometric(double p_success) noexcept {
    if (p_success >= 1.0) return 0;
    const double draw = std::floor(std::log(uniform_open()) / std::log1p(-p_success));
    if (!(draw < 9.0e18)) return UINT64_C(9000000000000000000);
    return static_cast<std::uint64_t>(draw);
  }

 private:
  void refill() noexcept {
    const Counter block = philox4x32_10(
        {static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
        key_);
    ++counter_;
    buffer_[1] = (static_cast<std::uint64_t>(block[1]) << 32) | block[0];
    buffer_[0] = (static_cast<std::uint64_t>(block[3]) << 32) | block[2];
    cached_ = 2;
  }

  Key key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int cached_ = 0;
};

}  // namespace entsim::rng

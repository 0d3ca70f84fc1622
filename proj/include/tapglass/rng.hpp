#ifndef TAPGLASS_RNG_HPP
#define TAPGLASS_RNG_HPP

// Counter-based random numbers (Philox4x32-10). Every variate is a pure
// function of (seed, stream, index), so results never depend on iteration
// order or on how work is split between threads.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace tapglass {

using Philox4x32Block = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

inline Philox4x32Block philox4x32_10(Philox4x32Block ctr, Philox4x32Key key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

namespace detail {

constexpr Philox4x32Key key_of(std::uint64_t seed) noexcept {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

constexpr Philox4x32Block counter_of(std::uint64_t lo, std::uint64_t hi) noexcept {
  return {static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(lo >> 32),
          static_cast<std::uint32_t>(hi), static_cast<std::uint32_t>(hi >> 32)};
}

constexpr std::uint64_t join(std::uint32_t lo, std::uint32_t hi) noexcept {
  return std::uint64_t{lo} | (std::uint64_t{hi} << 32);
}

// Uniform in the open interval (0, 1) from the top 53 bits.
inline double open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline double box_muller(std::uint64_t a, std::uint64_t b) noexcept {
  return std::sqrt(-2.0 * std::log(open_unit(a))) *
         std::cos(2.0 * std::numbers::pi * open_unit(b));
}

}  // namespace detail

/// Derives an independent 64-bit seed from a master seed and two labels.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) noexcept {
  auto key = detail::key_of(master ^ 0x5DEECE66D1234567ull);
  const auto out = philox4x32_10(detail::counter_of(a, b), key);
  return detail::join(out[0], out[1]) ^ (std::uint64_t{out[3]} << 17);
}

/// Random access stream: variate `i` of stream `stream` under `seed`.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(detail::key_of(seed)), stream_(stream) {}

  Philox4x32Block block(std::uint64_t index) const noexcept {
    return philox4x32_10(detail::counter_of(index, stream_), key_);
  }

  double uniform(std::uint64_t index) const noexcept {
    const auto b = block(index);
    return detail::open_unit(detail::join(b[0], b[1]));
  }

  double normal(std::uint64_t index) const noexcept {
    const auto b = block(index);
    return detail::box_muller(detail::join(b[0], b[1]), detail::join(b[2], b[3]));
  }

 private:
  Philox4x32Key key_;
  std::uint64_t stream_;
};

/// Sequential engine over a counter stream; models UniformRandomBitGenerator.
class CounterEngine {
 public:
  using result_type = std::uint64_t;

  explicit CounterEngine(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : stream_(seed, stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (!have_spare_) {
      const auto b = stream_.block(counter_++);
      spare_ = detail::join(b[2], b[3]);
      have_spare_ = true;
      return detail::join(b[0], b[1]);
    }
    have_spare_ = false;
    return spare_;
  }

  double uniform() noexcept { return detail::open_unit((*this)()); }

  double normal() noexcept {
    const auto a = (*this)();
    const auto b = (*this)();
    return detail::box_muller(a, b);
  }

  double exponential() noexcept { return -std::log(uniform()); }

  /// Uniform integer in [0, n) by rejection (unbiased).
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do {
      x = (*this)();
    } while (x >= limit);
    return x % n;
  }

 private:
  CounterStream stream_;
  std::uint64_t counter_ = 0;
  std::uint64_t spare_ = 0;
  bool have_spare_ = false;
};

// Stream tags that keep the different consumers of one seed apart.
namespace streams {
inline constexpr std::uint64_t kTensor = 0x7465'6e73'0000'0000ull;  // | degree
inline constexpr std::uint64_t kHAlpha = 0x6861'6c70'6861'0001ull;
inline constexpr std::uint64_t kPoisson = 0x706f'6973'0000'0001ull;
inline constexpr std::uint64_t kSets = 0x7365'7473'0000'0001ull;
inline constexpr std::uint64_t kReplica = 0x7265'706c'0000'0001ull;
}  // namespace streams

}  // namespace tapglass

#endif  // TAPGLASS_RNG_HPP

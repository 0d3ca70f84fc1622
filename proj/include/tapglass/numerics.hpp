#ifndef TAPGLASS_NUMERICS_HPP
#define TAPGLASS_NUMERICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace tapglass {

/// Neumaier-compensated accumulator.
class KahanSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  KahanSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Streaming log-sum-exp; -inf terms are ignored.
class LogSumExp {
 public:
  void add(double x) noexcept {
    if (x == -std::numeric_limits<double>::infinity()) return;
    if (x <= max_) {
      acc_ += std::exp(x - max_);
    } else {
      acc_ = acc_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    }
  }
  double value() const noexcept {
    if (acc_ == 0.0) return -std::numeric_limits<double>::infinity();
    return max_ + std::log(acc_);
  }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double acc_ = 0.0;
};

inline double log_sum_exp(std::span<const double> xs) noexcept {
  LogSumExp acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

/// log(cosh(x)) without overflow.
inline double log_cosh(double x) noexcept {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

/// In-place unnormalized Walsh-Hadamard transform; size must be a power of two.
inline void walsh_hadamard(std::span<double> v) noexcept {
  const std::size_t n = v.size();
  for (std::size_t len = 1; len < n; len <<= 1) {
    for (std::size_t i = 0; i < n; i += len << 1) {
      for (std::size_t j = i; j < i + len; ++j) {
        const double a = v[j];
        const double b = v[j + len];
        v[j] = a + b;
        v[j + len] = a - b;
      }
    }
  }
}

/// XOR convolution c[z] = sum_x a[x] b[x ^ z] via two forward transforms.
inline std::vector<double> xor_convolution(std::vector<double> a, std::vector<double> b) {
  walsh_hadamard(a);
  walsh_hadamard(b);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
  walsh_hadamard(a);
  const double scale = 1.0 / static_cast<double>(a.size());
  for (double& x : a) x *= scale;
  return a;
}

inline double binomial(int n, int k) noexcept {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace tapglass

#endif  // TAPGLASS_NUMERICS_HPP

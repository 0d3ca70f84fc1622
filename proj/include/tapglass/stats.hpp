#ifndef TAPGLASS_STATS_HPP
#define TAPGLASS_STATS_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "tapglass/error.hpp"
#include "tapglass/numerics.hpp"

namespace tapglass::stats {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("mean of an empty sample");
  KahanSum s;
  for (double x : xs) s += x;
  return s.value() / static_cast<double>(xs.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  KahanSum s;
  for (double x : xs) s += (x - m) * (x - m);
  return s.value() / static_cast<double>(xs.size() - 1);
}

inline double standard_error(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  return std::sqrt(variance(xs) / static_cast<double>(xs.size()));
}

/// Linear-interpolation quantile (type 7).
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw DomainError("quantile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

inline double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double standard_error = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double iqr() const noexcept { return q75 - q25; }
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  s.count = xs.size();
  if (xs.empty()) return s;
  s.mean = mean(xs);
  s.standard_error = standard_error(xs);
  s.median = median(xs);
  s.q25 = quantile(xs, 0.25);
  s.q75 = quantile(xs, 0.75);
  return s;
}

/// P(X >= k) for X ~ Binomial(n, 1/2).
inline double binomial_upper_tail(int k, int n) {
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  double total = 0.0;
  for (int j = k; j <= n; ++j)
    total += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) -
                      n * std::numbers::ln2);
  return std::min(1.0, total);
}

/// Paired sign test. `decreases` counts pairs with after < before,
/// `increases` pairs with after > before; ties are dropped.
struct SignTest {
  int decreases = 0;
  int increases = 0;
  int ties = 0;
  /// One-sided p-value for "after tends to be smaller".
  double p_decrease() const { return binomial_upper_tail(decreases, decreases + increases); }
  /// One-sided p-value for "after tends to be larger".
  double p_increase() const { return binomial_upper_tail(increases, decreases + increases); }
};

inline SignTest sign_test(std::span<const double> before, std::span<const double> after) {
  if (before.size() != after.size()) throw DomainError("sign test needs paired samples");
  SignTest t;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (after[i] < before[i])
      ++t.decreases;
    else if (after[i] > before[i])
      ++t.increases;
    else
      ++t.ties;
  }
  return t;
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("KS statistic of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// Asymptotic two-sample KS critical value at level 5%.
inline double ks_critical_5pct(std::size_t n, std::size_t m) {
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  return 1.358 * std::sqrt((nn + mm) / (nn * mm));
}

}  // namespace tapglass::stats

#endif  // TAPGLASS_STATS_HPP

#ifndef TAPGLASS_PD_HPP
#define TAPGLASS_PD_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "tapglass/error.hpp"
#include "tapglass/numerics.hpp"
#include "tapglass/parallel.hpp"
#include "tapglass/rng.hpp"
#include "tapglass/stats.hpp"

namespace tapglass {

/// Finite nonincreasing sequence of nonnegative weights with total <= 1.
class MassPartition {
 public:
  MassPartition() = default;

  explicit MassPartition(std::vector<double> weights) : weights_(std::move(weights)) {
    KahanSum total;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      const double w = weights_[i];
      if (!(w >= 0.0 && w <= 1.0 + 1e-12)) throw DomainError("mass partition weights must lie in [0, 1]");
      if (i > 0 && w > weights_[i - 1]) throw DomainError("mass partition weights must be nonincreasing");
      total += w;
    }
    total_ = total.value();
    if (total_ > 1.0 + 1e-12) throw DomainError("mass partition total exceeds 1");
  }

  /// Sorts arbitrary cluster masses into a partition.
  static MassPartition from_masses(std::vector<double> masses) {
    std::sort(masses.begin(), masses.end(), std::greater<>());
    return MassPartition(std::move(masses));
  }

  const std::vector<double>& weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return weights_.size(); }
  /// Weight of 0-based rank i, zero past the end.
  double weight(std::size_t i) const noexcept { return i < weights_.size() ? weights_[i] : 0.0; }
  double total() const noexcept { return total_; }
  double truncation_deficit() const noexcept { return std::max(0.0, 1.0 - total_); }

  double sum_of_squares() const {
    KahanSum s;
    for (double w : weights_) s += w * w;
    return s.value();
  }

  /// 1 - (v_1 + ... + v_{m-1}): the mass at ranks >= m, deficit included.
  double tail_mass(std::size_t m) const {
    KahanSum head;
    for (std::size_t i = 0; i + 1 < m && i < weights_.size(); ++i) head += weights_[i];
    return std::max(0.0, 1.0 - head.value());
  }

 private:
  std::vector<double> weights_;
  double total_ = 0.0;
};

inline void check_pd_theta(double theta) {
  if (!(theta > 0.0 && theta < 1.0)) throw DomainError("PD parameter theta must lie in (0, 1)");
}

/// Top-K ranked points T_k^{-1/theta} of the Poisson process with intensity
/// theta x^{-1-theta}, normalized by their sum plus the conditional
/// expectation of the points below the K-th, theta T_K^{1-1/theta}/(1-theta).
inline MassPartition sample_pd(double theta, std::size_t k, std::uint64_t seed) {
  check_pd_theta(theta);
  if (k == 0) throw DomainError("PD truncation K must be at least 1");
  CounterEngine rng(seed, streams::kPoisson);
  std::vector<double> points(k);
  double arrival = 0.0;
  KahanSum total;
  for (std::size_t i = 0; i < k; ++i) {
    arrival += rng.exponential();
    points[i] = std::pow(arrival, -1.0 / theta);
    total += points[i];
  }
  total += theta * std::pow(arrival, 1.0 - 1.0 / theta) / (1.0 - theta);
  const double z = total.value();
  for (double& p : points) p /= z;
  return MassPartition(std::move(points));
}

/// Independent sampler for PD(theta, 0): GEM stick breaking with
/// V_k ~ Beta(1 - theta, k theta) from std::mt19937_64, ranked afterwards.
/// The unbroken remainder R is reported as the deficit.
inline MassPartition sample_pd_stick_breaking(double theta, std::size_t sticks, std::uint64_t seed,
                                              double* remainder = nullptr) {
  check_pd_theta(theta);
  if (sticks == 0) throw DomainError("stick breaking needs at least one stick");
  std::mt19937_64 gen(seed);
  std::vector<double> w(sticks);
  double rest = 1.0;
  for (std::size_t i = 0; i < sticks; ++i) {
    std::gamma_distribution<double> ga(1.0 - theta, 1.0);
    std::gamma_distribution<double> gb(static_cast<double>(i + 1) * theta, 1.0);
    const double a = ga(gen), b = gb(gen);
    const double v = a + b > 0.0 ? a / (a + b) : 0.0;
    w[i] = rest * v;
    rest *= 1.0 - v;
  }
  if (remainder) *remainder = rest;
  std::sort(w.begin(), w.end(), std::greater<>());
  return MassPartition(std::move(w));
}

/// E of sum v^2 over the unbroken remainder of a stick-breaking draw:
/// R^2 (1 - theta)/(1 + K theta).
inline double stick_breaking_square_correction(double theta, std::size_t sticks, double remainder) {
  return remainder * remainder * (1.0 - theta) / (1.0 + static_cast<double>(sticks) * theta);
}

struct PdTailRow {
  std::size_t rank = 0;  // M
  double empirical_mean = 0.0;
  double pd_mean = 0.0;
  /// Frequency of {tail mass at ranks >= M exceeds epsilon}.
  double empirical_exceed = 0.0;
  double pd_exceed = 0.0;
};

struct PdGapRow {
  std::size_t rank = 0;  // i, comparing v_i with v_{i+1}
  double eta = 0.0;
  /// Frequency of {v_i - v_{i+1} > eta}.
  double empirical_frequency = 0.0;
  double pd_frequency = 0.0;
};

struct PdFitOptions {
  std::size_t pd_samples = 20000;
  std::size_t truncation = 200;
  std::uint64_t seed = 1;
  std::vector<std::size_t> tail_ranks{2, 3, 5, 10};
  double tail_epsilon = 0.05;
  std::vector<double> gap_etas{0.01, 0.05, 0.1};
  unsigned workers = 1;
};

struct PdFitReport {
  double theta = 0.0;
  std::size_t k = 0;
  std::size_t empirical_count = 0;
  std::size_t pd_count = 0;
  double ks_stat = 0.0;
  double ks_critical = 0.0;
  bool rejected = false;
  double sum_sq_emp = 0.0;
  double sum_sq_pd = 0.0;
  std::vector<double> mean_emp;
  std::vector<double> mean_pd;
  std::vector<PdTailRow> tail_mass_table;
  std::vector<PdGapRow> gap_table;
};

/// PD reference draws with per-draw derived seeds.
inline std::vector<MassPartition> sample_pd_batch(double theta, std::size_t count, std::size_t k,
                                                  std::uint64_t seed, unsigned workers = 1) {
  std::vector<MassPartition> out(count);
  parallel_for(count, workers, [&](std::size_t i) { out[i] = sample_pd(theta, k, derive_seed(seed, i)); });
  return out;
}

/// Compares the empirical law of the top-k weights against PD(theta).
inline PdFitReport compare_to_pd(const std::vector<MassPartition>& empirical, double theta, std::size_t k,
                                 const PdFitOptions& opt = {}) {
  check_pd_theta(theta);
  if (empirical.size() < 30) throw InsufficientReplicasError();
  if (k == 0 || k > 5) throw DomainError("compare_to_pd compares between 1 and 5 leading weights");
  const auto reference = sample_pd_batch(theta, opt.pd_samples, opt.truncation, opt.seed, opt.workers);

  PdFitReport rep;
  rep.theta = theta;
  rep.k = k;
  rep.empirical_count = empirical.size();
  rep.pd_count = reference.size();

  const auto column = [](const std::vector<MassPartition>& parts, auto&& f) {
    std::vector<double> out;
    out.reserve(parts.size());
    for (const auto& p : parts) out.push_back(f(p));
    return out;
  };
  const auto first = [](const MassPartition& p) { return p.weight(0); };
  rep.ks_stat = stats::ks_statistic(column(empirical, first), column(reference, first));
  rep.ks_critical = stats::ks_critical_5pct(empirical.size(), reference.size());
  rep.rejected = rep.ks_stat > rep.ks_critical;

  const auto squares = [](const MassPartition& p) { return p.sum_of_squares(); };
  rep.sum_sq_emp = stats::mean(column(empirical, squares));
  rep.sum_sq_pd = stats::mean(column(reference, squares));
  for (std::size_t i = 0; i < k; ++i) {
    const auto coord = [i](const MassPartition& p) { return p.weight(i); };
    rep.mean_emp.push_back(stats::mean(column(empirical, coord)));
    rep.mean_pd.push_back(stats::mean(column(reference, coord)));
  }

  const auto frequency = [](const std::vector<double>& xs, double threshold) {
    std::size_t hits = 0;
    for (double x : xs)
      if (x > threshold) ++hits;
    return xs.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(xs.size());
  };
  for (std::size_t m : opt.tail_ranks) {
    const auto tail = [m](const MassPartition& p) { return p.tail_mass(m); };
    const auto e = column(empirical, tail), r = column(reference, tail);
    rep.tail_mass_table.push_back({m, stats::mean(e), stats::mean(r), frequency(e, opt.tail_epsilon),
                                   frequency(r, opt.tail_epsilon)});
  }
  for (std::size_t i = 1; i < k; ++i) {
    const auto gap = [i](const MassPartition& p) { return p.weight(i - 1) - p.weight(i); };
    const auto e = column(empirical, gap), r = column(reference, gap);
    for (double eta : opt.gap_etas) rep.gap_table.push_back({i, eta, frequency(e, eta), frequency(r, eta)});
  }
  return rep;
}

}  // namespace tapglass

#endif  // TAPGLASS_PD_HPP

#ifndef TAPGLASS_COVARIANCE_HPP
#define TAPGLASS_COVARIANCE_HPP

// Monte Carlo audit of the covariance structure of H, Htilde and y over
// independent disorder replicas.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tapglass/disorder.hpp"
#include "tapglass/parallel.hpp"
#include "tapglass/rng.hpp"
#include "tapglass/stats.hpp"

namespace tapglass {

enum class GaussianProcess { Hamiltonian, Tilde, Field };

inline const char* to_string(GaussianProcess p) {
  switch (p) {
    case GaussianProcess::Hamiltonian: return "H";
    case GaussianProcess::Tilde: return "Htilde";
    case GaussianProcess::Field: return "y";
  }
  return "?";
}

struct CovarianceCheck {
  GaussianProcess process;
  SpinConfiguration first;
  SpinConfiguration second;
};

struct CovarianceRow {
  GaussianProcess process;
  int dot = 0;          // inner product of the pair
  int dimension = 0;    // dimension of the pair's configurations
  double estimate = 0.0;
  double standard_error = 0.0;
  /// Exact finite-N covariance.
  double exact = 0.0;
  /// Covariance with the O(1/N) corrections dropped.
  double idealized = 0.0;
  bool within_3se = false;
};

struct CovarianceReport {
  std::size_t replicas = 0;
  std::vector<CovarianceRow> rows;
  bool all_within_3se() const {
    for (const auto& r : rows)
      if (!r.within_3se) return false;
    return true;
  }
};

/// Exact covariances. For configurations on Sigma_{N-1} with inner product
/// d: E Htilde Htilde = N xi(d / N) and E y y = xi'(d / N).
inline double exact_covariance(const MixtureSpec& spec, GaussianProcess p, int dot, int n) {
  const double t = static_cast<double>(dot) / n;
  switch (p) {
    case GaussianProcess::Hamiltonian:
    case GaussianProcess::Tilde: return n * spec.xi(t);
    case GaussianProcess::Field: return spec.xi_prime(t);
  }
  return 0.0;
}

inline double idealized_covariance(const MixtureSpec& spec, GaussianProcess p, int dot, int dimension, int n) {
  const double r = static_cast<double>(dot) / dimension;
  switch (p) {
    case GaussianProcess::Hamiltonian: return n * spec.xi(r);
    case GaussianProcess::Tilde: return n * spec.xi(r);
    case GaussianProcess::Field: return spec.xi_prime(r);
  }
  return 0.0;
}

/// Estimates E P(a) P(b) for every check over `replicas` realizations
/// seeded by derive_seed(master_seed, replica). Hamiltonian checks use
/// configurations on Sigma_N (tensor part only), the others on Sigma_{N-1}.
inline CovarianceReport covariance_audit(const MixtureSpec& spec, int n, const std::vector<CovarianceCheck>& checks,
                                         std::size_t replicas, std::uint64_t master_seed, unsigned workers = 1) {
  for (const auto& c : checks) {
    const int want = c.process == GaussianProcess::Hamiltonian ? n : n - 1;
    if (c.first.dimension() != want || c.second.dimension() != want)
      throw DomainError(std::string("covariance check for ") + to_string(c.process) + " has wrong dimension");
  }
  std::vector<double> products(replicas * checks.size());
  parallel_for(replicas, workers, [&](std::size_t r) {
    const auto d = sample_disorder(spec, n, derive_seed(master_seed, r));
    const CavitySplit split(d);
    for (std::size_t k = 0; k < checks.size(); ++k) {
      const auto& c = checks[k];
      double a = 0.0, b = 0.0;
      switch (c.process) {
        case GaussianProcess::Hamiltonian:
          a = d.form().evaluate(c.first.index());
          b = d.form().evaluate(c.second.index());
          break;
        case GaussianProcess::Tilde:
          a = split.tilde(c.first);
          b = split.tilde(c.second);
          break;
        case GaussianProcess::Field:
          a = split.field(c.first);
          b = split.field(c.second);
          break;
      }
      products[r * checks.size() + k] = a * b;
    }
  });
  CovarianceReport report;
  report.replicas = replicas;
  std::vector<double> column(replicas);
  for (std::size_t k = 0; k < checks.size(); ++k) {
    for (std::size_t r = 0; r < replicas; ++r) column[r] = products[r * checks.size() + k];
    const auto& c = checks[k];
    CovarianceRow row;
    row.process = c.process;
    row.dimension = c.first.dimension();
    row.dot = overlap(c.first, c.second).dot();
    row.estimate = stats::mean(column);
    row.standard_error = stats::standard_error(column);
    row.exact = exact_covariance(spec, c.process, row.dot, n);
    row.idealized = idealized_covariance(spec, c.process, row.dot, row.dimension, n);
    row.within_3se = std::abs(row.estimate - row.exact) <= 3.0 * row.standard_error;
    report.rows.push_back(row);
  }
  return report;
}

/// Covariance audit of the local field alone.
inline CovarianceReport local_field_covariance_check(const MixtureSpec& spec, int n,
                                                     const std::vector<std::pair<SpinConfiguration, SpinConfiguration>>& pairs,
                                                     std::size_t replicas, std::uint64_t master_seed,
                                                     unsigned workers = 1) {
  std::vector<CovarianceCheck> checks;
  for (const auto& [a, b] : pairs) checks.push_back({GaussianProcess::Field, a, b});
  return covariance_audit(spec, n, checks, replicas, master_seed, workers);
}

}  // namespace tapglass

#endif  // TAPGLASS_COVARIANCE_HPP

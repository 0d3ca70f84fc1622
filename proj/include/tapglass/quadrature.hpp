#ifndef TAPGLASS_QUADRATURE_HPP
#define TAPGLASS_QUADRATURE_HPP

#include <cmath>
#include <numbers>
#include <vector>

#include "tapglass/error.hpp"

namespace tapglass {

/// Nodes and weights for the integral of f(x) e^{-x^2} over the real line.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Newton iteration on the orthonormal Hermite recurrence, seeded with the
/// classical asymptotic guesses for the largest roots.
inline GaussHermiteRule gauss_hermite(int n) {
  if (n < 1) throw DomainError("Gauss-Hermite rule needs at least one node");
  constexpr double kPim4 = 0.7511255444649425;  // pi^{-1/4}
  GaussHermiteRule rule{std::vector<double>(n), std::vector<double>(n)};
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    else if (i == 1)
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * rule.nodes[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * rule.nodes[1];
    else
      z = 2.0 * z - rule.nodes[i - 2];
    double pp = 0.0;
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      double p1 = kPim4, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) {
        converged = true;
        break;
      }
    }
    if (!converged) throw ConvergenceError("Gauss-Hermite root iteration failed", std::abs(z));
    rule.nodes[i] = z;
    rule.nodes[n - 1 - i] = -z;
    rule.weights[i] = 2.0 / (pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  double total = 0.0;
  for (double w : rule.weights) total += w;
  if (!(std::abs(total / std::sqrt(std::numbers::pi) - 1.0) <= 1e-10))
    throw ConvergenceError("Gauss-Hermite weights do not sum to sqrt(pi)", total);
  return rule;
}

}  // namespace tapglass

#endif  // TAPGLASS_QUADRATURE_HPP

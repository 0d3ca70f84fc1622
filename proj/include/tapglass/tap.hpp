#ifndef TAPGLASS_TAP_HPP
#define TAPGLASS_TAP_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "tapglass/clusters.hpp"
#include "tapglass/disorder.hpp"
#include "tapglass/gibbs.hpp"
#include "tapglass/mixture.hpp"
#include "tapglass/quadrature.hpp"
#include "tapglass/rng.hpp"

namespace tapglass {

/// The (N-1)-spin system seen from the first site: mu' is the Gibbs measure
/// of H' = Htilde + r(1, .) (+ h on the remaining sites) and the field table
/// holds y on every configuration of Sigma_{N-1}. mu' does not depend on y.
struct CavitySystem {
  CavitySplit split;
  GibbsTable measure;
  std::vector<double> field;
};

inline CavitySystem build_cavity_system(const DisorderRealization& d, const GibbsCaps& caps = {},
                                        unsigned workers = 1) {
  CavitySplit split(d);
  auto measure = gibbs_from_form(split.cavity_hamiltonian(), d.spec().h(), caps, workers);
  auto field = split.field_table(workers);
  return CavitySystem{std::move(split), std::move(measure), std::move(field)};
}

struct TapRecord {
  std::size_t alpha = 0;  // 1-based
  double mass = 0.0;
  double m1 = 0.0;    // <s_1> or <s>^T
  double ybar = 0.0;  // <y> or <y>^T
  double correction = 0.0;
  double residual = 0.0;
  bool convention = false;
  /// Cavity form only: |<s>^T - <tanh y>| under the tilted conditioned measure.
  double marginalization_gap = 0.0;
};

struct TapReport {
  double q_hat = 0.0;
  std::vector<TapRecord> records;
  /// sum_alpha mass |residual| / sum_alpha mass over the reported clusters.
  double weighted_mean_abs = 0.0;
  double max_abs = 0.0;
  /// weighted_mean_abs recomputed with q_hat -/+ 0.05 (clamped to [0, 1]).
  double sensitivity_minus = 0.0;
  double sensitivity_plus = 0.0;
};

namespace detail {

struct ClusterMoments {
  double mass = 0.0;
  double spin = 0.0;
  double field = 0.0;
  bool convention = false;
  double gap = 0.0;
};

inline double tap_residual(double m, double ybar, double h, double correction) {
  return m - std::tanh(ybar + h - correction * m);
}

inline double weighted_abs(const std::vector<ClusterMoments>& mom, double h, double correction) {
  KahanSum num, den;
  for (const auto& c : mom) {
    num += c.mass * std::abs(tap_residual(c.spin, c.field, h, correction));
    den += c.mass;
  }
  return den.value() > 0.0 ? num.value() / den.value() : 0.0;
}

inline TapReport assemble(const std::vector<ClusterMoments>& mom, double q_hat, double h, const MixtureSpec& spec) {
  const auto correction_at = [&](double q) { return spec.xi_prime(1.0) - spec.xi_prime(std::clamp(q, 0.0, 1.0)); };
  TapReport report;
  report.q_hat = q_hat;
  const double corr = correction_at(q_hat);
  for (std::size_t a = 0; a < mom.size(); ++a) {
    TapRecord r;
    r.alpha = a + 1;
    r.mass = mom[a].mass;
    r.m1 = mom[a].spin;
    r.ybar = mom[a].field;
    r.correction = corr;
    r.residual = tap_residual(r.m1, r.ybar, h, corr);
    r.convention = mom[a].convention;
    r.marginalization_gap = mom[a].gap;
    report.max_abs = std::max(report.max_abs, std::abs(r.residual));
    report.records.push_back(r);
  }
  report.weighted_mean_abs = weighted_abs(mom, h, corr);
  report.sensitivity_minus = weighted_abs(mom, h, correction_at(q_hat - 0.05));
  report.sensitivity_plus = weighted_abs(mom, h, correction_at(q_hat + 0.05));
  return report;
}

inline void check_k(std::size_t k, std::size_t clusters) {
  if (k == 0 || k > clusters) throw DomainError("k must lie in [1, number of clusters]");
}

}  // namespace detail

/// Residuals <s_1>_a - tanh(<y>_a + h - (xi'(1) - xi'(q_hat)) <s_1>_a) for
/// the top k clusters of a decomposition of mu_N. `field` holds y on
/// Sigma_{N-1}; the cluster average of y(rho(s)) is exact.
inline TapReport tap_residuals(const GibbsTable& g_n, std::span<const double> field, const ClusterDecomposition& dec,
                               double q_hat, const MixtureSpec& spec, std::size_t k) {
  detail::check_k(k, dec.size());
  if (dec.dimension != g_n.dimension() || field.size() * 2 != g_n.size())
    throw DomainError("TAP inputs have inconsistent dimensions");
  const auto& p = g_n.probabilities();
  std::vector<detail::ClusterMoments> mom;
  for (std::size_t a = 0; a < k; ++a) {
    detail::ClusterMoments c;
    KahanSum mass, spin, y;
    for (ConfigIndex x : dec.clusters[a]) {
      mass += p[x];
      spin += p[x] * ((x & 1u) ? -1.0 : 1.0);
      y += p[x] * field[x >> 1];
    }
    c.mass = mass.value();
    if (c.mass > 0.0) {
      c.spin = spin.value() / c.mass;
      c.field = y.value() / c.mass;
    } else {
      c.spin = 1.0;
      c.field = field[0];
      c.convention = true;
    }
    mom.push_back(c);
  }
  return detail::assemble(mom, q_hat, spec.h(), spec);
}

inline TapReport tap_residuals(const GibbsTable& g_n, const CavitySplit& split, const ClusterDecomposition& dec,
                               double q_hat, const MixtureSpec& spec, std::size_t k) {
  const auto field = split.field_table();
  return tap_residuals(g_n, field, dec, q_hat, spec, k);
}

/// Cavity-coordinate residuals <s>^T - tanh(<y>^T - (xi'(1) - xi'(q_hat)) <s>^T)
/// under the tilted conditioned measures of the cavity system (no field h).
/// Each record also carries the gap between <s>^T computed from the joint
/// (s, y) law and the analytic marginalization <tanh y> under the tilt.
inline TapReport cavity_tap_residuals(const GibbsTable& g_prime, std::span<const double> field,
                                      const ClusterDecomposition& base, double q_hat, const MixtureSpec& spec,
                                      std::size_t k) {
  detail::check_k(k, base.size());
  if (base.dimension != g_prime.dimension()) throw DomainError("decomposition does not live on the cavity system");
  const auto tilted = tilt(g_prime, field);
  std::vector<detail::ClusterMoments> mom;
  for (std::size_t a = 0; a < k; ++a) {
    const auto& c = base.clusters[a];
    const auto joint = spin_field_joint(g_prime, field, c);
    detail::ClusterMoments m;
    m.mass = g_prime.mass(c);
    m.spin = joint.mean_spin();
    m.field = joint.mean_field();
    m.convention = joint.used_convention();
    const double analytic = conditional_expect(tilted, c, [&](const SpinConfiguration& s) {
      return std::tanh(field[s.index()]);
    });
    m.gap = std::abs(m.spin - analytic);
    mom.push_back(m);
  }
  return detail::assemble(mom, q_hat, 0.0, spec);
}

/// p(s, y; h_alpha) proportional to exp(-(y - h_alpha)^2 / (2 sigma2)) e^{s y}.
struct LimitLaw {
  double h_alpha = 0.0;
  double sigma2 = 1.0;
  int nodes = 100;
};

struct LimitLawMoments {
  double mean_s = 0.0;
  double mean_y = 0.0;
  /// Closed forms tanh(h) and h + sigma2 tanh(h).
  double closed_mean_s = 0.0;
  double closed_mean_y = 0.0;
  /// Difference to the same quadrature with half the nodes.
  double achieved_tolerance = 0.0;
};

namespace detail {

inline std::pair<double, double> limit_law_quadrature(const LimitLaw& law, int nodes) {
  static thread_local std::vector<std::pair<int, GaussHermiteRule>> cache;
  const GaussHermiteRule* rule = nullptr;
  for (const auto& [n, r] : cache)
    if (n == nodes) rule = &r;
  if (!rule) {
    cache.emplace_back(nodes, gauss_hermite(nodes));
    rule = &cache.back().second;
  }
  const double sd = std::sqrt(law.sigma2);
  // The weights of e^{s y} e^{-x^2} are rescaled by e^{-|h|} to stay finite.
  KahanSum z, s_num, y_num;
  for (std::size_t i = 0; i < rule->nodes.size(); ++i) {
    const double y = law.h_alpha + std::numbers::sqrt2 * sd * rule->nodes[i];
    const double ep = std::exp(y - std::abs(law.h_alpha));
    const double em = std::exp(-y - std::abs(law.h_alpha));
    const double w = rule->weights[i];
    z += w * (ep + em);
    s_num += w * (ep - em);
    y_num += w * y * (ep + em);
  }
  return {s_num.value() / z.value(), y_num.value() / z.value()};
}

}  // namespace detail

/// <s> and <y> under the limiting law by Gauss-Hermite quadrature centred at
/// h_alpha, with s summed over {-1, +1} exactly.
inline LimitLawMoments limit_law_moments(const LimitLaw& law, double tolerance = 1e-10) {
  if (!(law.sigma2 > 0.0)) throw DomainError("limit law needs sigma2 > 0");
  if (law.nodes < 4) throw DomainError("limit law quadrature needs at least 4 nodes");
  const auto [s, y] = detail::limit_law_quadrature(law, law.nodes);
  const auto [s_half, y_half] = detail::limit_law_quadrature(law, law.nodes / 2);
  LimitLawMoments out;
  out.mean_s = s;
  out.mean_y = y;
  out.closed_mean_s = std::tanh(law.h_alpha);
  out.closed_mean_y = law.h_alpha + law.sigma2 * std::tanh(law.h_alpha);
  out.achieved_tolerance = std::max(std::abs(s - s_half), std::abs(y - y_half));
  if (!(out.achieved_tolerance <= tolerance * std::max(1.0, std::abs(y))))
    throw ConvergenceError("limit law quadrature did not converge", out.achieved_tolerance);
  return out;
}

/// Draws h_alpha ~ N(0, xi'(q_hat)).
inline double sample_h_alpha(const MixtureSpec& spec, double q_hat, std::uint64_t seed) {
  if (!(q_hat >= 0.0 && q_hat <= 1.0)) throw DomainError("q_hat must lie in [0, 1]");
  return std::sqrt(spec.xi_prime(q_hat)) * CounterStream(seed, streams::kHAlpha).normal(0);
}

}  // namespace tapglass

#endif  // TAPGLASS_TAP_HPP

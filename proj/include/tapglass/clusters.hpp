#ifndef TAPGLASS_CLUSTERS_HPP
#define TAPGLASS_CLUSTERS_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "tapglass/error.hpp"
#include "tapglass/gibbs.hpp"
#include "tapglass/numerics.hpp"
#include "tapglass/spin.hpp"

namespace tapglass {

struct QStarEstimate {
  double q_hat = 0.0;
  double a_hat = 0.0;
  double lobe_mass = 0.0;
  /// Lowest and highest supported atoms of the lobe.
  double lobe_low = 0.0;
  double lobe_high = 0.0;
  /// Overlap at the bottom of the valley that separates the lobe.
  double valley = 0.0;
};

/// Locates the top lobe of an overlap law. A valley is an atom at q >= 0
/// whose mass is strictly below the largest mass on each side of it; its
/// depth is the smaller of those two maxima minus its own mass. Among the
/// valleys whose upper part carries at least `jump_mass_floor`, the deepest
/// wins (ties go to the higher overlap). The lobe is every atom above it,
/// q_hat its mass-weighted mean and a_hat = q_hat - (lowest supported atom).
inline QStarEstimate estimate_qstar(const OverlapLaw& law, double jump_mass_floor) {
  const auto& f = law.masses();
  const std::size_t atoms = f.size();
  std::vector<double> prefix_max(atoms), suffix_max(atoms), suffix_mass(atoms + 1, 0.0);
  for (std::size_t j = 0; j < atoms; ++j) prefix_max[j] = std::max(j ? prefix_max[j - 1] : 0.0, f[j]);
  for (std::size_t j = atoms; j-- > 0;) {
    suffix_max[j] = std::max(j + 1 < atoms ? suffix_max[j + 1] : 0.0, f[j]);
    suffix_mass[j] = suffix_mass[j + 1] + f[j];
  }
  bool found = false;
  std::size_t best = 0;
  double best_depth = -1.0;
  for (std::size_t j = 1; j + 1 < atoms; ++j) {
    if (law.support(j) < -1e-12) continue;
    const double below = prefix_max[j - 1];
    const double above = suffix_max[j + 1];
    if (!(f[j] < below && f[j] < above)) continue;
    if (suffix_mass[j + 1] < jump_mass_floor) continue;
    const double depth = std::min(below, above) - f[j];
    if (depth >= best_depth) {
      best_depth = depth;
      best = j;
      found = true;
    }
  }
  if (!found) throw NoJumpError();
  QStarEstimate est;
  est.valley = law.support(best);
  KahanSum mass, first;
  std::size_t low = atoms, high = 0;
  for (std::size_t j = best + 1; j < atoms; ++j) {
    mass += f[j];
    first += f[j] * law.support(j);
    if (f[j] > 0.0) {
      low = std::min(low, j);
      high = j;
    }
  }
  est.lobe_mass = mass.value();
  est.q_hat = first.value() / est.lobe_mass;
  est.lobe_low = law.support(low);
  est.lobe_high = law.support(high);
  est.a_hat = std::max(0.0, est.q_hat - est.lobe_low);
  return est;
}

/// Disjoint clusters ordered by nonincreasing Gibbs mass (ties by center).
struct ClusterDecomposition {
  int dimension = 0;
  std::vector<ConfigSet> clusters;
  std::vector<double> masses;
  std::vector<ConfigIndex> centers;
  double q_cut = 0.0;
  double residual_mass = 0.0;

  std::size_t size() const noexcept { return clusters.size(); }

  /// Cluster label per configuration, -1 for the unassigned remainder.
  std::vector<int> labels() const {
    std::vector<int> out(hypercube_size(dimension), -1);
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (ConfigIndex x : clusters[a]) out[x] = static_cast<int>(a);
    return out;
  }
};

namespace detail {

inline double hamming_ball_volume(int n, int radius) {
  double v = 0.0;
  for (int d = 0; d <= radius; ++d) v += binomial(n, d);
  return v;
}

// Calls fn(mask) for every n-bit mask of popcount <= radius (Gosper's hack).
template <class Fn>
void for_each_ball_mask(int n, int radius, Fn&& fn) {
  fn(ConfigIndex{0});
  const std::uint64_t limit = std::uint64_t{1} << n;
  for (int w = 1; w <= radius && w <= n; ++w) {
    std::uint64_t m = (std::uint64_t{1} << w) - 1;
    while (m < limit) {
      fn(static_cast<ConfigIndex>(m));
      const std::uint64_t c = m & (~m + 1);
      const std::uint64_t r = m + c;
      m = (((r ^ m) >> 2) / c) | r;
    }
  }
}

inline void sort_by_mass(ClusterDecomposition& dec) {
  std::vector<std::size_t> order(dec.clusters.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dec.masses[a] != dec.masses[b]) return dec.masses[a] > dec.masses[b];
    return dec.centers[a] < dec.centers[b];
  });
  ClusterDecomposition sorted;
  sorted.dimension = dec.dimension;
  sorted.q_cut = dec.q_cut;
  sorted.residual_mass = dec.residual_mass;
  for (std::size_t i : order) {
    sorted.clusters.push_back(std::move(dec.clusters[i]));
    sorted.masses.push_back(dec.masses[i]);
    sorted.centers.push_back(dec.centers[i]);
  }
  dec = std::move(sorted);
}

}  // namespace detail

/// Greedy heaviest-center balls: repeatedly take the unassigned configuration
/// of largest weight (ties by index) as center and claim every unassigned
/// configuration with overlap >= q_cut to it. Stops once the unassigned mass
/// drops below `mass_floor`, nothing is left, or `max_clusters` exist.
inline ClusterDecomposition build_clusters(const GibbsTable& g, double q_cut, std::size_t max_clusters,
                                           double mass_floor) {
  if (!(q_cut >= -1.0 && q_cut <= 1.0)) throw DomainError("q_cut must lie in [-1, 1]");
  if (max_clusters == 0) throw DomainError("max_clusters must be positive");
  if (!(mass_floor >= 0.0 && mass_floor <= 1.0)) throw DomainError("mass_floor must lie in [0, 1]");
  const int n = g.dimension();
  const std::size_t total = g.size();
  const auto& p = g.probabilities();
  const auto& lw = g.log_weights();

  std::vector<ConfigIndex> order(total);
  std::iota(order.begin(), order.end(), ConfigIndex{0});
  std::sort(order.begin(), order.end(), [&](ConfigIndex a, ConfigIndex b) {
    if (lw[a] != lw[b]) return lw[a] > lw[b];
    return a < b;
  });

  // R >= q_cut  <=>  Hamming distance <= N (1 - q_cut) / 2.
  const int radius = std::min(n, static_cast<int>(std::floor(n * (1.0 - q_cut) / 2.0 + 1e-9)));
  const bool enumerate_ball = detail::hamming_ball_volume(n, radius) * 4.0 < static_cast<double>(total);

  ClusterDecomposition dec;
  dec.dimension = n;
  dec.q_cut = q_cut;
  std::vector<char> assigned(total, 0);
  KahanSum assigned_mass;
  std::size_t cursor = 0;
  std::size_t unassigned = total;
  while (dec.clusters.size() < max_clusters && unassigned > 0 && 1.0 - assigned_mass.value() >= mass_floor) {
    while (assigned[order[cursor]]) ++cursor;
    const ConfigIndex center = order[cursor];
    ConfigSet members;
    if (enumerate_ball) {
      detail::for_each_ball_mask(n, radius, [&](ConfigIndex m) {
        const ConfigIndex x = center ^ m;
        if (!assigned[x]) members.push_back(x);
      });
      std::sort(members.begin(), members.end());
    } else {
      for (std::size_t x = 0; x < total; ++x)
        if (!assigned[x] && std::popcount(static_cast<ConfigIndex>(x) ^ center) <= radius)
          members.push_back(static_cast<ConfigIndex>(x));
    }
    KahanSum m;
    for (ConfigIndex x : members) {
      assigned[x] = 1;
      m += p[x];
      assigned_mass += p[x];
    }
    unassigned -= members.size();
    dec.masses.push_back(m.value());
    dec.centers.push_back(center);
    dec.clusters.push_back(std::move(members));
  }
  KahanSum residual;
  for (std::size_t x = 0; x < total; ++x)
    if (!assigned[x]) residual += p[x];
  dec.residual_mass = residual.value();
  detail::sort_by_mass(dec);
  return dec;
}

struct ClusterAuditRow {
  std::size_t alpha = 0;  // 1-based rank
  double mass = 0.0;
  /// mu^2(s1, s2 in C: R <= q_N - a_N)
  double within_low = 0.0;
  /// mu^2(s1, s2 in C: R > q_N - a_N)
  double within_high = 0.0;
  /// integral over C x C of |R - q_hat| d mu^2 divided by mu(C)^2
  double concentration = 0.0;
  /// the same integral without the normalization
  double concentration_unnormalized = 0.0;
};

struct ClusterAudit {
  double q_n = 0.0;
  double a_n = 0.0;
  double q_hat = 0.0;
  /// Mass left outside every cluster.
  double residual_mass = 0.0;
  /// Largest within-cluster low-overlap mass over the audited clusters.
  double within_low_max = 0.0;
  /// Pair mass over distinct audited clusters with R >= q_N + a_N.
  double cross_high_total = 0.0;
  /// Largest such mass over a single ordered pair (alpha, beta).
  double cross_high_max = 0.0;
  /// Normalized concentration of the heaviest cluster.
  double concentration_first = 0.0;
  std::vector<ClusterAuditRow> rows;
};

/// Measures the exhaustion, closeness, separation and concentration
/// properties of a decomposition on its top `top_k` clusters.
inline ClusterAudit audit_clusters(const GibbsTable& g, const ClusterDecomposition& dec, double q_n, double a_n,
                                   double q_hat, std::size_t top_k = 16, std::size_t pairwise_k = 6,
                                   const GibbsCaps& caps = {}) {
  ClusterAudit audit;
  audit.q_n = q_n;
  audit.a_n = a_n;
  audit.q_hat = q_hat;
  audit.residual_mass = dec.residual_mass;
  const std::size_t k = std::min(top_k, dec.size());
  const double low = q_n - a_n;
  const double high = q_n + a_n;
  OverlapLawOptions opt;
  opt.caps = caps;
  double within_high_mass = 0.0;
  ConfigSet uni;
  for (std::size_t a = 0; a < k; ++a) {
    const auto& c = dec.clusters[a];
    ClusterAuditRow row;
    row.alpha = a + 1;
    row.mass = g.mass(c);
    if (row.mass > 0.0) {
      const auto law = overlap_law(g, c, c, opt);
      const double m2 = row.mass * row.mass;
      row.within_low = m2 * law.mass_at_most(low);
      row.within_high = m2 * law.expect([low](double q) { return q > low + 1e-9 ? 1.0 : 0.0; });
      row.concentration = law.expect([q_hat](double q) { return std::abs(q - q_hat); });
      row.concentration_unnormalized = m2 * row.concentration;
      within_high_mass += m2 * law.mass_at_least(high);
    }
    audit.within_low_max = std::max(audit.within_low_max, row.within_low);
    audit.rows.push_back(row);
    uni.insert(uni.end(), c.begin(), c.end());
  }
  if (!audit.rows.empty()) audit.concentration_first = audit.rows.front().concentration;
  std::sort(uni.begin(), uni.end());
  const double mu_u = g.mass(uni);
  if (k >= 2 && mu_u > 0.0) {
    const auto law = overlap_law(g, uni, uni, opt);
    audit.cross_high_total = std::max(0.0, mu_u * mu_u * law.mass_at_least(high) - within_high_mass);
  }
  const std::size_t kp = std::min(k, pairwise_k);
  for (std::size_t a = 0; a < kp; ++a) {
    for (std::size_t b = 0; b < kp; ++b) {
      if (a == b) continue;
      const double ma = audit.rows[a].mass, mb = audit.rows[b].mass;
      if (ma <= 0.0 || mb <= 0.0) continue;
      const auto law = overlap_law(g, dec.clusters[a], dec.clusters[b], opt);
      audit.cross_high_max = std::max(audit.cross_high_max, ma * mb * law.mass_at_least(high));
    }
  }
  return audit;
}

/// Clusters of the cavity system lifted to Sigma_N as Sigma_1 x W_beta and
/// re-ranked by their mass under mu_N.
struct LiftedDecomposition {
  ClusterDecomposition base;
  /// mu_N(Sigma_1 x W_beta) in base order.
  std::vector<double> lifted_masses;
  /// permutation[rank] = base index (both 0-based).
  std::vector<std::size_t> permutation;

  std::size_t size() const noexcept { return permutation.size(); }

  double mass(std::size_t rank) const { return lifted_masses.at(permutation.at(rank)); }

  /// pi_N(n) with 1-based ranks; ranks past the last cluster map to themselves.
  std::size_t pi(std::size_t n) const {
    if (n == 0) throw DomainError("cluster ranks are 1-based");
    return n <= permutation.size() ? permutation[n - 1] + 1 : n;
  }

  /// Sigma_1 x W_{pi(rank)} as a sorted index set on Sigma_N.
  ConfigSet set(std::size_t rank) const {
    ConfigSet out;
    for (ConfigIndex x : base.clusters.at(permutation.at(rank))) {
      out.push_back(x << 1);
      out.push_back((x << 1) | 1u);
    }
    return out;
  }
};

inline LiftedDecomposition lift_clusters(const ClusterDecomposition& base, const GibbsTable& g_n) {
  if (g_n.dimension() != base.dimension + 1)
    throw DomainError("lift needs a decomposition on Sigma_{N-1} and a Gibbs table on Sigma_N");
  LiftedDecomposition lifted;
  lifted.base = base;
  const auto& p = g_n.probabilities();
  for (const auto& c : base.clusters) {
    KahanSum m;
    for (ConfigIndex x : c) {
      m += p[x << 1];
      m += p[(x << 1) | 1u];
    }
    lifted.lifted_masses.push_back(m.value());
  }
  lifted.permutation.resize(base.size());
  std::iota(lifted.permutation.begin(), lifted.permutation.end(), std::size_t{0});
  // Masses equal up to rounding (e.g. under a global spin flip symmetry) tie.
  std::stable_sort(lifted.permutation.begin(), lifted.permutation.end(), [&](std::size_t a, std::size_t b) {
    const double ma = lifted.lifted_masses[a], mb = lifted.lifted_masses[b];
    return ma > mb + 1e-12 * std::max(ma, mb);
  });
  return lifted;
}

/// mu(A delta B) for sorted index sets.
inline double symmetric_difference_mass(const GibbsTable& g, std::span<const ConfigIndex> a,
                                        std::span<const ConfigIndex> b) {
  const auto& p = g.probabilities();
  KahanSum s;
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i] < b[j])) {
      s += p[a[i++]];
    } else if (i == a.size() || b[j] < a[i]) {
      s += p[b[j++]];
    } else {
      ++i;
      ++j;
    }
  }
  return s.value();
}

/// Empirical frequency of {pi_N(n) >= M} across disorder replicas.
inline double permutation_tail(std::span<const LiftedDecomposition> replicas, std::size_t n, std::size_t m) {
  if (n == 0) throw DomainError("cluster ranks are 1-based");
  if (replicas.empty()) throw DomainError("permutation tail needs at least one replica");
  std::size_t hits = 0;
  for (const auto& r : replicas)
    if (r.pi(n) >= m) ++hits;
  return static_cast<double>(hits) / static_cast<double>(replicas.size());
}

/// mu_N(Sigma_1 x A) divided by the integral of T d mu' over A, where the
/// tilted table carries the weights T d mu'.
inline double tilting_ratio(const GibbsTable& g_n, const GibbsTable& tilted_prime, std::span<const ConfigIndex> a) {
  if (g_n.dimension() != tilted_prime.dimension() + 1) throw DomainError("tilting ratio dimension mismatch");
  const auto& p = g_n.probabilities();
  KahanSum lifted;
  for (ConfigIndex x : a) {
    lifted += p[x << 1];
    lifted += p[(x << 1) | 1u];
  }
  return lifted.value() / tilted_prime.mass(a);
}

}  // namespace tapglass

#endif  // TAPGLASS_CLUSTERS_HPP

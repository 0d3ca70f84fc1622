#ifndef TAPGLASS_GIBBS_HPP
#define TAPGLASS_GIBBS_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "tapglass/disorder.hpp"
#include "tapglass/error.hpp"
#include "tapglass/numerics.hpp"
#include "tapglass/rng.hpp"
#include "tapglass/spin.hpp"

namespace tapglass {

struct GibbsCaps {
  int enumeration_cap = 20;
  int pair_cap = 14;
};

/// Sorted, duplicate-free set of configuration indices.
using ConfigSet = std::vector<ConfigIndex>;

inline ConfigSet full_set(int n) {
  ConfigSet s(hypercube_size(n));
  std::iota(s.begin(), s.end(), ConfigIndex{0});
  return s;
}

/// The exact Gibbs measure mu(x) = exp(log_weight[x] - log_z) on Sigma_N.
class GibbsTable {
 public:
  GibbsTable(int n, std::vector<double> log_weights) : n_(n), log_weights_(std::move(log_weights)) {
    if (log_weights_.size() != hypercube_size(n_)) throw DomainError("log-weight table must have 2^N entries");
    log_z_ = log_sum_exp(log_weights_);
    if (!std::isfinite(log_z_)) throw DomainError("Gibbs table has no finite weight");
    probabilities_.resize(log_weights_.size());
    for (std::size_t i = 0; i < log_weights_.size(); ++i) probabilities_[i] = std::exp(log_weights_[i] - log_z_);
  }

  int dimension() const noexcept { return n_; }
  std::size_t size() const noexcept { return log_weights_.size(); }
  double log_z() const noexcept { return log_z_; }
  const std::vector<double>& log_weights() const noexcept { return log_weights_; }
  const std::vector<double>& probabilities() const noexcept { return probabilities_; }
  double probability(ConfigIndex x) const { return probabilities_.at(x); }

  double mass(std::span<const ConfigIndex> set) const {
    KahanSum s;
    for (ConfigIndex x : set) s += probabilities_[x];
    return s.value();
  }

 private:
  int n_;
  std::vector<double> log_weights_;
  std::vector<double> probabilities_;
  double log_z_ = 0.0;
};

inline void check_enumeration_cap(int n, const GibbsCaps& caps) {
  if (n > caps.enumeration_cap)
    throw CapError("N = " + std::to_string(n) + " exceeds the enumeration cap " + std::to_string(caps.enumeration_cap));
}

/// Gibbs table of the Hamiltonian `form + h * sum_i s_i` (weights e^{H}).
inline GibbsTable gibbs_from_form(const MultilinearForm& form, double h, const GibbsCaps& caps = {},
                                  unsigned workers = 1) {
  check_enumeration_cap(form.dimension(), caps);
  return GibbsTable(form.dimension(), form.enumerate(h, workers));
}

/// Enumerates all 2^N states in Gray-code order using single-flip deltas.
inline GibbsTable build_gibbs(const DisorderRealization& d, const GibbsCaps& caps = {}, unsigned workers = 1) {
  return gibbs_from_form(d.form(), d.spec().h(), caps, workers);
}

template <class F>
double expect(const GibbsTable& g, F&& f) {
  KahanSum s;
  const int n = g.dimension();
  for (std::size_t x = 0; x < g.size(); ++x) {
    const double p = g.probabilities()[x];
    if (p != 0.0) s += p * f(SpinConfiguration(static_cast<ConfigIndex>(x), n));
  }
  return s.value();
}

/// Expectation under mu( . | S). A null or empty S yields f(1, ..., 1).
template <class F>
double conditional_expect(const GibbsTable& g, std::span<const ConfigIndex> set, F&& f) {
  const int n = g.dimension();
  KahanSum num, den;
  for (ConfigIndex x : set) {
    const double p = g.probabilities()[x];
    if (p == 0.0) continue;
    den += p;
    num += p * f(SpinConfiguration(x, n));
  }
  if (den.value() <= 0.0) return f(SpinConfiguration::all_up(n));
  return num.value() / den.value();
}

/// mu conditioned on S as a table (log-weight -inf outside S).
inline GibbsTable condition(const GibbsTable& g, std::span<const ConfigIndex> set) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> lw(g.size(), kNegInf);
  bool any = false;
  for (ConfigIndex x : set) {
    lw[x] = g.log_weights()[x];
    any = any || g.probabilities()[x] > 0.0;
  }
  if (!any) {
    std::fill(lw.begin(), lw.end(), kNegInf);
    lw[0] = 0.0;
  }
  return GibbsTable(g.dimension(), std::move(lw));
}

/// Reweights by cosh(y(s)): the tilted measure T d(nu) with
/// T = cosh(y) / integral of cosh(y) d(nu).
inline GibbsTable tilt(const GibbsTable& g, std::span<const double> field) {
  if (field.size() != g.size()) throw DomainError("field table must cover the same hypercube");
  std::vector<double> lw(g.log_weights());
  for (std::size_t x = 0; x < lw.size(); ++x) lw[x] += log_cosh(field[x]);
  return GibbsTable(g.dimension(), std::move(lw));
}

/// Distribution of R12 under a pair measure; atom j sits at q = (2j - N) / N,
/// i.e. j counts agreeing sites.
class OverlapLaw {
 public:
  OverlapLaw(int n, std::vector<double> masses) : n_(n), masses_(std::move(masses)) {
    if (masses_.size() != static_cast<std::size_t>(n_) + 1) throw DomainError("overlap law needs N + 1 atoms");
  }

  int dimension() const noexcept { return n_; }
  std::size_t size() const noexcept { return masses_.size(); }
  double support(std::size_t j) const noexcept { return (2.0 * static_cast<double>(j) - n_) / n_; }
  double mass(std::size_t j) const { return masses_.at(j); }
  const std::vector<double>& masses() const noexcept { return masses_; }

  double total() const {
    KahanSum s;
    for (double m : masses_) s += m;
    return s.value();
  }

  template <class F>
  double expect(F&& f) const {
    KahanSum s;
    for (std::size_t j = 0; j < masses_.size(); ++j) s += masses_[j] * f(support(j));
    return s.value();
  }

  /// Mass of {R <= t} with a 1e-9 tolerance on the grid.
  double mass_at_most(double t) const {
    return expect([t](double q) { return q <= t + 1e-9 ? 1.0 : 0.0; });
  }
  double mass_at_least(double t) const {
    return expect([t](double q) { return q >= t - 1e-9 ? 1.0 : 0.0; });
  }

 private:
  int n_;
  std::vector<double> masses_;
};

enum class OverlapMethod { Automatic, Transform, Pairwise, Sampled };

/// Vose alias table over a finite distribution; ties resolve by index.
class AliasSampler {
 public:
  explicit AliasSampler(std::span<const double> weights) : prob_(weights.size()), alias_(weights.size()) {
    const std::size_t n = weights.size();
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw DomainError("alias sampler needs positive total weight");
    std::vector<double> scaled(n);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      const std::size_t s = small.back();
      small.pop_back();
      const std::size_t l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (std::size_t i : large) prob_[i] = 1.0, alias_[i] = i;
    for (std::size_t i : small) prob_[i] = 1.0, alias_[i] = i;
  }

  std::size_t sample(CounterEngine& rng) const {
    const std::size_t i = rng.below(prob_.size());
    return rng.uniform() < prob_[i] ? i : alias_[i];
  }

 private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

namespace detail {

// mu restricted to `set` and normalized; delta at index 0 when the set is null.
inline std::vector<double> restricted_weights(const GibbsTable& g, std::span<const ConfigIndex> set) {
  std::vector<double> w(g.size(), 0.0);
  KahanSum total;
  for (ConfigIndex x : set) {
    w[x] = g.probabilities()[x];
    total += w[x];
  }
  if (total.value() <= 0.0) {
    std::fill(w.begin(), w.end(), 0.0);
    w[0] = 1.0;
    return w;
  }
  const double inv = 1.0 / total.value();
  for (ConfigIndex x : set) w[x] *= inv;
  return w;
}

inline std::vector<ConfigIndex> support_of(const std::vector<double>& w) {
  std::vector<ConfigIndex> out;
  for (std::size_t x = 0; x < w.size(); ++x)
    if (w[x] > 0.0) out.push_back(static_cast<ConfigIndex>(x));
  return out;
}

}  // namespace detail

struct OverlapLawOptions {
  OverlapMethod method = OverlapMethod::Automatic;
  GibbsCaps caps{};
  std::size_t sampled_pairs = 1'000'000;
  std::uint64_t seed = 0;
};

/// Exact law of R12 for s1 ~ mu( . | S1), s2 ~ mu( . | S2) independent.
/// The transform route computes the XOR convolution of the two restricted
/// tables with a Walsh-Hadamard transform, O(N 2^N); the pairwise route sums
/// over |S1| |S2| pairs; the sampled route draws i.i.d. replica pairs from the
/// exact table through alias sampling.
inline OverlapLaw overlap_law(const GibbsTable& g, std::span<const ConfigIndex> first,
                              std::span<const ConfigIndex> second, const OverlapLawOptions& opt = {}) {
  const int n = g.dimension();
  const auto w1 = detail::restricted_weights(g, first);
  const auto w2 = detail::restricted_weights(g, second);
  OverlapMethod method = opt.method;
  const auto s1 = detail::support_of(w1);
  const auto s2 = detail::support_of(w2);
  if (method == OverlapMethod::Automatic) {
    const double pair_cost = static_cast<double>(s1.size()) * static_cast<double>(s2.size());
    const double transform_cost = 3.0 * n * static_cast<double>(g.size());
    method = pair_cost <= transform_cost ? OverlapMethod::Pairwise : OverlapMethod::Transform;
  }
  std::vector<double> masses(static_cast<std::size_t>(n) + 1, 0.0);
  switch (method) {
    case OverlapMethod::Pairwise: {
      if (n > opt.caps.pair_cap && (s1.size() == g.size() && s2.size() == g.size()))
        throw CapError("pair enumeration over the full hypercube exceeds the pair cap");
      std::vector<KahanSum> acc(masses.size());
      for (ConfigIndex x : s1)
        for (ConfigIndex y : s2) acc[n - std::popcount(x ^ y)] += w1[x] * w2[y];
      for (std::size_t j = 0; j < masses.size(); ++j) masses[j] = acc[j].value();
      break;
    }
    case OverlapMethod::Transform: {
      const auto conv = xor_convolution(w1, w2);
      std::vector<KahanSum> acc(masses.size());
      for (std::size_t z = 0; z < conv.size(); ++z) acc[n - std::popcount(static_cast<ConfigIndex>(z))] += conv[z];
      for (std::size_t j = 0; j < masses.size(); ++j) masses[j] = std::max(0.0, acc[j].value());
      break;
    }
    case OverlapMethod::Sampled: {
      const AliasSampler a(w1), b(w2);
      CounterEngine rng(opt.seed, streams::kReplica);
      std::vector<std::size_t> counts(masses.size(), 0);
      for (std::size_t k = 0; k < opt.sampled_pairs; ++k) {
        const auto x = static_cast<ConfigIndex>(a.sample(rng));
        const auto y = static_cast<ConfigIndex>(b.sample(rng));
        ++counts[n - std::popcount(x ^ y)];
      }
      for (std::size_t j = 0; j < masses.size(); ++j)
        masses[j] = static_cast<double>(counts[j]) / static_cast<double>(opt.sampled_pairs);
      break;
    }
    case OverlapMethod::Automatic: break;
  }
  return OverlapLaw(n, std::move(masses));
}

inline OverlapLaw overlap_law(const GibbsTable& g, const OverlapLawOptions& opt = {}) {
  const auto all = full_set(g.dimension());
  return overlap_law(g, all, all, opt);
}

/// Joint law of (s, s') under the tilted conditioned measure nu^T restricted
/// to S: weight mu(s') e^{s y(s')} normalized by the integral of 2 cosh(y)
/// over S. A null S is replaced by the all-plus configuration.
class SpinFieldJoint {
 public:
  SpinFieldJoint(const GibbsTable& g, std::span<const double> field, std::span<const ConfigIndex> set)
      : g_(&g), field_(field) {
    if (field.size() != g.size()) throw DomainError("field table must cover the same hypercube");
    for (ConfigIndex x : set)
      if (g.probabilities()[x] > 0.0) support_.push_back(x);
    if (support_.empty()) {
      support_.push_back(0);
      convention_ = true;
    }
    LogSumExp norm;
    for (ConfigIndex x : support_) norm.add(base_log_weight(x) + log_cosh(field[x]) + std::numbers::ln2);
    log_norm_ = norm.value();
  }

  /// Exact integral of phi(s, y(s')) d nu^T, summing s over {-1, +1}.
  template <class F>
  double expect(F&& phi) const {
    KahanSum acc;
    for (ConfigIndex x : support_) {
      const double y = field_[x];
      const double lw = base_log_weight(x) - log_norm_;
      acc += std::exp(lw + y) * phi(1, y);
      acc += std::exp(lw - y) * phi(-1, y);
    }
    return acc.value();
  }

  double mean_spin() const {
    return expect([](int s, double) { return static_cast<double>(s); });
  }
  double mean_field() const {
    return expect([](int, double y) { return y; });
  }
  bool used_convention() const noexcept { return convention_; }

 private:
  double base_log_weight(ConfigIndex x) const { return convention_ ? 0.0 : g_->log_weights()[x]; }

  const GibbsTable* g_;
  std::span<const double> field_;
  std::vector<ConfigIndex> support_;
  double log_norm_ = 0.0;
  bool convention_ = false;
};

inline SpinFieldJoint spin_field_joint(const GibbsTable& g, std::span<const double> field,
                                       std::span<const ConfigIndex> set) {
  return SpinFieldJoint(g, field, set);
}

}  // namespace tapglass

#endif  // TAPGLASS_GIBBS_HPP

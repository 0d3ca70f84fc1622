#ifndef TAPGLASS_HARNESS_HPP
#define TAPGLASS_HARNESS_HPP

// Multi-replica, multi-N experiments. Every replica is a pure function of
// (plan, N, replica index) through derive_seed(master, N, replica), and all
// aggregation runs in replica order, so artifacts do not depend on the
// number of workers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tapglass/clusters.hpp"
#include "tapglass/covariance.hpp"
#include "tapglass/disorder.hpp"
#include "tapglass/error.hpp"
#include "tapglass/gibbs.hpp"
#include "tapglass/io.hpp"
#include "tapglass/parallel.hpp"
#include "tapglass/pd.hpp"
#include "tapglass/rng.hpp"
#include "tapglass/stats.hpp"
#include "tapglass/tap.hpp"

namespace tapglass {

enum class ExperimentKind {
  TapTrend,
  CavityTapTrend,
  ClusterAudit,
  Tilting,
  LiftStability,
  PdFit,
  CovarianceAudit,
  LocalizationTails,
};

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::TapTrend: return "tap_trend";
    case ExperimentKind::CavityTapTrend: return "cavity_tap_trend";
    case ExperimentKind::ClusterAudit: return "cluster_audit";
    case ExperimentKind::Tilting: return "tilting";
    case ExperimentKind::LiftStability: return "lift_stability";
    case ExperimentKind::PdFit: return "pd_fit";
    case ExperimentKind::CovarianceAudit: return "covariance_audit";
    case ExperimentKind::LocalizationTails: return "localization_tails";
  }
  return "unknown";
}

inline ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::TapTrend, ExperimentKind::CavityTapTrend, ExperimentKind::ClusterAudit,
                 ExperimentKind::Tilting, ExperimentKind::LiftStability, ExperimentKind::PdFit,
                 ExperimentKind::CovarianceAudit, ExperimentKind::LocalizationTails})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

enum class InstanceKind { Random, Planted, Zero };

inline const char* to_string(InstanceKind k) {
  switch (k) {
    case InstanceKind::Random: return "random";
    case InstanceKind::Planted: return "planted";
    case InstanceKind::Zero: return "zero";
  }
  return "unknown";
}

inline InstanceKind parse_instance_kind(const std::string& s) {
  for (auto k : {InstanceKind::Random, InstanceKind::Planted, InstanceKind::Zero})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown instance type '" + s + "'");
}

struct Thresholds {
  double jump_mass_floor = 0.1;
  double mass_floor = 0.01;
  std::size_t max_clusters = 64;
  /// Clusters entering TAP residuals, PD fits and audits of item 4.
  std::size_t top_k = 3;
  /// Clusters entering the exhaustion/closeness/separation audit.
  std::size_t audit_top_k = 16;
  /// Fixed q_hat instead of estimating it from the overlap law.
  std::optional<double> q_hat;
  /// Use Sigma as the only cluster (no jump detection).
  bool single_cluster = false;
  /// Estimate q_hat from the disorder-averaged overlap law at each N (the
  /// default) or from each replica's own law.
  bool pooled_qstar = true;
};

struct ExperimentPlan {
  ExperimentKind kind = ExperimentKind::TapTrend;
  MixtureSpec spec = MixtureSpec::sk(1.0);
  InstanceKind instance = InstanceKind::Random;
  double ferro = 2.0;
  std::vector<int> ns;
  std::size_t replicas = 1;
  std::uint64_t master_seed = 1;
  Thresholds thresholds;
  GibbsCaps gibbs_caps;
  SamplerCaps sampler_caps;
  std::size_t tilting_sets = 100;
  std::size_t covariance_pairs = 20;
  std::vector<double> tail_levels{0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  std::vector<double> k_tilde_levels{2.0, 4.0, 8.0, 16.0};
  std::vector<std::size_t> permutation_ranks{1, 2, 3, 5, 10};
  std::optional<double> pd_theta;
  std::size_t pd_samples = 20000;
  /// Execution-only settings; they never change the artifacts.
  unsigned workers = 0;
  std::filesystem::path out_dir;

  void validate() const {
    if (ns.empty()) throw ConfigError("plan needs at least one N");
    for (std::size_t i = 0; i < ns.size(); ++i) {
      if (ns[i] < 2) throw ConfigError("plan N values must be at least 2");
      if (i && ns[i] <= ns[i - 1]) throw ConfigError("plan N list must be strictly ascending");
    }
    if (replicas < 1) throw ConfigError("plan needs at least one replica");
    if (gibbs_caps.enumeration_cap <= 0 || gibbs_caps.pair_cap <= 0 || sampler_caps.max_n <= 0 ||
        sampler_caps.memory_budget_bytes == 0)
      throw ConfigError("all caps must be positive");
    if (!(thresholds.jump_mass_floor >= 0.0 && thresholds.jump_mass_floor <= 1.0))
      throw ConfigError("jump_mass_floor must lie in [0, 1]");
    if (!(thresholds.mass_floor >= 0.0 && thresholds.mass_floor <= 1.0))
      throw ConfigError("mass_floor must lie in [0, 1]");
    if (thresholds.max_clusters < 1 || thresholds.top_k < 1 || thresholds.audit_top_k < 1)
      throw ConfigError("cluster counts must be at least 1");
    if (thresholds.q_hat && !(*thresholds.q_hat >= 0.0 && *thresholds.q_hat <= 1.0))
      throw ConfigError("q_hat must lie in [0, 1]");
    if (kind == ExperimentKind::LocalizationTails && replicas < 500)
      throw ConfigError("localization_tails needs at least 500 replicas");
    if (kind == ExperimentKind::PdFit && replicas < 30) throw ConfigError("pd_fit needs at least 30 replicas");
    if (kind == ExperimentKind::PdFit && pd_theta && !(*pd_theta > 0.0 && *pd_theta < 1.0))
      throw ConfigError("pd theta must lie in (0, 1)");
    if (kind == ExperimentKind::Tilting && tilting_sets < 1) throw ConfigError("tilting needs at least one set");
    if (kind == ExperimentKind::CovarianceAudit && covariance_pairs < 1)
      throw ConfigError("covariance_audit needs at least one pair");
    if (instance == InstanceKind::Planted && spec.coefficient(2) <= 0.0)
      throw ConfigError("planted instance needs a positive c2 coefficient");
    for (int n : ns) {
      if (n > sampler_caps.max_n) throw CapError("N = " + std::to_string(n) + " exceeds the sampler cap");
      if (disorder_memory_estimate(spec, n) > sampler_caps.memory_budget_bytes)
        throw CapError("disorder at N = " + std::to_string(n) + " exceeds the memory budget");
      if (kind != ExperimentKind::CovarianceAudit) check_enumeration_cap(n, gibbs_caps);
    }
  }
};

/// Canonical description of a plan. Execution-only settings are left out so
/// that the hash identifies the experiment, not the machine it ran on.
inline nlohmann::json plan_to_json(const ExperimentPlan& p) {
  nlohmann::json coeffs = nlohmann::json::object();
  for (const auto& [deg, c] : p.spec.coefficients()) coeffs[std::to_string(deg)] = c;
  nlohmann::json j;
  j["kind"] = to_string(p.kind);
  j["model"] = {{"coefficients", coeffs}, {"h", p.spec.h()}, {"max_degree", p.spec.max_degree()}};
  j["instance"] = {{"type", to_string(p.instance)}, {"ferro", p.ferro}};
  j["ns"] = p.ns;
  j["replicas"] = p.replicas;
  j["seed"] = p.master_seed;
  nlohmann::json th{{"jump_mass_floor", p.thresholds.jump_mass_floor},
                    {"mass_floor", p.thresholds.mass_floor},
                    {"max_clusters", p.thresholds.max_clusters},
                    {"top_k", p.thresholds.top_k},
                    {"audit_top_k", p.thresholds.audit_top_k},
                    {"single_cluster", p.thresholds.single_cluster},
                    {"pooled_qstar", p.thresholds.pooled_qstar}};
  if (p.thresholds.q_hat) th["q_hat"] = *p.thresholds.q_hat;
  j["thresholds"] = th;
  j["caps"] = {{"enumeration_cap", p.gibbs_caps.enumeration_cap},
               {"pair_cap", p.gibbs_caps.pair_cap},
               {"max_n", p.sampler_caps.max_n},
               {"memory_budget_bytes", p.sampler_caps.memory_budget_bytes}};
  nlohmann::json ex{{"tilting_sets", p.tilting_sets},
                    {"covariance_pairs", p.covariance_pairs},
                    {"tail_levels", p.tail_levels},
                    {"k_tilde_levels", p.k_tilde_levels},
                    {"permutation_ranks", p.permutation_ranks},
                    {"pd_samples", p.pd_samples}};
  if (p.pd_theta) ex["pd_theta"] = *p.pd_theta;
  j["experiment"] = ex;
  return j;
}

inline std::uint64_t plan_hash(const ExperimentPlan& p) { return io::fnv1a(plan_to_json(p).dump()); }

struct Verdict {
  std::string name;
  /// Asserted verdicts decide the exit status; the rest are reported.
  bool asserted = true;
  bool passed = false;
  std::string detail;
};

struct TrendPoint {
  int n = 0;
  std::size_t replicas = 0;
  std::size_t failures = 0;
  stats::Summary summary;
};

struct TrendReport {
  std::string experiment;
  std::string metric;
  std::vector<TrendPoint> points;
  std::vector<Verdict> verdicts;
  /// Named aggregate measurements (fitted constants, tail tables, ...).
  std::vector<std::pair<std::string, double>> extras;

  bool passed() const {
    for (const auto& v : verdicts)
      if (v.asserted && !v.passed) return false;
    return true;
  }

  double extra(const std::string& name) const {
    for (const auto& [k, v] : extras)
      if (k == name) return v;
    throw DomainError("trend report has no entry '" + name + "'");
  }

  const Verdict& verdict(const std::string& name) const {
    for (const auto& v : verdicts)
      if (v.name == name) return v;
    throw DomainError("trend report has no verdict '" + name + "'");
  }
};

struct ReplicaRecord {
  int n = 0;
  std::size_t replica = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string reason;
  std::vector<double> values;
  std::vector<TapRecord> tap;
  std::vector<double> weights;  // cluster masses, pd_fit only
};

struct ExperimentResult {
  TrendReport report;
  std::vector<std::string> columns;
  std::vector<ReplicaRecord> records;
  std::string replicas_csv;
  std::string tap_csv;
  std::string summary_json;
  std::string verdict_text;
};

inline std::uint64_t replica_seed(std::uint64_t master, int n, std::size_t replica) {
  return derive_seed(master, static_cast<std::uint64_t>(n), replica);
}

inline DisorderRealization make_instance(const ExperimentPlan& plan, int n, std::uint64_t seed) {
  switch (plan.instance) {
    case InstanceKind::Planted: return planted_two_well(plan.spec, n, seed, plan.ferro, plan.sampler_caps);
    case InstanceKind::Zero: return zero_disorder(plan.spec, n);
    case InstanceKind::Random: break;
  }
  return sample_disorder(plan.spec, n, seed, plan.sampler_caps);
}

namespace detail {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Lobe {
  double q_hat = 0.0;
  double a_hat = 0.0;
  double lobe_mass = 0.0;
  ClusterDecomposition dec;
};

/// Pooled estimates per N for the measures a kind decomposes; null when the
/// plan estimates per replica.
struct PooledQStar {
  const QStarEstimate* full = nullptr;
  const QStarEstimate* cavity = nullptr;
  bool required = false;
};

/// q_hat and the greedy decomposition at q_cut = q_hat - a_hat, or the whole
/// hypercube as one cluster when the plan asks for it.
inline Lobe decompose(const GibbsTable& g, const Thresholds& th, const GibbsCaps& caps,
                      const QStarEstimate* pooled = nullptr, bool pooled_required = false) {
  Lobe out;
  if (th.single_cluster) {
    out.q_hat = th.q_hat.value_or(0.0);
    out.a_hat = 0.0;
    out.lobe_mass = 1.0;
    out.dec = build_clusters(g, -1.0, 1, 0.0);
    return out;
  }
  QStarEstimate est;
  if (pooled) {
    est = *pooled;
  } else {
    if (pooled_required) throw NoJumpError();
    OverlapLawOptions opt;
    opt.caps = caps;
    est = estimate_qstar(overlap_law(g, opt), th.jump_mass_floor);
  }
  out.q_hat = th.q_hat.value_or(est.q_hat);
  out.a_hat = est.a_hat;
  out.lobe_mass = est.lobe_mass;
  out.dec = build_clusters(g, std::clamp(est.q_hat - est.a_hat, -1.0, 1.0), th.max_clusters, th.mass_floor);
  return out;
}

inline std::vector<double> column_at(const std::vector<ReplicaRecord>& recs, std::size_t col) {
  std::vector<double> out;
  for (const auto& r : recs) out.push_back(r.ok ? r.values.at(col) : kNaN);
  return out;
}

inline std::vector<double> finite(const std::vector<double>& xs) {
  std::vector<double> out;
  for (double x : xs)
    if (std::isfinite(x)) out.push_back(x);
  return out;
}

/// Pairs replica i at N_a with replica i at N_b, keeping pairs where both ran.
inline std::pair<std::vector<double>, std::vector<double>> paired(const std::vector<double>& a,
                                                                  const std::vector<double>& b) {
  std::pair<std::vector<double>, std::vector<double>> out;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (std::isfinite(a[i]) && std::isfinite(b[i])) {
      out.first.push_back(a[i]);
      out.second.push_back(b[i]);
    }
  }
  return out;
}

inline std::string fmt(double v) { return io::format_double(v); }

/// Fails only if some consecutive pair of N shows a significant increase.
inline Verdict nonincreasing_verdict(const std::string& name, const std::vector<int>& ns,
                                     const std::vector<std::vector<double>>& by_n, bool asserted = true) {
  Verdict v{name, asserted, true, ""};
  for (std::size_t i = 0; i + 1 < by_n.size(); ++i) {
    const auto [a, b] = paired(by_n[i], by_n[i + 1]);
    const auto t = stats::sign_test(a, b);
    const bool rising = t.p_increase() < 0.05;
    if (rising) v.passed = false;
    const auto fa = finite(by_n[i]), fb = finite(by_n[i + 1]);
    v.detail += "N=" + std::to_string(ns[i]) + "->" + std::to_string(ns[i + 1]) + ": median " +
                fmt(fa.empty() ? kNaN : stats::median(fa)) + " -> " + fmt(fb.empty() ? kNaN : stats::median(fb)) +
                ", increases " + std::to_string(t.increases) + "/" + std::to_string(t.increases + t.decreases) +
                ", p_increase " + fmt(t.p_increase()) + (rising ? " (significant)" : "") + "; ";
  }
  return v;
}

/// Passes if the values at the last N are significantly smaller than at the first.
inline Verdict decrease_verdict(const std::string& name, int n_first, int n_last, const std::vector<double>& first,
                                const std::vector<double>& last, bool asserted = true) {
  const auto [a, b] = paired(first, last);
  const auto t = stats::sign_test(a, b);
  Verdict v{name, asserted, t.p_decrease() < 0.05, ""};
  const auto fa = finite(first), fb = finite(last);
  v.detail = "N=" + std::to_string(n_first) + "->" + std::to_string(n_last) + ": median " +
             fmt(fa.empty() ? kNaN : stats::median(fa)) + " -> " + fmt(fb.empty() ? kNaN : stats::median(fb)) +
             ", decreases " + std::to_string(t.decreases) + "/" + std::to_string(t.increases + t.decreases) +
             ", p_decrease " + fmt(t.p_decrease());
  return v;
}

inline Verdict threshold_verdict(const std::string& name, double value, double limit, bool asserted = true) {
  return Verdict{name, asserted, value < limit, "value " + fmt(value) + " < " + fmt(limit)};
}

// Per-kind replica pipelines. Each fills `rec.values` in column order.

inline const std::vector<std::string>& columns_for(ExperimentKind k) {
  static const std::map<ExperimentKind, std::vector<std::string>> cols{
      {ExperimentKind::TapTrend,
       {"q_hat", "a_hat", "clusters", "weighted_mean_abs", "max_abs", "sensitivity_minus", "sensitivity_plus",
        "top_mass"}},
      {ExperimentKind::CavityTapTrend,
       {"q_hat", "a_hat", "clusters", "weighted_mean_abs", "max_abs", "max_marginalization_gap"}},
      {ExperimentKind::ClusterAudit,
       {"q_hat", "a_hat", "clusters", "residual_mass", "within_low_max", "cross_high_total", "cross_high_max",
        "concentration_first", "top_mass", "second_mass"}},
      {ExperimentKind::Tilting,
       {"median_abs_dev", "max_abs_dev", "fitted_c", "exact_bound", "min_ratio", "max_ratio", "within_exact_bound"}},
      {ExperimentKind::LiftStability,
       {"q_hat", "clusters", "pi1", "identity", "lifted_top_mass", "symmetric_difference_1"}},
      {ExperimentKind::PdFit, {"lobe_mass", "clusters", "v1", "v2", "v3", "sum_sq"}},
      {ExperimentKind::CovarianceAudit,
       {"process", "dot", "dimension", "estimate", "standard_error", "exact", "idealized", "z", "within_3se"}},
      {ExperimentKind::LocalizationTails, {"abs_ybar", "k_tilde", "l2_y", "clusters"}},
  };
  return cols.at(k);
}

inline const char* metric_for(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::TapTrend:
    case ExperimentKind::CavityTapTrend: return "weighted_mean_abs";
    case ExperimentKind::ClusterAudit: return "concentration_first";
    case ExperimentKind::Tilting: return "median_abs_dev";
    case ExperimentKind::LiftStability: return "pi1";
    case ExperimentKind::PdFit: return "v1";
    case ExperimentKind::CovarianceAudit: return "z";
    case ExperimentKind::LocalizationTails: return "l2_y";
  }
  return "";
}

inline void run_tap(const ExperimentPlan& plan, int n, ReplicaRecord& rec, const PooledQStar& pq) {
  const auto d = make_instance(plan, n, rec.seed);
  const auto g = build_gibbs(d, plan.gibbs_caps);
  const auto lobe = decompose(g, plan.thresholds, plan.gibbs_caps, pq.full, pq.required);
  const CavitySplit split(d);
  const auto field = split.field_table();
  const std::size_t k = std::min(plan.thresholds.top_k, lobe.dec.size());
  const auto rep = tap_residuals(g, field, lobe.dec, lobe.q_hat, plan.spec, k);
  rec.values = {lobe.q_hat,        lobe.a_hat,
                static_cast<double>(lobe.dec.size()),
                rep.weighted_mean_abs, rep.max_abs,
                rep.sensitivity_minus, rep.sensitivity_plus,
                lobe.dec.masses.empty() ? 0.0 : lobe.dec.masses.front()};
  rec.tap = rep.records;
}

inline void run_cavity_tap(const ExperimentPlan& plan, int n, ReplicaRecord& rec, const PooledQStar& pq) {
  const auto d = make_instance(plan, n, rec.seed);
  const auto sys = build_cavity_system(d, plan.gibbs_caps);
  const auto lobe = decompose(sys.measure, plan.thresholds, plan.gibbs_caps, pq.cavity, pq.required);
  const std::size_t k = std::min(plan.thresholds.top_k, lobe.dec.size());
  const auto rep = cavity_tap_residuals(sys.measure, sys.field, lobe.dec, lobe.q_hat, plan.spec, k);
  double gap = 0.0;
  for (const auto& r : rep.records) gap = std::max(gap, r.marginalization_gap);
  rec.values = {lobe.q_hat, lobe.a_hat, static_cast<double>(lobe.dec.size()), rep.weighted_mean_abs, rep.max_abs, gap};
  rec.tap = rep.records;
}

inline void run_cluster_audit(const ExperimentPlan& plan, int n, ReplicaRecord& rec, const PooledQStar& pq) {
  const auto d = make_instance(plan, n, rec.seed);
  const auto g = build_gibbs(d, plan.gibbs_caps);
  const auto lobe = decompose(g, plan.thresholds, plan.gibbs_caps, pq.full, pq.required);
  const auto audit = audit_clusters(g, lobe.dec, lobe.q_hat, lobe.a_hat, lobe.q_hat, plan.thresholds.audit_top_k,
                                    std::min<std::size_t>(plan.thresholds.audit_top_k, 6), plan.gibbs_caps);
  const auto mass = [&](std::size_t i) { return i < lobe.dec.size() ? lobe.dec.masses[i] : 0.0; };
  rec.values = {lobe.q_hat,
                lobe.a_hat,
                static_cast<double>(lobe.dec.size()),
                audit.residual_mass,
                audit.within_low_max,
                audit.cross_high_total,
                audit.cross_high_max,
                audit.concentration_first,
                mass(0),
                mass(1)};
}

/// Random subsets of Sigma_{N-1}: even draws are Bernoulli(u) subsets with
/// u uniform in (0.05, 0.95), odd draws Hamming balls around a uniform center.
inline ConfigSet random_set(int dim, std::uint64_t seed, std::size_t which) {
  CounterEngine rng(derive_seed(seed, streams::kSets, which));
  const std::size_t size = hypercube_size(dim);
  ConfigSet out;
  if (which % 2 == 0) {
    const double u = 0.05 + 0.9 * rng.uniform();
    const auto cut = static_cast<std::uint64_t>(std::ldexp(u, 64));
    for (std::size_t x = 0; x < size; ++x)
      if (rng() < cut) out.push_back(static_cast<ConfigIndex>(x));
  } else {
    const auto center = static_cast<ConfigIndex>(rng.below(size));
    const int radius = static_cast<int>(rng.below(static_cast<std::uint64_t>(dim)));
    for (std::size_t x = 0; x < size; ++x)
      if (std::popcount(static_cast<ConfigIndex>(x) ^ center) <= radius) out.push_back(static_cast<ConfigIndex>(x));
  }
  if (out.empty()) out.push_back(0);
  return out;
}

inline double max_remainder_difference(const CavitySplit& split) {
  double m = 0.0;
  for (double odd : split.remainder_odd_form().enumerate(0.0)) m = std::max(m, 2.0 * std::abs(odd));
  return m;
}

inline void run_tilting(const ExperimentPlan& plan, int n, ReplicaRecord& rec, const PooledQStar&) {
  const auto d = make_instance(plan, n, rec.seed);
  const auto g = build_gibbs(d, plan.gibbs_caps);
  const auto sys = build_cavity_system(d, plan.gibbs_caps);
  // mu_N on Sigma_1 x A against T d mu' with T proportional to cosh(y + h).
  std::vector<double> shifted(sys.field);
  for (double& y : shifted) y += plan.spec.h();
  const auto tilted = tilt(sys.measure, shifted);
  const double bound = 2.0 * max_remainder_difference(sys.split);
  std::vector<double> dev;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  bool inside = true;
  for (std::size_t i = 0; i < plan.tilting_sets; ++i) {
    const auto a = random_set(n - 1, rec.seed, i);
    const double ratio = tilting_ratio(g, tilted, a);
    if (!std::isfinite(ratio)) throw Error("tilting ratio is not finite");
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
    const double tol = 1e-12 * std::exp(bound);
    if (ratio < std::exp(-bound) - tol || ratio > std::exp(bound) + tol) inside = false;
    dev.push_back(std::abs(ratio - 1.0));
  }
  const double max_dev = *std::max_element(dev.begin(), dev.end());
  rec.values = {stats::median(dev), max_dev, std::sqrt(static_cast<double>(n)) * max_dev, bound, lo, hi,
                inside ? 1.0 : 0.0};
}

inline void run_lift(const ExperimentPlan& plan, int n, ReplicaRecord& rec, const PooledQStar& pq) {
  const auto d = make_instance(plan, n, rec.seed);
  const auto g = build_gibbs(d, plan.gibbs_caps);
  const auto sys = build_cavity_system(d, plan.gibbs_caps);
  const auto base = decompose(sys.measure, plan.thresholds, plan.gibbs_caps, pq.cavity, pq.required);
  const auto lifted = lift_clusters(base.dec, g);
  bool identity = true;
  for (std::size_t i = 0; i < lifted.size(); ++i) identity = identity && lifted.permutation[i] == i;
  const auto direct = decompose(g, plan.thresholds, plan.gibbs_caps, pq.full, pq.required);
  const double symdiff =
      direct.dec.size() && lifted.size() ? symmetric_difference_mass(g, direct.dec.clusters[0], lifted.set(0)) : kNaN;
  rec.values = {base.q_hat,
                static_cast<double>(base.dec.size()),
                static_cast<double>(lifted.size() ? lifted.pi(1) : 1),
                identity ? 1.0 : 0.0,
                lifted.size() ? lifted.mass(0) : 0.0,
                symdiff};
}

inline void run_pd(const ExperimentPlan& plan, int n, ReplicaRecord& rec, const PooledQStar& pq) {
  const auto d = make_instance(plan, n, rec.seed);
  const auto g = build_gibbs(d, plan.gibbs_caps);
  const auto lobe = decompose(g, plan.thresholds, plan.gibbs_caps, pq.full, pq.required);
  const auto part = MassPartition::from_masses(lobe.dec.masses);
  rec.weights = part.weights();
  rec.values = {lobe.lobe_mass, static_cast<double>(lobe.dec.size()), part.weight(0), part.weight(1), part.weight(2),
                part.sum_of_squares()};
}

inline void run_localization(const ExperimentPlan& plan, int n, ReplicaRecord& rec, const PooledQStar& pq) {
  const auto d = make_instance(plan, n, rec.seed);
  const auto g = build_gibbs(d, plan.gibbs_caps);
  const auto sys = build_cavity_system(d, plan.gibbs_caps);
  // Heaviest cluster when a jump is detected, the whole hypercube otherwise.
  ClusterDecomposition dec;
  try {
    dec = decompose(g, plan.thresholds, plan.gibbs_caps, pq.full, pq.required).dec;
  } catch (const NoJumpError&) {
    dec = build_clusters(g, -1.0, 1, 0.0);
  }
  const auto& p = g.probabilities();
  const double ybar = conditional_expect(g, dec.clusters.front(), [&](const SpinConfiguration& s) {
    return sys.field[s.index() >> 1];
  });
  KahanSum y2, ch;
  for (std::size_t x = 0; x < g.size(); ++x) y2 += p[x] * sys.field[x >> 1] * sys.field[x >> 1];
  const auto& pp = sys.measure.probabilities();
  for (std::size_t x = 0; x < pp.size(); ++x) ch += pp[x] * std::cosh(2.0 * sys.field[x]);
  rec.values = {std::abs(ybar), std::sqrt(ch.value()), std::sqrt(y2.value()), static_cast<double>(dec.size())};
}

inline void run_replica(const ExperimentPlan& plan, int n, ReplicaRecord& rec, const PooledQStar& pq) {
  switch (plan.kind) {
    case ExperimentKind::TapTrend: return run_tap(plan, n, rec, pq);
    case ExperimentKind::CavityTapTrend: return run_cavity_tap(plan, n, rec, pq);
    case ExperimentKind::ClusterAudit: return run_cluster_audit(plan, n, rec, pq);
    case ExperimentKind::Tilting: return run_tilting(plan, n, rec, pq);
    case ExperimentKind::LiftStability: return run_lift(plan, n, rec, pq);
    case ExperimentKind::PdFit: return run_pd(plan, n, rec, pq);
    case ExperimentKind::LocalizationTails: return run_localization(plan, n, rec, pq);
    case ExperimentKind::CovarianceAudit: break;
  }
  throw DomainError("experiment kind has no per-replica pipeline");
}

/// Random configuration pairs with overlaps spread over [-1, 1].
inline std::vector<std::pair<SpinConfiguration, SpinConfiguration>> random_pairs(int dim, std::size_t count,
                                                                                 std::uint64_t seed) {
  CounterEngine rng(seed, streams::kSets);
  std::vector<std::pair<SpinConfiguration, SpinConfiguration>> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto a = static_cast<ConfigIndex>(rng.below(hypercube_size(dim)));
    const auto distance = static_cast<int>(rng.below(static_cast<std::uint64_t>(dim) + 1));
    std::vector<int> sites(dim);
    std::iota(sites.begin(), sites.end(), 0);
    for (int j = 0; j < distance; ++j)
      std::swap(sites[j], sites[j + static_cast<int>(rng.below(static_cast<std::uint64_t>(dim - j)))]);
    ConfigIndex b = a;
    for (int j = 0; j < distance; ++j) b ^= ConfigIndex{1} << sites[j];
    out.emplace_back(SpinConfiguration(a, dim), SpinConfiguration(b, dim));
  }
  return out;
}

inline double process_code(GaussianProcess p) {
  switch (p) {
    case GaussianProcess::Hamiltonian: return 0.0;
    case GaussianProcess::Tilde: return 1.0;
    case GaussianProcess::Field: return 2.0;
  }
  return -1.0;
}

}  // namespace detail

namespace detail {

/// Disorder-averaged overlap laws of mu_N and of the cavity measure mu' at
/// one N, summed in replica order.
struct PooledLaws {
  std::vector<std::optional<QStarEstimate>> full, cavity;
  std::vector<double> full_lobe_mass, cavity_lobe_mass;
};

inline PooledLaws pool_overlap_laws(const ExperimentPlan& plan, unsigned workers) {
  PooledLaws out;
  const auto k = plan.kind;
  const bool want_full = k == ExperimentKind::TapTrend || k == ExperimentKind::ClusterAudit ||
                         k == ExperimentKind::LiftStability || k == ExperimentKind::PdFit ||
                         k == ExperimentKind::LocalizationTails;
  const bool want_cavity = k == ExperimentKind::CavityTapTrend || k == ExperimentKind::LiftStability;
  out.full.resize(plan.ns.size());
  out.cavity.resize(plan.ns.size());
  if (!plan.thresholds.pooled_qstar || plan.thresholds.single_cluster) return out;
  OverlapLawOptions opt;
  opt.caps = plan.gibbs_caps;
  for (std::size_t i = 0; i < plan.ns.size(); ++i) {
    const int n = plan.ns[i];
    std::vector<std::vector<double>> full(plan.replicas), cavity(plan.replicas);
    parallel_for(plan.replicas, workers, [&](std::size_t r) {
      try {
        const auto d = make_instance(plan, n, replica_seed(plan.master_seed, n, r));
        if (want_full) full[r] = overlap_law(build_gibbs(d, plan.gibbs_caps), opt).masses();
        if (want_cavity) cavity[r] = overlap_law(build_cavity_system(d, plan.gibbs_caps).measure, opt).masses();
      } catch (const Error&) {
        // The replica fails again in the main pass and is recorded there.
      }
    });
    const auto pool = [&](const std::vector<std::vector<double>>& laws, int dim) -> std::optional<QStarEstimate> {
      std::vector<KahanSum> acc(static_cast<std::size_t>(dim) + 1);
      std::size_t used = 0;
      for (const auto& m : laws) {
        if (m.empty()) continue;
        ++used;
        for (std::size_t j = 0; j < m.size(); ++j) acc[j] += m[j];
      }
      if (used == 0) return std::nullopt;
      std::vector<double> masses;
      for (auto& a : acc) masses.push_back(a.value() / static_cast<double>(used));
      try {
        return estimate_qstar(OverlapLaw(dim, std::move(masses)), plan.thresholds.jump_mass_floor);
      } catch (const NoJumpError&) {
        return std::nullopt;
      }
    };
    if (want_full) out.full[i] = pool(full, n);
    if (want_cavity) out.cavity[i] = pool(cavity, n - 1);
  }
  return out;
}

}  // namespace detail

/// Fraction of failed replicas at one N above which the experiment errors.
inline constexpr double kMaxFailureFraction = 0.2;

namespace detail {

inline void write_artifacts(const ExperimentPlan& plan, ExperimentResult& res) {
  const std::uint64_t hash = plan_hash(plan);
  const std::string header = io::provenance_line(hash, plan.master_seed);
  {
    io::CsvWriter csv;
    csv.comment(header);
    std::vector<std::string> head{"n", "replica", "replica_seed", "status", "reason"};
    head.insert(head.end(), res.columns.begin(), res.columns.end());
    csv.row(head);
    for (const auto& r : res.records) {
      std::vector<std::string> row{std::to_string(r.n), std::to_string(r.replica), std::to_string(r.seed),
                                   r.ok ? "ok" : "failed", r.reason};
      for (std::size_t c = 0; c < res.columns.size(); ++c)
        row.push_back(r.ok && c < r.values.size() ? io::format_double(r.values[c]) : "");
      csv.row(row);
    }
    res.replicas_csv = csv.str();
  }
  if (plan.kind == ExperimentKind::TapTrend || plan.kind == ExperimentKind::CavityTapTrend) {
    io::CsvWriter csv;
    csv.comment(header);
    csv.row({"N", "replica_seed", "alpha", "mass", "m1", "ybar", "correction", "residual"});
    for (const auto& r : res.records)
      for (const auto& t : r.tap) csv.record(r.n, r.seed, t.alpha, t.mass, t.m1, t.ybar, t.correction, t.residual);
    res.tap_csv = csv.str();
  }
  nlohmann::json j;
  j["config_hash"] = io::hex64(hash);
  j["seed"] = plan.master_seed;
  j["experiment"] = res.report.experiment;
  j["metric"] = res.report.metric;
  j["plan"] = plan_to_json(plan);
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : res.report.points)
    pts.push_back({{"n", p.n},
                   {"replicas", p.replicas},
                   {"failures", p.failures},
                   {"count", p.summary.count},
                   {"mean", p.summary.mean},
                   {"standard_error", p.summary.standard_error},
                   {"median", p.summary.median},
                   {"q25", p.summary.q25},
                   {"q75", p.summary.q75},
                   {"iqr", p.summary.iqr()}});
  j["points"] = pts;
  nlohmann::json ver = nlohmann::json::array();
  for (const auto& v : res.report.verdicts)
    ver.push_back({{"name", v.name}, {"asserted", v.asserted}, {"passed", v.passed}, {"detail", v.detail}});
  j["verdicts"] = ver;
  nlohmann::json ex = nlohmann::json::object();
  for (const auto& [k, v] : res.report.extras) ex[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  j["extras"] = ex;
  j["passed"] = res.report.passed();
  res.summary_json = j.dump(2) + "\n";

  std::string txt = "# " + header + "\n";
  txt += "experiment " + res.report.experiment + "\n";
  for (const auto& v : res.report.verdicts)
    txt += std::string(v.passed ? "PASS" : "FAIL") + (v.asserted ? "" : " (reported)") + "  " + v.name + "  " +
           v.detail + "\n";
  txt += std::string("overall ") + (res.report.passed() ? "PASS" : "FAIL") + "\n";
  res.verdict_text = txt;

  if (!plan.out_dir.empty()) {
    const std::string stem = to_string(plan.kind);
    io::write_file(plan.out_dir / (stem + "_replicas.csv"), res.replicas_csv);
    if (!res.tap_csv.empty()) io::write_file(plan.out_dir / (stem + "_tap.csv"), res.tap_csv);
    io::write_file(plan.out_dir / (stem + "_summary.json"), res.summary_json);
    io::write_file(plan.out_dir / (stem + "_verdicts.txt"), res.verdict_text);
  }
}

inline void add_kind_verdicts(const ExperimentPlan& plan, ExperimentResult& res,
                              const std::vector<std::vector<ReplicaRecord>>& by_n) {
  auto& rep = res.report;
  const auto& ns = plan.ns;
  const auto col = [&](const std::string& name) {
    const auto& cols = res.columns;
    return static_cast<std::size_t>(std::find(cols.begin(), cols.end(), name) - cols.begin());
  };
  const auto values = [&](const std::string& name) {
    std::vector<std::vector<double>> out;
    for (const auto& recs : by_n) out.push_back(column_at(recs, col(name)));
    return out;
  };
  const auto max_of = [](const std::vector<std::vector<double>>& v) {
    double m = 0.0;
    for (const auto& xs : v)
      for (double x : finite(xs)) m = std::max(m, x);
    return m;
  };
  switch (plan.kind) {
    case ExperimentKind::TapTrend: {
      rep.verdicts.push_back(nonincreasing_verdict("median weighted |residual| nonincreasing in N", ns,
                                                   values("weighted_mean_abs")));
      break;
    }
    case ExperimentKind::CavityTapTrend: {
      const auto v = values("weighted_mean_abs");
      rep.verdicts.push_back(nonincreasing_verdict("median weighted |residual| nonincreasing in N", ns, v));
      if (ns.size() >= 2)
        rep.verdicts.push_back(decrease_verdict("median weighted |residual| decreases from first to last N", ns.front(),
                                                ns.back(), v.front(), v.back(), false));
      const double gap = max_of(values("max_marginalization_gap"));
      rep.extras.emplace_back("max_marginalization_gap", gap);
      rep.verdicts.push_back(threshold_verdict("spin marginal equals tanh-marginalization", gap, 1e-12));
      break;
    }
    case ExperimentKind::ClusterAudit: {
      const double residual = max_of(values("residual_mass"));
      const double cross = max_of(values("cross_high_total"));
      rep.extras.emplace_back("max_residual_mass", residual);
      rep.extras.emplace_back("max_cross_high_total", cross);
      rep.extras.emplace_back("max_within_low", max_of(values("within_low_max")));
      rep.verdicts.push_back(threshold_verdict("exhaustion residual below 0.01 on every replica", residual, 0.01));
      rep.verdicts.push_back(threshold_verdict("cross-cluster high-overlap mass below 0.01 on every replica", cross,
                                               0.01));
      if (ns.size() >= 2) {
        const auto c = values("concentration_first");
        rep.verdicts.push_back(decrease_verdict("heaviest-cluster concentration decreases from first to last N",
                                                ns.front(), ns.back(), c.front(), c.back()));
      }
      break;
    }
    case ExperimentKind::Tilting: {
      double c_fit = 0.0;
      bool inside = true;
      for (const auto& recs : by_n)
        for (const auto& r : recs)
          if (r.ok) {
            c_fit = std::max(c_fit, r.values[col("fitted_c")]);
            inside = inside && r.values[col("within_exact_bound")] == 1.0;
          }
      rep.extras.emplace_back("fitted_c", c_fit);
      for (std::size_t i = 0; i < ns.size(); ++i) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& r : by_n[i])
          if (r.ok) {
            lo = std::min(lo, r.values[col("min_ratio")]);
            hi = std::max(hi, r.values[col("max_ratio")]);
          }
        const std::string tag = "N" + std::to_string(ns[i]);
        rep.extras.emplace_back("min_ratio_" + tag, lo);
        rep.extras.emplace_back("max_ratio_" + tag, hi);
        rep.extras.emplace_back("band_low_" + tag, 1.0 - c_fit / std::sqrt(static_cast<double>(ns[i])));
        rep.extras.emplace_back("band_high_" + tag, 1.0 + c_fit / std::sqrt(static_cast<double>(ns[i])));
      }
      rep.verdicts.push_back(Verdict{"ratios finite and inside [exp(-2 max|r(1)-r(-1)|), exp(+2 max|r(1)-r(-1)|)]",
                                     true, inside && std::isfinite(c_fit), "fitted C " + fmt(c_fit)});
      if (ns.size() >= 2) {
        const auto v = values("median_abs_dev");
        rep.verdicts.push_back(
            decrease_verdict("median |ratio - 1| decreases from first to last N", ns.front(), ns.back(), v.front(),
                             v.back()));
      }
      break;
    }
    case ExperimentKind::LiftStability: {
      bool all_cap = true;
      for (std::size_t i = 0; i < ns.size(); ++i) {
        std::vector<double> pi1 = finite(column_at(by_n[i], col("pi1")));
        const std::string tag = "N" + std::to_string(ns[i]);
        double prev = 1.0;
        bool monotone = true;
        for (std::size_t m : plan.permutation_ranks) {
          std::size_t hits = 0;
          for (double p : pi1)
            if (p >= static_cast<double>(m)) ++hits;
          const double freq = pi1.empty() ? kNaN : static_cast<double>(hits) / static_cast<double>(pi1.size());
          rep.extras.emplace_back("tail_pi1_ge_" + std::to_string(m) + "_" + tag, freq);
          monotone = monotone && freq <= prev;
          prev = freq;
          if (m == 10) all_cap = all_cap && freq < 0.1;
        }
        rep.verdicts.push_back(Verdict{"P(pi(1) >= M) nonincreasing in M at " + tag, true, monotone, ""});
        const auto id = finite(column_at(by_n[i], col("identity")));
        const double id_freq = id.empty() ? kNaN : stats::mean(id);
        rep.extras.emplace_back("identity_frequency_" + tag, id_freq);
        rep.verdicts.push_back(Verdict{"pi = identity with frequency >= 0.9 at " + tag, false, id_freq >= 0.9,
                                       "frequency " + fmt(id_freq)});
        const auto sd = finite(column_at(by_n[i], col("symmetric_difference_1")));
        const double sd_med = sd.empty() ? kNaN : stats::median(sd);
        rep.extras.emplace_back("median_symmetric_difference_1_" + tag, sd_med);
        rep.verdicts.push_back(
            Verdict{"median mu(C_1 delta W_1) <= 0.05 at " + tag, false, sd_med <= 0.05, "median " + fmt(sd_med)});
      }
      rep.verdicts.push_back(Verdict{"P(pi(1) >= 10) < 0.1 at every N", true, all_cap, ""});
      break;
    }
    case ExperimentKind::PdFit: {
      for (std::size_t i = 0; i < ns.size(); ++i) {
        std::vector<MassPartition> parts;
        std::vector<double> lobe;
        for (const auto& r : by_n[i])
          if (r.ok) {
            parts.emplace_back(r.weights);
            lobe.push_back(r.values[col("lobe_mass")]);
          }
        const std::string tag = "N" + std::to_string(ns[i]);
        const double theta = plan.pd_theta.value_or(lobe.empty() ? kNaN : 1.0 - stats::mean(lobe));
        rep.extras.emplace_back("theta_" + tag, theta);
        if (!(theta > 0.0 && theta < 1.0) || parts.size() < 30) {
          rep.verdicts.push_back(Verdict{"PD fit of v_1 at " + tag, false, false, "theta or replicas out of range"});
          continue;
        }
        PdFitOptions opt;
        opt.pd_samples = plan.pd_samples;
        opt.seed = derive_seed(plan.master_seed, streams::kPoisson, static_cast<std::uint64_t>(ns[i]));
        const auto fit = compare_to_pd(parts, theta, std::min<std::size_t>(plan.thresholds.top_k, 5), opt);
        rep.extras.emplace_back("ks_stat_" + tag, fit.ks_stat);
        rep.extras.emplace_back("ks_critical_" + tag, fit.ks_critical);
        rep.extras.emplace_back("sum_sq_emp_" + tag, fit.sum_sq_emp);
        rep.extras.emplace_back("sum_sq_pd_" + tag, fit.sum_sq_pd);
        rep.verdicts.push_back(Verdict{"PD fit of v_1 not rejected at " + tag, false, !fit.rejected,
                                       "KS " + fmt(fit.ks_stat) + " vs critical " + fmt(fit.ks_critical)});
      }
      break;
    }
    case ExperimentKind::LocalizationTails: {
      std::vector<std::vector<double>> l2;
      for (std::size_t i = 0; i < ns.size(); ++i) {
        const std::string tag = "N" + std::to_string(ns[i]);
        const auto y = finite(column_at(by_n[i], col("abs_ybar")));
        const auto kt = finite(column_at(by_n[i], col("k_tilde")));
        l2.push_back(column_at(by_n[i], col("l2_y")));
        double prev = 1.0;
        bool monotone = true;
        // Least-squares fit of log P(|y| > L) = log C1 - C2 L^2.
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int pts = 0;
        for (double level : plan.tail_levels) {
          const double f = static_cast<double>(std::count_if(y.begin(), y.end(), [&](double v) { return v > level; })) /
                           static_cast<double>(std::max<std::size_t>(1, y.size()));
          rep.extras.emplace_back("tail_ybar_gt_" + fmt(level) + "_" + tag, f);
          monotone = monotone && f <= prev;
          prev = f;
          if (f > 0.0) {
            const double x = level * level, ly = std::log(f);
            sx += x, sy += ly, sxx += x * x, sxy += x * ly;
            ++pts;
          }
        }
        if (pts >= 2) {
          const double slope = (pts * sxy - sx * sy) / (pts * sxx - sx * sx);
          rep.extras.emplace_back("subgaussian_c2_" + tag, -slope);
          rep.extras.emplace_back("subgaussian_c1_" + tag, std::exp((sy - slope * sx) / pts));
        }
        rep.verdicts.push_back(Verdict{"tail frequency of |<y>| nonincreasing in L at " + tag, true, monotone, ""});
        double markov = 0.0;
        for (double level : plan.k_tilde_levels) {
          const double f =
              static_cast<double>(std::count_if(kt.begin(), kt.end(), [&](double v) { return v >= level; })) /
              static_cast<double>(std::max<std::size_t>(1, kt.size()));
          rep.extras.emplace_back("tail_k_tilde_ge_" + fmt(level) + "_" + tag, f);
          markov = std::max(markov, level * f);
        }
        rep.extras.emplace_back("markov_c_" + tag, markov);
        const auto l2f = finite(l2.back());
        rep.extras.emplace_back("mean_l2_y_" + tag, l2f.empty() ? kNaN : stats::mean(l2f));
      }
      rep.verdicts.push_back(nonincreasing_verdict("(integral of y^2 d mu)^(1/2) shows no growth in N", ns, l2));
      break;
    }
    case ExperimentKind::CovarianceAudit: break;
  }
}

inline ExperimentResult run_covariance_experiment(const ExperimentPlan& plan) {
  ExperimentResult res;
  res.columns = columns_for(plan.kind);
  res.report.experiment = to_string(plan.kind);
  res.report.metric = metric_for(plan.kind);
  const unsigned workers = plan.workers ? plan.workers : default_workers();
  bool all_ok = true;
  double worst_remainder = 0.0;
  for (int n : plan.ns) {
    std::vector<CovarianceCheck> checks;
    const std::uint64_t pair_seed = derive_seed(plan.master_seed, streams::kSets, static_cast<std::uint64_t>(n));
    for (const auto& [a, b] : random_pairs(n, plan.covariance_pairs, derive_seed(pair_seed, 0)))
      checks.push_back({GaussianProcess::Hamiltonian, a, b});
    for (const auto& [a, b] : random_pairs(n - 1, plan.covariance_pairs, derive_seed(pair_seed, 1)))
      checks.push_back({GaussianProcess::Tilde, a, b});
    for (const auto& [a, b] : random_pairs(n - 1, plan.covariance_pairs, derive_seed(pair_seed, 2)))
      checks.push_back({GaussianProcess::Field, a, b});
    const std::uint64_t seed = replica_seed(plan.master_seed, n, 0);
    const auto cov = covariance_audit(plan.spec, n, checks, plan.replicas, seed, workers);
    std::vector<double> z;
    for (std::size_t i = 0; i < cov.rows.size(); ++i) {
      const auto& row = cov.rows[i];
      ReplicaRecord rec;
      rec.n = n;
      rec.replica = i;
      rec.seed = seed;
      rec.ok = true;
      const double zi = row.standard_error > 0 ? (row.estimate - row.exact) / row.standard_error : 0.0;
      z.push_back(zi);
      rec.values = {detail::process_code(row.process), static_cast<double>(row.dot), static_cast<double>(row.dimension),
                    row.estimate, row.standard_error, row.exact, row.idealized, zi,
                    row.within_3se ? 1.0 : 0.0};
      res.records.push_back(std::move(rec));
    }
    all_ok = all_ok && cov.all_within_3se();
    res.report.points.push_back(TrendPoint{n, cov.rows.size(), 0, stats::summarize(z)});
    // Coefficient-variance route against the closed form, on one realization.
    const auto d = sample_disorder(plan.spec, n, seed, plan.sampler_caps);
    const double coeff = CavitySplit(d).remainder_difference_variance();
    const double formula = remainder_difference_variance_formula(plan.spec, n);
    worst_remainder = std::max(worst_remainder, std::abs(coeff - formula));
    res.report.extras.emplace_back("remainder_difference_variance_N" + std::to_string(n), coeff);
    res.report.extras.emplace_back("remainder_difference_variance_formula_N" + std::to_string(n), formula);
  }
  res.report.verdicts.push_back(
      Verdict{"all covariances within 3 standard errors", true, all_ok, std::to_string(res.records.size()) + " checks"});
  res.report.verdicts.push_back(threshold_verdict("Var(r(1)-r(-1)) matches the closed form to 1e-12", worst_remainder,
                                                  1e-12));
  write_artifacts(plan, res);
  return res;
}

}  // namespace detail

/// Runs every replica of the plan, aggregates in replica order, writes the
/// artifacts when `plan.out_dir` is set and returns the trend report. A
/// replica that throws is recorded as failed with the error message; more
/// than 20% failures at any N raises ExperimentError after the artifacts
/// have been written.
inline ExperimentResult run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  if (!plan.out_dir.empty()) io::ensure_writable_directory(plan.out_dir);
  if (plan.kind == ExperimentKind::CovarianceAudit) return detail::run_covariance_experiment(plan);

  ExperimentResult res;
  res.columns = detail::columns_for(plan.kind);
  res.report.experiment = to_string(plan.kind);
  res.report.metric = detail::metric_for(plan.kind);
  const std::size_t total = plan.ns.size() * plan.replicas;
  res.records.resize(total);
  const unsigned workers = plan.workers ? plan.workers : default_workers();
  const auto pooled = detail::pool_overlap_laws(plan, workers);
  const bool pooled_mode = plan.thresholds.pooled_qstar && !plan.thresholds.single_cluster;
  const auto pooled_for = [&](std::size_t i) {
    detail::PooledQStar pq;
    pq.required = pooled_mode;
    if (pooled.full[i]) pq.full = &*pooled.full[i];
    if (pooled.cavity[i]) pq.cavity = &*pooled.cavity[i];
    return pq;
  };
  for (std::size_t i = 0; i < plan.ns.size(); ++i) {
    const std::string tag = "_N" + std::to_string(plan.ns[i]);
    for (const auto& [name, est] : {std::pair{"pooled", &pooled.full[i]}, std::pair{"pooled_cavity", &pooled.cavity[i]}})
      if (*est) {
        res.report.extras.emplace_back(std::string(name) + "_q_hat" + tag, (*est)->q_hat);
        res.report.extras.emplace_back(std::string(name) + "_a_hat" + tag, (*est)->a_hat);
        res.report.extras.emplace_back(std::string(name) + "_lobe_mass" + tag, (*est)->lobe_mass);
      }
  }
  parallel_for(total, workers, [&](std::size_t t) {
    auto& rec = res.records[t];
    const int n = plan.ns[t / plan.replicas];
    rec.n = n;
    rec.replica = t % plan.replicas;
    rec.seed = replica_seed(plan.master_seed, n, rec.replica);
    try {
      detail::run_replica(plan, n, rec, pooled_for(t / plan.replicas));
      rec.ok = true;
    } catch (const Error& e) {
      rec.ok = false;
      rec.reason = e.what();
      rec.values.clear();
      rec.tap.clear();
      rec.weights.clear();
    }
  });

  std::vector<std::vector<ReplicaRecord>> by_n(plan.ns.size());
  for (std::size_t t = 0; t < total; ++t) by_n[t / plan.replicas].push_back(res.records[t]);
  const auto mcol = static_cast<std::size_t>(
      std::find(res.columns.begin(), res.columns.end(), res.report.metric) - res.columns.begin());
  std::string failure;
  for (std::size_t i = 0; i < plan.ns.size(); ++i) {
    const auto vals = detail::finite(detail::column_at(by_n[i], mcol));
    std::size_t failures = 0;
    std::map<std::string, std::size_t> reasons;
    for (const auto& r : by_n[i])
      if (!r.ok) {
        ++failures;
        ++reasons[r.reason];
      }
    res.report.points.push_back(TrendPoint{plan.ns[i], plan.replicas, failures, stats::summarize(vals)});
    res.report.extras.emplace_back("failure_rate_N" + std::to_string(plan.ns[i]),
                                   static_cast<double>(failures) / static_cast<double>(plan.replicas));
    if (static_cast<double>(failures) > kMaxFailureFraction * static_cast<double>(plan.replicas) &&
        failure.empty()) {
      const auto top = std::max_element(reasons.begin(), reasons.end(),
                                        [](const auto& a, const auto& b) { return a.second < b.second; });
      failure = std::to_string(failures) + " of " + std::to_string(plan.replicas) + " replicas failed at N = " +
                std::to_string(plan.ns[i]) + " (most often: " + top->first + ")";
    }
  }
  if (failure.empty()) {
    detail::add_kind_verdicts(plan, res, by_n);
  } else {
    res.report.verdicts.push_back(Verdict{"replica failure rate at most 20%", true, false, failure});
  }
  detail::write_artifacts(plan, res);
  if (!failure.empty()) throw ExperimentError(failure);
  return res;
}

/// Item-4 statistic of the heaviest cluster per N with a decrease verdict.
inline TrendReport overlap_concentration(ExperimentPlan plan) {
  plan.kind = ExperimentKind::ClusterAudit;
  auto res = run_experiment(plan);
  TrendReport rep;
  rep.experiment = "overlap_concentration";
  rep.metric = "concentration_first";
  rep.points = res.report.points;
  rep.extras = res.report.extras;
  for (const auto& v : res.report.verdicts)
    if (v.name.find("concentration") != std::string::npos) rep.verdicts.push_back(v);
  return rep;
}

inline TrendReport localization_tails(ExperimentPlan plan) {
  plan.kind = ExperimentKind::LocalizationTails;
  return run_experiment(plan).report;
}

}  // namespace tapglass

#endif  // TAPGLASS_HARNESS_HPP

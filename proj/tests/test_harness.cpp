#include <gtest/gtest.h>

#include <filesystem>

#include "tapglass/harness.hpp"
#include "tapglass/io.hpp"

using namespace tapglass;

namespace {

ExperimentPlan planted(ExperimentKind kind, std::vector<int> ns, std::size_t replicas) {
  ExperimentPlan p;
  p.kind = kind;
  p.spec = MixtureSpec::sk(0.1);
  p.instance = InstanceKind::Planted;
  p.ns = std::move(ns);
  p.replicas = replicas;
  p.master_seed = 11;
  p.workers = 1;
  return p;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tapglass_harness_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Harness, KindNamesRoundTrip) {
  for (auto k : {ExperimentKind::TapTrend, ExperimentKind::CavityTapTrend, ExperimentKind::ClusterAudit,
                 ExperimentKind::Tilting, ExperimentKind::LiftStability, ExperimentKind::PdFit,
                 ExperimentKind::CovarianceAudit, ExperimentKind::LocalizationTails})
    EXPECT_EQ(parse_experiment_kind(to_string(k)), k);
  EXPECT_THROW((void)parse_experiment_kind("nope"), ConfigError);
  EXPECT_EQ(parse_instance_kind("planted"), InstanceKind::Planted);
}

TEST(Harness, ReplicaSeedsAreStableAndDistinct) {
  EXPECT_EQ(replica_seed(5, 10, 3), derive_seed(5, 10, 3));
  EXPECT_NE(replica_seed(5, 10, 3), replica_seed(5, 12, 3));
  EXPECT_NE(replica_seed(5, 10, 3), replica_seed(5, 10, 4));
}

TEST(Harness, ZeroDisorderSmoke) {
  ExperimentPlan p;
  p.kind = ExperimentKind::TapTrend;
  p.instance = InstanceKind::Zero;
  p.ns = {6, 8};
  p.replicas = 3;
  p.thresholds.single_cluster = true;
  p.workers = 1;
  const auto res = run_experiment(p);
  ASSERT_EQ(res.records.size(), 6u);
  for (const auto& r : res.records) {
    EXPECT_TRUE(r.ok) << r.reason;
    ASSERT_EQ(r.tap.size(), 1u);
    EXPECT_EQ(r.tap[0].residual, 0.0);
  }
  EXPECT_TRUE(res.report.passed());
}

TEST(Harness, ArtifactsCarryProvenanceAndAreWorkerIndependent) {
  auto p = planted(ExperimentKind::ClusterAudit, {8, 10}, 24);
  p.out_dir = scratch("audit1");
  const auto a = run_experiment(p);
  auto q = p;
  q.workers = 3;
  q.out_dir = scratch("audit3");
  const auto b = run_experiment(q);
  EXPECT_EQ(a.replicas_csv, b.replicas_csv);
  EXPECT_EQ(a.summary_json, b.summary_json);
  EXPECT_EQ(a.verdict_text, b.verdict_text);
  const std::string header = "# " + io::provenance_line(plan_hash(p), p.master_seed);
  EXPECT_EQ(a.replicas_csv.rfind(header, 0), 0u);
  EXPECT_EQ(io::read_file(p.out_dir / "cluster_audit_replicas.csv"), a.replicas_csv);
  EXPECT_EQ(io::read_file(q.out_dir / "cluster_audit_replicas.csv"), a.replicas_csv);
  const auto summary = nlohmann::json::parse(io::read_file(p.out_dir / "cluster_audit_summary.json"));
  EXPECT_EQ(summary["seed"], p.master_seed);
  EXPECT_EQ(summary["points"].size(), 2u);
  EXPECT_TRUE(std::filesystem::exists(p.out_dir / "cluster_audit_verdicts.txt"));
}

TEST(Harness, PlantedAuditMeetsThresholds) {
  const auto res = run_experiment(planted(ExperimentKind::ClusterAudit, {8, 12}, 30));
  for (const auto& r : res.records) {
    ASSERT_TRUE(r.ok) << r.reason;
    EXPECT_LT(r.values[3], 0.01);
    EXPECT_LT(r.values[5], 0.01);
    EXPECT_GE(r.values[2], 2.0);
  }
}

TEST(Harness, TapTrendRecordsResiduals) {
  auto p = planted(ExperimentKind::TapTrend, {8, 10}, 20);
  p.out_dir = scratch("tap");
  const auto res = run_experiment(p);
  EXPECT_FALSE(res.tap_csv.empty());
  for (const auto& r : res.records) {
    ASSERT_TRUE(r.ok) << r.reason;
    EXPECT_FALSE(r.tap.empty());
    EXPECT_LE(r.tap.size(), 3u);
  }
  EXPECT_TRUE(std::filesystem::exists(p.out_dir / "tap_trend_tap.csv"));
  EXPECT_EQ(res.report.points.size(), 2u);
}

TEST(Harness, CavityTapGapIsZero) {
  const auto res = run_experiment(planted(ExperimentKind::CavityTapTrend, {8, 10}, 20));
  for (const auto& r : res.records) {
    ASSERT_TRUE(r.ok) << r.reason;
    EXPECT_LE(r.values[5], 1e-12);
  }
}

TEST(Harness, LiftStabilityOnPlantedInstance) {
  const auto res = run_experiment(planted(ExperimentKind::LiftStability, {8, 10}, 20));
  for (const auto& r : res.records) ASSERT_TRUE(r.ok) << r.reason;
  EXPECT_NO_THROW((void)res.report.extra("tail_pi1_ge_10_N10"));
}

TEST(Harness, TiltingRatiosStayInsideExactBound) {
  ExperimentPlan p;
  p.kind = ExperimentKind::Tilting;
  p.spec = MixtureSpec({{2, 1.5}, {3, 0.1}});
  p.ns = {8, 10};
  p.replicas = 10;
  p.tilting_sets = 20;
  p.workers = 1;
  const auto res = run_experiment(p);
  for (const auto& r : res.records) {
    ASSERT_TRUE(r.ok) << r.reason;
    EXPECT_EQ(r.values[6], 1.0);
  }
}

TEST(Harness, PdFitAndLocalizationRun) {
  auto p = planted(ExperimentKind::PdFit, {8}, 30);
  p.pd_samples = 2000;
  const auto pd = run_experiment(p);
  EXPECT_NO_THROW((void)pd.report.extra("theta_N8"));
  auto l = planted(ExperimentKind::LocalizationTails, {6}, 500);
  const auto loc = run_experiment(l);
  for (const auto& r : loc.records) ASSERT_TRUE(r.ok) << r.reason;
}

TEST(Harness, CovarianceAuditSmall) {
  ExperimentPlan p;
  p.kind = ExperimentKind::CovarianceAudit;
  p.spec = MixtureSpec({{2, 1.0}, {3, 0.5}});
  p.ns = {6};
  p.replicas = 4000;
  p.covariance_pairs = 5;
  p.workers = 1;
  const auto res = run_experiment(p);
  EXPECT_EQ(res.records.size(), 15u);
  EXPECT_TRUE(res.report.verdict("Var(r(1)-r(-1)) matches the closed form to 1e-12").passed);
}

TEST(Harness, PerReplicaEstimationMode) {
  auto p = planted(ExperimentKind::ClusterAudit, {10}, 10);
  p.thresholds.pooled_qstar = false;
  const auto res = run_experiment(p);
  for (const auto& r : res.records) EXPECT_TRUE(r.ok) << r.reason;
}

TEST(Harness, TooManyFailuresRaiseAfterWritingArtifacts) {
  ExperimentPlan p;
  p.kind = ExperimentKind::TapTrend;
  p.instance = InstanceKind::Zero;
  p.ns = {8};
  p.replicas = 5;
  p.workers = 1;
  p.out_dir = scratch("failing");
  EXPECT_THROW((void)run_experiment(p), ExperimentError);
  const auto csv = io::read_file(p.out_dir / "tap_trend_replicas.csv");
  EXPECT_NE(csv.find("failed"), std::string::npos);
}

TEST(Harness, ValidationRejectsBadPlans) {
  ExperimentPlan p;
  EXPECT_THROW(p.validate(), ConfigError);
  p.ns = {10, 10};
  EXPECT_THROW(p.validate(), ConfigError);
  p.ns = {10};
  p.kind = ExperimentKind::PdFit;
  p.replicas = 29;
  EXPECT_THROW(p.validate(), ConfigError);
  p.kind = ExperimentKind::TapTrend;
  p.gibbs_caps.enumeration_cap = 8;
  EXPECT_THROW(p.validate(), CapError);
}

TEST(Harness, SignTestVerdicts) {
  const std::vector<double> hi{5, 6, 7, 8, 9, 10, 11, 12}, lo{1, 2, 3, 4, 5, 6, 7, 8};
  EXPECT_TRUE(detail::decrease_verdict("d", 10, 12, hi, lo).passed);
  EXPECT_FALSE(detail::decrease_verdict("d", 10, 12, lo, hi).passed);
  EXPECT_TRUE(detail::nonincreasing_verdict("n", {10, 12}, {hi, lo}).passed);
  EXPECT_TRUE(detail::nonincreasing_verdict("n", {10, 12}, {hi, hi}).passed);
  EXPECT_FALSE(detail::nonincreasing_verdict("n", {10, 12}, {lo, hi}).passed);
  EXPECT_TRUE(detail::threshold_verdict("t", 0.5, 1.0).passed);
  EXPECT_FALSE(detail::threshold_verdict("t", 1.0, 1.0).passed);
}

#include <gtest/gtest.h>

#include <set>

#include "tapglass/clusters.hpp"
#include "tapglass/disorder.hpp"
#include "tapglass/gibbs.hpp"
#include "tapglass/tap.hpp"

using namespace tapglass;

namespace {

OverlapLaw law_with(int n, std::vector<std::pair<int, double>> atoms) {
  std::vector<double> m(static_cast<std::size_t>(n) + 1, 0.0);
  for (auto [j, w] : atoms) m[static_cast<std::size_t>(j)] = w;
  return OverlapLaw(n, std::move(m));
}

}  // namespace

TEST(QStar, IsolatedAtomAboveBulk) {
  const auto est = estimate_qstar(law_with(10, {{4, 0.1}, {5, 0.2}, {6, 0.15}, {8, 0.55}}), 0.1);
  EXPECT_NEAR(est.q_hat, 0.6, 1e-12);
  EXPECT_NEAR(est.lobe_mass, 0.55, 1e-12);
  EXPECT_NEAR(est.a_hat, 0.0, 1e-12);
  EXPECT_NEAR(est.valley, 0.4, 1e-12);
}

TEST(QStar, TwoAtomLaw) {
  const auto est = estimate_qstar(law_with(20, {{10, 0.4}, {17, 0.6}}), 0.1);
  EXPECT_NEAR(est.q_hat, 0.7, 1e-12);
  EXPECT_NEAR(est.lobe_mass, 0.6, 1e-12);
}

TEST(QStar, LobeMeanAndWidth) {
  const auto est = estimate_qstar(law_with(10, {{5, 0.5}, {7, 0.1}, {8, 0.2}, {9, 0.2}}), 0.1);
  EXPECT_NEAR(est.lobe_mass, 0.5, 1e-12);
  EXPECT_NEAR(est.q_hat, (0.1 * 0.4 + 0.2 * 0.6 + 0.2 * 0.8) / 0.5, 1e-12);
  EXPECT_NEAR(est.a_hat, est.q_hat - 0.4, 1e-12);
}

TEST(QStar, ValleysBelowZeroAreIgnored) {
  EXPECT_THROW((void)estimate_qstar(law_with(10, {{1, 0.3}, {3, 0.0}, {5, 0.7}}), 0.1), NoJumpError);
}

TEST(QStar, FloorFiltersLightLobes) {
  const auto law = law_with(10, {{5, 0.95}, {9, 0.05}});
  EXPECT_THROW((void)estimate_qstar(law, 0.1), NoJumpError);
  EXPECT_NEAR(estimate_qstar(law, 0.01).q_hat, 0.8, 1e-12);
}

TEST(QStar, UnimodalLawsHaveNoJump) {
  EXPECT_THROW((void)estimate_qstar(overlap_law(build_gibbs(zero_disorder(MixtureSpec::sk(1.0), 14))), 0.1),
               NoJumpError);
}

TEST(Clusters, DecompositionInvariantsOverRandomInstances) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto g = build_gibbs(sample_disorder(MixtureSpec({{2, 1.5}, {3, 0.3}}), 10, seed));
    for (double q_cut : {-1.0, 0.0, 0.3, 0.6, 1.0}) {
      const auto dec = build_clusters(g, q_cut, 32, 0.01);
      std::set<ConfigIndex> seen;
      double mass = 0.0;
      for (std::size_t a = 0; a < dec.size(); ++a) {
        double m = 0.0;
        for (ConfigIndex x : dec.clusters[a]) {
          ASSERT_TRUE(seen.insert(x).second) << "clusters overlap";
          m += g.probability(x);
          ASSERT_GE(overlap(SpinConfiguration(x, 10), SpinConfiguration(dec.centers[a], 10)).value(), q_cut - 1e-12);
        }
        ASSERT_NEAR(m, dec.masses[a], 1e-12);
        if (a) {
          ASSERT_GE(dec.masses[a - 1], dec.masses[a] - 1e-15);
        }
        mass += m;
      }
      EXPECT_NEAR(mass + dec.residual_mass, 1.0, 1e-12);
      EXPECT_TRUE(dec.residual_mass < 0.01 || dec.size() == 32);
    }
  }
}

TEST(Clusters, SingletonsAtZeroDisorder) {
  const int n = 6;
  const auto dec = build_clusters(build_gibbs(zero_disorder(MixtureSpec::sk(1.0), n)), 1.0 - 1.0 / n, 64, 0.0);
  ASSERT_EQ(dec.size(), 64u);
  for (std::size_t a = 0; a < dec.size(); ++a) {
    EXPECT_EQ(dec.clusters[a].size(), 1u);
    EXPECT_NEAR(dec.masses[a], 1.0 / 64, 1e-15);
  }
}

TEST(Clusters, MinusOneCutGivesOneCluster) {
  const auto g = build_gibbs(sample_disorder(MixtureSpec::sk(1.0), 7, 1));
  const auto dec = build_clusters(g, -1.0, 8, 0.0);
  ASSERT_EQ(dec.size(), 1u);
  EXPECT_EQ(dec.clusters[0].size(), 128u);
  EXPECT_EQ(dec.residual_mass, 0.0);
  const auto audit = audit_clusters(g, dec, 0.5, 0.1, 0.5);
  EXPECT_EQ(audit.cross_high_total, 0.0);
  EXPECT_NEAR(audit.residual_mass, 0.0, 1e-15);
}

TEST(Clusters, InvalidArguments) {
  const auto g = build_gibbs(zero_disorder(MixtureSpec::sk(1.0), 4));
  EXPECT_THROW((void)build_clusters(g, 1.5, 4, 0.0), DomainError);
  EXPECT_THROW((void)build_clusters(g, 0.5, 0, 0.0), DomainError);
  EXPECT_THROW((void)build_clusters(g, 0.5, 4, 2.0), DomainError);
}

TEST(Clusters, PlantedTwoWellSplitsIntoTwoClusters) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = build_gibbs(planted_two_well(MixtureSpec::sk(0.1), 12, seed, 2.0));
    const auto est = estimate_qstar(overlap_law(g), 0.1);
    const auto dec = build_clusters(g, est.q_hat - est.a_hat, 8, 0.01);
    ASSERT_GE(dec.size(), 2u);
    EXPECT_NEAR(dec.masses[0], dec.masses[1], 1e-9);
    const auto audit = audit_clusters(g, dec, est.q_hat, est.a_hat, est.q_hat);
    EXPECT_LT(audit.residual_mass, 0.01);
    EXPECT_LT(audit.cross_high_total, 0.01);
    const auto c0 = SpinConfiguration(dec.centers[0], 12), c1 = SpinConfiguration(dec.centers[1], 12);
    EXPECT_LT(overlap(c0, c1).value(), 0.0);
  }
}

TEST(Clusters, AuditOnSingletonsHasNoLowPairs) {
  const auto g = build_gibbs(sample_disorder(MixtureSpec::sk(1.0), 5, 1));
  const auto audit = audit_clusters(g, build_clusters(g, 0.9, 32, 0.0), 0.5, 0.1, 0.5, 32);
  EXPECT_EQ(audit.within_low_max, 0.0);
  for (const auto& row : audit.rows) EXPECT_NEAR(row.concentration, 0.5, 1e-12);
}

TEST(Lift, WholeHypercube) {
  const auto d = sample_disorder(MixtureSpec::sk(1.0), 6, 3);
  const auto sys = build_cavity_system(d);
  const auto lifted = lift_clusters(build_clusters(sys.measure, -1.0, 1, 0.0), build_gibbs(d));
  EXPECT_EQ(lifted.set(0).size(), 64u);
  EXPECT_EQ(lifted.pi(1), 1u);
  EXPECT_EQ(lifted.pi(7), 7u);
  EXPECT_NEAR(lifted.mass(0), 1.0, 1e-12);
  EXPECT_THROW((void)lifted.pi(0), DomainError);
}

TEST(Lift, IdentityWithoutFieldOrRemainder) {
  const auto d = zero_disorder(MixtureSpec::sk(1.0), 6);
  const auto base = build_clusters(build_cavity_system(d).measure, 0.5, 8, 0.0);
  const auto lifted = lift_clusters(base, build_gibbs(d));
  for (std::size_t a = 0; a < base.size(); ++a) {
    EXPECT_EQ(lifted.permutation[a], a);
    EXPECT_NEAR(lifted.lifted_masses[a], base.masses[a], 1e-12);
  }
}

TEST(Lift, LiftedMassesAreConsistent) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto d = sample_disorder(MixtureSpec({{2, 1.5}, {3, 0.3}}), 9, seed);
    const auto g = build_gibbs(d);
    const auto base = build_clusters(build_cavity_system(d).measure, 0.4, 16, 0.0);
    const auto lifted = lift_clusters(base, g);
    for (std::size_t r = 0; r < lifted.size(); ++r) {
      EXPECT_NEAR(g.mass(lifted.set(r)), lifted.mass(r), 1e-12);
      if (r) {
        EXPECT_GE(lifted.mass(r - 1), lifted.mass(r) * (1 - 1e-12));
      }
    }
  }
}

TEST(Lift, DimensionMismatch) {
  const auto g = build_gibbs(zero_disorder(MixtureSpec::sk(1.0), 6));
  EXPECT_THROW((void)lift_clusters(build_clusters(g, 0.5, 4, 0.0), g), DomainError);
}

TEST(SymmetricDifference, Examples) {
  const auto g = build_gibbs(sample_disorder(MixtureSpec::sk(1.0), 5, 3));
  const auto all = full_set(5);
  EXPECT_EQ(symmetric_difference_mass(g, all, all), 0.0);
  EXPECT_NEAR(symmetric_difference_mass(g, all, ConfigSet{}), 1.0, 1e-12);
  const ConfigSet a{1, 2, 3}, b{2, 3, 4};
  EXPECT_NEAR(symmetric_difference_mass(g, a, b), g.probability(1) + g.probability(4), 1e-15);
}

TEST(PermutationTail, Examples) {
  LiftedDecomposition l;
  l.permutation = {1, 0, 2, 3};
  l.lifted_masses = {0.3, 0.4, 0.2, 0.1};
  LiftedDecomposition id = l;
  id.permutation = {0, 1, 2, 3};
  const std::vector<LiftedDecomposition> reps{l, id, id, id};
  EXPECT_EQ(permutation_tail(reps, 1, 2), 0.25);
  EXPECT_EQ(permutation_tail(reps, 1, 1), 1.0);
  EXPECT_EQ(permutation_tail(reps, 1, 3), 0.0);
  EXPECT_THROW((void)permutation_tail(reps, 0, 1), DomainError);
  EXPECT_THROW((void)permutation_tail(std::vector<LiftedDecomposition>{}, 1, 1), DomainError);
}

TEST(Tilting, RatioIsExactWithoutOddRemainder) {
  for (double h : {0.0, 0.3}) {
    const auto d = sample_disorder(MixtureSpec({{2, 1.0}}, h), 9, 2);
    const auto sys = build_cavity_system(d);
    std::vector<double> shifted(sys.field);
    for (double& y : shifted) y += h;
    const auto tilted = tilt(sys.measure, shifted);
    const auto g = build_gibbs(d);
    CounterEngine rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      ConfigSet a;
      for (ConfigIndex x = 0; x < sys.measure.size(); ++x)
        if (rng.uniform() < 0.4) a.push_back(x);
      EXPECT_NEAR(tilting_ratio(g, tilted, a), 1.0, 1e-10);
    }
  }
}

TEST(Tilting, RatioWithinExactBound) {
  const auto d = sample_disorder(MixtureSpec({{2, 1.5}, {3, 0.5}}), 10, 5);
  const auto sys = build_cavity_system(d);
  const auto g = build_gibbs(d);
  const auto tilted = tilt(sys.measure, sys.field);
  const auto odd = sys.split.remainder_odd_form().enumerate();
  double b = 0.0;
  for (double v : odd) b = std::max(b, 4.0 * std::abs(v));
  CounterEngine rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    ConfigSet a;
    for (ConfigIndex x = 0; x < sys.measure.size(); ++x)
      if (rng.uniform() < 0.5) a.push_back(x);
    const double r = tilting_ratio(g, tilted, a);
    EXPECT_GE(r, std::exp(-b) * (1 - 1e-12));
    EXPECT_LE(r, std::exp(b) * (1 + 1e-12));
  }
}

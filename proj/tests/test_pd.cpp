#include <gtest/gtest.h>

#include "tapglass/pd.hpp"

using namespace tapglass;

TEST(MassPartition, Validation) {
  EXPECT_NO_THROW(MassPartition({0.5, 0.3, 0.2}));
  EXPECT_THROW(MassPartition({0.3, 0.5}), DomainError);
  EXPECT_THROW(MassPartition({0.7, 0.6}), DomainError);
  EXPECT_THROW(MassPartition({-0.1}), DomainError);
  const auto p = MassPartition::from_masses({0.1, 0.6, 0.2});
  EXPECT_EQ(p.weights(), (std::vector<double>{0.6, 0.2, 0.1}));
  EXPECT_EQ(p.weight(5), 0.0);
  EXPECT_NEAR(p.total(), 0.9, 1e-15);
  EXPECT_NEAR(p.truncation_deficit(), 0.1, 1e-15);
  EXPECT_NEAR(p.sum_of_squares(), 0.41, 1e-15);
  EXPECT_NEAR(p.tail_mass(1), 1.0, 1e-15);
  EXPECT_NEAR(p.tail_mass(2), 0.4, 1e-15);
  EXPECT_NEAR(p.tail_mass(3), 0.2, 1e-15);
}

TEST(PoissonDirichlet, DrawsAreRankedAndReproducible) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto p = sample_pd(0.5, 50, s);
    ASSERT_EQ(p.size(), 50u);
    for (std::size_t i = 0; i < p.size(); ++i) {
      ASSERT_GT(p.weight(i), 0.0);
      if (i) {
        ASSERT_LE(p.weight(i), p.weight(i - 1));
      }
    }
    ASSERT_LT(p.total(), 1.0);
    ASSERT_EQ(p.weights(), sample_pd(0.5, 50, s).weights());
  }
}

class PdMoments : public ::testing::TestWithParam<double> {};

TEST_P(PdMoments, SecondMomentIsOneMinusTheta) {
  const double theta = GetParam();
  std::vector<double> poisson, sticks;
  for (std::uint64_t s = 0; s < 40000; ++s) {
    poisson.push_back(sample_pd(theta, 200, s).sum_of_squares());
    double rest = 0.0;
    const auto p = sample_pd_stick_breaking(theta, 200, s, &rest);
    sticks.push_back(p.sum_of_squares() + stick_breaking_square_correction(theta, 200, rest));
  }
  EXPECT_NEAR(stats::mean(poisson), 1 - theta, 4 * stats::standard_error(poisson));
  EXPECT_NEAR(stats::mean(sticks), 1 - theta, 4 * stats::standard_error(sticks));
}

TEST_P(PdMoments, LeadingWeightMeansAgreeBetweenSamplers) {
  const double theta = GetParam();
  std::vector<double> a, b;
  for (std::uint64_t s = 0; s < 40000; ++s) {
    a.push_back(sample_pd(theta, 200, s).weight(0));
    b.push_back(sample_pd_stick_breaking(theta, 400, s + 1000000).weight(0));
  }
  const double se = std::hypot(stats::standard_error(a), stats::standard_error(b));
  EXPECT_NEAR(stats::mean(a), stats::mean(b), 4 * se);
}

INSTANTIATE_TEST_SUITE_P(Thetas, PdMoments, ::testing::Values(0.2, 0.5, 0.8));

TEST(PoissonDirichlet, SmallThetaConcentrates) {
  std::vector<double> v;
  for (std::uint64_t s = 0; s < 2000; ++s) v.push_back(sample_pd(0.05, 50, s).weight(0));
  EXPECT_GT(stats::mean(v), 0.9);
}

TEST(PoissonDirichlet, InvalidArguments) {
  EXPECT_THROW((void)sample_pd(0.0, 10, 1), DomainError);
  EXPECT_THROW((void)sample_pd(1.0, 10, 1), DomainError);
  EXPECT_THROW((void)sample_pd(0.5, 0, 1), DomainError);
  EXPECT_THROW((void)sample_pd_stick_breaking(0.5, 0, 1), DomainError);
}

TEST(PoissonDirichlet, BatchIsWorkerIndependent) {
  const auto a = sample_pd_batch(0.4, 200, 30, 9, 1), b = sample_pd_batch(0.4, 200, 30, 9, 4);
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i].weights(), b[i].weights());
}

TEST(PdFit, RequiresThirtyPartitions) {
  EXPECT_THROW((void)compare_to_pd(std::vector<MassPartition>(29, MassPartition({0.5, 0.5})), 0.5, 2),
               InsufficientReplicasError);
  EXPECT_THROW((void)compare_to_pd(std::vector<MassPartition>(30, MassPartition({0.5, 0.5})), 0.5, 6), DomainError);
}

TEST(PdFit, UniformSingletonsAreRejected) {
  const std::vector<MassPartition> uni(60, MassPartition(std::vector<double>(64, 1.0 / 64)));
  PdFitOptions opt;
  opt.pd_samples = 2000;
  const auto rep = compare_to_pd(uni, 0.5, 3, opt);
  EXPECT_TRUE(rep.rejected);
  EXPECT_NEAR(rep.sum_sq_emp, 1.0 / 64, 1e-12);
}

TEST(PdFit, PdDrawsAreNotRejectedAgainstThemselves) {
  const auto parts = sample_pd_batch(0.5, 300, 200, 77);
  PdFitOptions opt;
  opt.pd_samples = 5000;
  const auto rep = compare_to_pd(parts, 0.5, 3, opt);
  EXPECT_FALSE(rep.rejected);
  EXPECT_EQ(rep.mean_emp.size(), 3u);
  EXPECT_EQ(rep.tail_mass_table.size(), 4u);
  EXPECT_EQ(rep.gap_table.size(), 2u * 3u);
  EXPECT_NEAR(rep.sum_sq_pd, 0.5, 0.02);
}

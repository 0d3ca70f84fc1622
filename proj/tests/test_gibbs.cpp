#include <gtest/gtest.h>

#include <numbers>

#include "tapglass/disorder.hpp"
#include "tapglass/gibbs.hpp"
#include "tapglass/tap.hpp"

using namespace tapglass;

namespace {

double s1(const SpinConfiguration& s) { return s.spin(0); }

GibbsTable random_table(int n, std::uint64_t seed, double h = 0.0) {
  return build_gibbs(sample_disorder(MixtureSpec({{2, 1.0}, {3, 0.4}}, h), n, seed));
}

}  // namespace

TEST(Gibbs, UniformMeasureHasLogZNLog2) {
  for (int n : {2, 5, 9, 12}) {
    const auto g = build_gibbs(zero_disorder(MixtureSpec::sk(1.0), n));
    EXPECT_NEAR(g.log_z(), n * std::numbers::ln2, 1e-12);
    EXPECT_NEAR(g.probability(0), std::ldexp(1.0, -n), 1e-15);
  }
}

TEST(Gibbs, ProductMeasureUnderField) {
  const double h = 0.3;
  const auto g = build_gibbs(zero_disorder(MixtureSpec::sk(1.0, h), 6));
  EXPECT_NEAR(g.log_z(), 6 * std::log(2 * std::cosh(h)), 1e-12);
  for (int i = 0; i < 6; ++i)
    EXPECT_NEAR(expect(g, [i](const SpinConfiguration& s) { return double(s.spin(i)); }), std::tanh(h), 1e-12);
}

TEST(Gibbs, TwoSiteWeightsByHand) {
  const std::vector<double> e{0.5, -0.2, 0.9, 1.3};
  const auto g = build_gibbs(disorder_from_entries(MixtureSpec::sk(1.0), 2, {{2, e}}));
  std::vector<double> w(4);
  double z = 0.0;
  for (ConfigIndex x = 0; x < 4; ++x) {
    const SpinConfiguration s(x, 2);
    const int a = s.spin(0), b = s.spin(1);
    w[x] = std::exp((e[0] + e[1] * a * b + e[2] * a * b + e[3]) / std::sqrt(2.0));
    z += w[x];
  }
  for (ConfigIndex x = 0; x < 4; ++x) EXPECT_NEAR(g.probability(x), w[x] / z, 1e-12);
  EXPECT_NEAR(g.log_z(), std::log(z), 1e-12);
}

TEST(Gibbs, TableMatchesDirectEnergies) {
  const auto d = sample_disorder(MixtureSpec({{2, 1.0}, {3, 0.5}, {4, 0.3}}, 0.2), 8, 3);
  const auto g = build_gibbs(d);
  std::vector<double> lw;
  for (ConfigIndex x = 0; x < 256; ++x) lw.push_back(energy(d, SpinConfiguration(x, 8)));
  const double lz = log_sum_exp(lw);
  for (ConfigIndex x = 0; x < 256; ++x) ASSERT_NEAR(std::log(g.probability(x)), lw[x] - lz, 1e-9);
}

TEST(Gibbs, WorkerCountDoesNotChangeTable) {
  const auto d = sample_disorder(MixtureSpec({{2, 1.0}, {3, 0.5}}), 14, 3);
  EXPECT_EQ(build_gibbs(d, {}, 1).log_weights(), build_gibbs(d, {}, 3).log_weights());
}

TEST(Gibbs, EnumerationCap) {
  GibbsCaps caps;
  caps.enumeration_cap = 8;
  EXPECT_THROW((void)build_gibbs(zero_disorder(MixtureSpec::sk(1.0), 9), caps), CapError);
}

TEST(Gibbs, ProbabilitiesSumToOneAndSpinFlipSymmetryForEvenModels) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = build_gibbs(sample_disorder(MixtureSpec({{2, 1.0}, {4, 0.5}}), 9, seed));
    double total = 0.0;
    for (double p : g.probabilities()) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
    const ConfigIndex mask = (1u << 9) - 1;
    for (ConfigIndex x = 0; x < 512; x += 11) EXPECT_NEAR(g.probability(x), g.probability(x ^ mask), 1e-12);
    EXPECT_NEAR(expect(g, s1), 0.0, 1e-12);
  }
}

TEST(Gibbs, ConditionalExpectationConventions) {
  const auto g = random_table(5, 3);
  const auto f = [](const SpinConfiguration& s) { return double(s.spin(0) + 2 * s.spin(3)); };
  const auto all = full_set(5);
  const ConfigSet empty, single{13};
  EXPECT_NEAR(conditional_expect(g, all, f), expect(g, f), 1e-12);
  EXPECT_EQ(conditional_expect(g, empty, s1), 1.0);
  EXPECT_NEAR(conditional_expect(g, single, f), f(SpinConfiguration(13, 5)), 1e-15);
  const auto c = condition(g, ConfigSet{1, 4, 13});
  EXPECT_NEAR(c.probability(1) + c.probability(4) + c.probability(13), 1.0, 1e-12);
  EXPECT_NEAR(expect(c, f), conditional_expect(g, ConfigSet{1, 4, 13}, f), 1e-12);
}

TEST(Gibbs, TiltReweightsByCosh) {
  const auto g = random_table(6, 2);
  std::vector<double> y(g.size());
  for (std::size_t x = 0; x < y.size(); ++x) y[x] = 0.1 * static_cast<double>(x % 7) - 0.3;
  const auto t = tilt(g, y);
  double z = 0.0;
  for (std::size_t x = 0; x < y.size(); ++x) z += g.probabilities()[x] * std::cosh(y[x]);
  for (std::size_t x = 0; x < y.size(); ++x)
    ASSERT_NEAR(t.probabilities()[x], g.probabilities()[x] * std::cosh(y[x]) / z, 1e-12);
  const auto same = tilt(g, std::vector<double>(g.size(), 0.0));
  for (std::size_t x = 0; x < y.size(); ++x) ASSERT_NEAR(same.probabilities()[x], g.probabilities()[x], 1e-14);
  EXPECT_THROW((void)tilt(g, std::vector<double>(3, 0.0)), DomainError);
}

TEST(OverlapLaw, UniformMeasureIsBinomial) {
  const int n = 10;
  const auto law = overlap_law(build_gibbs(zero_disorder(MixtureSpec::sk(1.0), n)));
  for (int j = 0; j <= n; ++j) EXPECT_NEAR(law.mass(j), binomial(n, j) / 1024.0, 1e-12);
  EXPECT_NEAR(law.expect([](double q) { return q; }), 0.0, 1e-12);
  EXPECT_NEAR(law.expect([](double q) { return q * q; }), 1.0 / n, 1e-12);
}

TEST(OverlapLaw, TransformAndPairwiseRoutesAgree) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto g = random_table(9, seed, 0.2);
    OverlapLawOptions t, p;
    t.method = OverlapMethod::Transform;
    p.method = OverlapMethod::Pairwise;
    const auto a = overlap_law(g, t), b = overlap_law(g, p);
    for (int j = 0; j <= 9; ++j) ASSERT_NEAR(a.mass(j), b.mass(j), 1e-12);
    EXPECT_NEAR(a.total(), 1.0, 1e-12);
    const ConfigSet left{1, 5, 9, 200}, right{3, 4, 5, 511};
    const auto c = overlap_law(g, left, right, t), e = overlap_law(g, left, right, p);
    for (int j = 0; j <= 9; ++j) ASSERT_NEAR(c.mass(j), e.mass(j), 1e-12);
  }
}

TEST(OverlapLaw, SampledRouteIsConsistent) {
  const auto g = random_table(8, 5);
  OverlapLawOptions s;
  s.method = OverlapMethod::Sampled;
  s.sampled_pairs = 400000;
  s.seed = 3;
  const auto exact = overlap_law(g), est = overlap_law(g, s);
  for (int j = 0; j <= 8; ++j) {
    const double p = exact.mass(j);
    EXPECT_NEAR(est.mass(j), p, 5.0 * std::sqrt(p * (1 - p) / 400000.0) + 1e-12);
  }
}

TEST(OverlapLaw, PairCapBlocksPairwiseRoute) {
  OverlapLawOptions p;
  p.method = OverlapMethod::Pairwise;
  p.caps.pair_cap = 6;
  EXPECT_THROW((void)overlap_law(random_table(8, 1), p), CapError);
}

TEST(OverlapLaw, SingletonSets) {
  const auto g = random_table(6, 2);
  const auto cross = overlap_law(g, ConfigSet{5}, ConfigSet{9});
  const int dot = spin_dot(5, 9, 6);
  EXPECT_NEAR(cross.mass(static_cast<std::size_t>((dot + 6) / 2)), 1.0, 1e-12);
  EXPECT_NEAR(overlap_law(g, ConfigSet{5}, ConfigSet{5}).mass(6), 1.0, 1e-12);
}

TEST(SpinFieldJoint, MarginalizationIdentityOverRandomSets) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto d = sample_disorder(MixtureSpec({{2, 1.2}, {3, 0.4}}), 9, seed);
    const auto sys = build_cavity_system(d);
    const auto tilted = tilt(sys.measure, sys.field);
    CounterEngine rng(seed);
    ConfigSet set;
    for (ConfigIndex x = 0; x < sys.measure.size(); ++x)
      if (rng.uniform() < 0.3) set.push_back(x);
    const auto joint = spin_field_joint(sys.measure, sys.field, set);
    const double analytic =
        conditional_expect(tilted, set, [&](const SpinConfiguration& c) { return std::tanh(sys.field[c.index()]); });
    EXPECT_NEAR(joint.mean_spin(), analytic, 1e-12);
    EXPECT_NEAR(joint.expect([](int, double) { return 1.0; }), 1.0, 1e-12);
    const double ybar = conditional_expect(tilted, set, [&](const SpinConfiguration& c) { return sys.field[c.index()]; });
    EXPECT_NEAR(joint.mean_field(), ybar, 1e-10);
  }
}

TEST(SpinFieldJoint, EmptySetUsesConvention) {
  const auto sys = build_cavity_system(sample_disorder(MixtureSpec::sk(1.0), 5, 1));
  const auto joint = spin_field_joint(sys.measure, sys.field, ConfigSet{});
  EXPECT_TRUE(joint.used_convention());
  EXPECT_NEAR(joint.mean_spin(), std::tanh(sys.field[0]), 1e-12);
}

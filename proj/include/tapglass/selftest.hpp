#ifndef TAPGLASS_SELFTEST_HPP
#define TAPGLASS_SELFTEST_HPP

// Battery of small oracle checks run by `tapglass selftest`. Each check
// compares a library result with a closed form, a hand expansion or an
// independent computation. The whole battery runs in a few seconds.

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "tapglass/clusters.hpp"
#include "tapglass/covariance.hpp"
#include "tapglass/disorder.hpp"
#include "tapglass/gibbs.hpp"
#include "tapglass/harness.hpp"
#include "tapglass/mixture.hpp"
#include "tapglass/pd.hpp"
#include "tapglass/spin.hpp"
#include "tapglass/stats.hpp"
#include "tapglass/tap.hpp"

namespace tapglass {

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

class Battery {
 public:
  void check(const std::string& name, const std::function<std::string()>& body) {
    SelfTestResult r{name, false, ""};
    try {
      r.detail = body();
      r.passed = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = std::string("threw: ") + e.what();
    }
    results_.push_back(std::move(r));
  }

  void expect_throw(const std::string& name, const std::function<void()>& body) {
    check(name, [&]() -> std::string {
      try {
        body();
      } catch (const Error&) {
        return "";
      }
      return "no error raised";
    });
  }

  std::vector<SelfTestResult> take() { return std::move(results_); }

 private:
  std::vector<SelfTestResult> results_;
};

inline std::string near(double got, double want, double tol) {
  if (std::abs(got - want) <= tol) return "";
  return "got " + io::format_double(got) + ", expected " + io::format_double(want) + " +- " + io::format_double(tol);
}

inline std::string all(std::initializer_list<std::string> parts) {
  for (const auto& p : parts)
    if (!p.empty()) return p;
  return "";
}

inline std::string within_se(double est, double se, double want) {
  if (std::abs(est - want) <= 3.0 * se) return "";
  return "estimate " + io::format_double(est) + " not within 3 s.e. (" + io::format_double(se) + ") of " +
         io::format_double(want);
}

inline void mixture_checks(Battery& b) {
  const auto sk = MixtureSpec::sk(1.0);
  const MixtureSpec mixed({{2, 1.0}, {3, 0.2}});
  b.check("xi of SK at 0.5", [&] { return near(sk.xi(0.5), 0.25, 1e-15); });
  b.check("xi at 0", [&] { return all({near(sk.xi(0.0), 0.0, 0.0), near(mixed.xi(0.0), 0.0, 0.0)}); });
  b.check("xi of mixed model at 0.5", [&] { return near(mixed.xi(0.5), 0.275, 1e-15); });
  b.check("xi' of SK at 1", [&] { return near(sk.xi_prime(1.0), 2.0, 1e-15); });
  b.check("xi' of mixed model at 0.5", [&] { return near(mixed.xi_prime(0.5), 1.15, 1e-15); });
  b.check("xi' matches finite differences", [&] {
    const MixtureSpec m({{2, 0.7}, {3, 0.4}, {4, 0.3}});
    for (int i = 0; i <= 100; ++i) {
      const double t = -0.99 + 1.98 * i / 100.0;
      const double fd = (m.xi(t + 1e-5) - m.xi(t - 1e-5)) / 2e-5;
      if (auto e = near(m.xi_prime(t), fd, 1e-6); !e.empty()) return e;
    }
    return std::string();
  });
  b.expect_throw("xi outside [-1, 1]", [&] { (void)sk.xi(1.5); });
  b.check("overlap examples", [] {
    const auto a = SpinConfiguration::from_signs({1, -1, 1, 1, -1});
    return all({near(overlap(a, a).value(), 1.0, 0.0), near(overlap(a, a.negated()).value(), -1.0, 0.0),
                near(overlap(SpinConfiguration::from_signs({1, 1, 1, 1}), SpinConfiguration::from_signs({1, 1, -1, -1}))
                         .value(),
                     0.0, 0.0)});
  });
  b.expect_throw("overlap dimension mismatch", [] {
    (void)overlap(SpinConfiguration::all_up(3), SpinConfiguration::all_up(4));
  });
}

inline void disorder_checks(Battery& b) {
  const MixtureSpec mixed({{2, 1.0}, {3, 0.5}}, 0.2);
  b.check("disorder is reproducible", [&] {
    const auto a = sample_disorder(mixed, 7, 99), c = sample_disorder(mixed, 7, 99);
    for (std::size_t k = 0; k < a.tensors().size(); ++k)
      if (a.tensors()[k].entries != c.tensors()[k].entries) return std::string("tensors differ");
    return std::string();
  });
  b.check("zero disorder energy is h times magnetization", [] {
    const auto d = zero_disorder(MixtureSpec::sk(1.0, 0.3), 5);
    const auto s = SpinConfiguration::from_signs({1, -1, -1, 1, -1});
    return near(energy(d, s), 0.3 * -1.0, 1e-15);
  });
  b.check("N = 2 hand expansion", [] {
    const std::vector<double> g{0.3, -1.1, 0.7, 2.0};
    const auto d = disorder_from_entries(MixtureSpec::sk(1.0), 2, {{2, g}});
    const double want = (g[0] + g[1] + g[2] + g[3]) / std::sqrt(2.0);
    return near(energy(d, SpinConfiguration::all_up(2)), want, 1e-14);
  });
  b.check("pure odd degree flips sign under negation", [] {
    const auto d = sample_disorder(MixtureSpec({{3, 1.0}}), 6, 3);
    const auto s = SpinConfiguration::from_signs({1, -1, 1, 1, -1, -1});
    return near(energy(d, s.negated()), -energy(d, s), 1e-12);
  });
  b.check("energy_delta agrees with re-evaluation", [&] {
    const auto d = sample_disorder(mixed, 8, 5);
    for (ConfigIndex x = 0; x < 256; x += 37) {
      const SpinConfiguration s(x, 8);
      for (int i = 0; i < 8; ++i) {
        const double direct = energy(d, s.flipped(i)) - energy(d, s);
        if (auto e = near(energy_delta(d, s, i), direct, 1e-9 * std::max(1.0, std::abs(energy(d, s)))); !e.empty())
          return e;
        if (auto e = near(energy_delta(d, s, i) + energy_delta(d, s.flipped(i), i), 0.0, 1e-9); !e.empty()) return e;
      }
    }
    return std::string();
  });
  b.check("field-only energy delta", [] {
    const auto d = zero_disorder(MixtureSpec::sk(1.0, 0.4), 4);
    const auto s = SpinConfiguration::from_signs({1, -1, 1, 1});
    return all({near(energy_delta(d, s, 0), -0.8, 1e-15), near(energy_delta(d, s, 1), 0.8, 1e-15)});
  });
  b.check("cavity identity at N = 10", [] {
    for (int p : {2, 3}) {
      const auto d = sample_disorder(MixtureSpec({{p, 1.0}}), 10, 11 + p);
      const CavitySplit split(d);
      for (ConfigIndex x = 0; x < 1024; ++x) {
        const SpinConfiguration s(x, 10);
        const double h = d.disorder_energy(s);
        const auto r = s.rho();
        const double parts = split.tilde(r) + s.spin(0) * split.field(r) + split.remainder(s.spin(0), r);
        if (std::abs(h - parts) > 1e-10 * std::max(1.0, std::abs(h))) return "identity off at " + s.bitstring();
      }
    }
    return std::string();
  });
  b.check("remainder difference variance closed form", [] {
    const MixtureSpec m({{2, 0.5}, {3, 1.0}, {4, 0.25}});
    for (int n : {5, 9}) {
      const CavitySplit split(sample_disorder(m, n, 2));
      if (auto e = near(split.remainder_difference_variance(), remainder_difference_variance_formula(m, n), 1e-12);
          !e.empty())
        return e;
      if (auto e = near(split.remainder_variance(), remainder_variance_formula(m, n), 1e-12); !e.empty()) return e;
    }
    return std::string();
  });
  b.check("SK remainder does not depend on the first spin", [] {
    const CavitySplit split(sample_disorder(MixtureSpec::sk(1.0), 7, 4));
    for (ConfigIndex x = 0; x < 64; ++x) {
      const SpinConfiguration r(x, 6);
      if (split.remainder(1, r) != split.remainder(-1, r)) return std::string("r(1) != r(-1)");
    }
    return std::string();
  });
  b.check("disorder dump round trip", [&] {
    const auto d = sample_disorder(mixed, 5, 8);
    std::stringstream ss;
    write_disorder(ss, d);
    const auto back = read_disorder(ss);
    for (std::size_t k = 0; k < d.tensors().size(); ++k)
      if (d.tensors()[k].entries != back.tensors()[k].entries) return std::string("entries differ");
    return back.seed() == d.seed() && back.dimension() == 5 ? std::string() : std::string("header differs");
  });
  b.expect_throw("dimension above the sampler cap", [] { (void)sample_disorder(MixtureSpec::sk(1.0), 23, 1); });
  b.expect_throw("memory budget", [] {
    SamplerCaps caps;
    caps.memory_budget_bytes = 1000;
    (void)sample_disorder(MixtureSpec::sk(1.0), 20, 1, caps);
  });
  b.check("local field covariance on the diagonal", [] {
    const auto s = SpinConfiguration::from_signs({1, -1, 1, 1, -1, 1, 1});
    const auto rep = local_field_covariance_check(MixtureSpec::sk(1.0), 8, {{s, s}}, 4000, 77);
    const auto& row = rep.rows.front();
    return within_se(row.estimate, row.standard_error, 2.0 * 7.0 / 8.0);
  });
}

inline void gibbs_checks(Battery& b) {
  b.check("uniform measure partition function", [] {
    const auto g = build_gibbs(zero_disorder(MixtureSpec::sk(1.0), 9));
    return near(g.log_z(), 9 * std::numbers::ln2, 1e-12);
  });
  b.check("product measure under a field", [] {
    const auto g = build_gibbs(zero_disorder(MixtureSpec::sk(1.0, 0.3), 6));
    return all({near(expect(g, [](const SpinConfiguration& s) { return double(s.spin(0)); }), std::tanh(0.3), 1e-12),
                near(expect(g, [](const SpinConfiguration&) { return 1.0; }), 1.0, 1e-12)});
  });
  b.check("N = 2 weights by hand", [] {
    const std::vector<double> e{0.5, -0.2, 0.9, 1.3};
    const auto d = disorder_from_entries(MixtureSpec::sk(1.0), 2, {{2, e}});
    const auto g = build_gibbs(d);
    double z = 0.0;
    std::vector<double> w(4);
    for (ConfigIndex x = 0; x < 4; ++x) {
      const SpinConfiguration s(x, 2);
      const int a = s.spin(0), c = s.spin(1);
      w[x] = std::exp((e[0] * a * a + e[1] * a * c + e[2] * c * a + e[3] * c * c) / std::sqrt(2.0));
      z += w[x];
    }
    for (ConfigIndex x = 0; x < 4; ++x)
      if (auto m = near(g.probability(x), w[x] / z, 1e-12); !m.empty()) return m;
    return std::string();
  });
  b.check("conditional expectation conventions", [] {
    const auto g = build_gibbs(sample_disorder(MixtureSpec::sk(1.0), 5, 3));
    const auto f = [](const SpinConfiguration& s) { return double(s.spin(0) + 2 * s.spin(3)); };
    const auto all_set = full_set(5);
    const ConfigSet empty, single{13};
    return all({near(conditional_expect(g, all_set, f), expect(g, f), 1e-12),
                near(conditional_expect(g, empty, [](const SpinConfiguration& s) { return double(s.spin(0)); }), 1.0,
                     0.0),
                near(conditional_expect(g, single, f), f(SpinConfiguration(13, 5)), 1e-15)});
  });
  b.check("uniform overlap law is binomial", [] {
    const int n = 8;
    const auto law = overlap_law(build_gibbs(zero_disorder(MixtureSpec::sk(1.0), n)));
    for (int j = 0; j <= n; ++j)
      if (auto e = near(law.mass(j), binomial(n, j) / 256.0, 1e-12); !e.empty()) return e;
    return std::string();
  });
  b.check("overlap law routes agree", [] {
    const auto g = build_gibbs(sample_disorder(MixtureSpec({{2, 1.0}, {3, 0.3}}), 9, 21));
    OverlapLawOptions t, p;
    t.method = OverlapMethod::Transform;
    p.method = OverlapMethod::Pairwise;
    const auto a = overlap_law(g, t), c = overlap_law(g, p);
    for (int j = 0; j <= 9; ++j)
      if (auto e = near(a.mass(j), c.mass(j), 1e-12); !e.empty()) return e;
    return near(a.total(), 1.0, 1e-12);
  });
  b.check("singleton overlap laws", [] {
    const auto g = build_gibbs(sample_disorder(MixtureSpec::sk(1.0), 6, 2));
    const ConfigSet a{5}, c{9};
    const auto cross = overlap_law(g, a, c), self = overlap_law(g, a, a);
    const double q = overlap(SpinConfiguration(5, 6), SpinConfiguration(9, 6)).value();
    return all({near(cross.mass_at_least(q) - cross.mass_at_least(q + 0.1), 1.0, 1e-12),
                near(self.mass(6), 1.0, 1e-12)});
  });
  b.check("tilt by zero field is the identity", [] {
    const auto g = build_gibbs(sample_disorder(MixtureSpec::sk(1.0), 6, 2));
    const auto t = tilt(g, std::vector<double>(g.size(), 0.0));
    for (std::size_t x = 0; x < g.size(); ++x)
      if (auto e = near(t.probabilities()[x], g.probabilities()[x], 1e-12); !e.empty()) return e;
    return std::string();
  });
  b.check("spin-field joint identities", [] {
    const auto d = sample_disorder(MixtureSpec({{2, 1.2}, {3, 0.4}}), 8, 6);
    const auto sys = build_cavity_system(d);
    const ConfigSet s = build_clusters(sys.measure, 0.2, 4, 0.0).clusters.front();
    const auto joint = spin_field_joint(sys.measure, sys.field, s);
    const auto tilted = tilt(sys.measure, sys.field);
    const double tanh_mean =
        conditional_expect(tilted, s, [&](const SpinConfiguration& c) { return std::tanh(sys.field[c.index()]); });
    const auto zero = std::vector<double>(sys.field.size(), 0.0);
    return all({near(joint.mean_spin(), tanh_mean, 1e-12),
                near(joint.expect([](int, double) { return 1.0; }), 1.0, 1e-12),
                near(spin_field_joint(sys.measure, zero, s).mean_spin(), 0.0, 1e-15)});
  });
}

inline void cluster_checks(Battery& b) {
  b.check("q* of an isolated atom", [] {
    std::vector<double> m(11, 0.0);
    m[5] = 0.2, m[6] = 0.15, m[4] = 0.1, m[8] = 0.55;  // atom at q = 0.6
    const auto est = estimate_qstar(OverlapLaw(10, m), 0.1);
    return near(est.q_hat, 0.6, 1e-12);
  });
  b.check("q* of a two-atom law", [] {
    std::vector<double> m2(21, 0.0);
    m2[10] = 0.4;
    m2[17] = 0.6;
    const auto e2 = estimate_qstar(OverlapLaw(20, m2), 0.1);
    return all({near(e2.q_hat, 0.7, 1e-12), near(e2.lobe_mass, 0.6, 1e-12)});
  });
  b.expect_throw("no jump under zero disorder", [] {
    (void)estimate_qstar(overlap_law(build_gibbs(zero_disorder(MixtureSpec::sk(1.0), 16))), 0.1);
  });
  b.check("singleton clusters at zero disorder", [] {
    const int n = 6;
    const auto g = build_gibbs(zero_disorder(MixtureSpec::sk(1.0), n));
    const auto dec = build_clusters(g, 1.0 - 1.0 / n, 64, 0.0);
    for (std::size_t a = 0; a < dec.size(); ++a)
      if (dec.clusters[a].size() != 1 || std::abs(dec.masses[a] - 1.0 / 64) > 1e-15)
        return std::string("cluster is not a singleton of mass 2^-N");
    return dec.size() == 64 ? std::string() : std::string("wrong cluster count");
  });
  b.check("one ball covers the hypercube", [] {
    const auto g = build_gibbs(sample_disorder(MixtureSpec::sk(1.0), 7, 1));
    const auto dec = build_clusters(g, -1.0, 8, 0.0);
    const auto audit = audit_clusters(g, dec, 0.5, 0.1, 0.5);
    return all({dec.size() == 1 && dec.clusters[0].size() == 128 ? "" : "not a single cluster",
                near(dec.residual_mass, 0.0, 1e-15), near(audit.cross_high_total, 0.0, 0.0)});
  });
  b.check("singleton clusters have no low-overlap pairs", [] {
    const auto g = build_gibbs(sample_disorder(MixtureSpec::sk(1.0), 5, 1));
    const auto dec = build_clusters(g, 0.9, 32, 0.0);
    const auto audit = audit_clusters(g, dec, 0.5, 0.1, 0.5, 32);
    return near(audit.within_low_max, 0.0, 0.0);
  });
  b.check("planted two-well clusters", [] {
    const auto d = planted_two_well(MixtureSpec::sk(0.1), 12, 4, 2.0);
    const auto g = build_gibbs(d);
    const auto est = estimate_qstar(overlap_law(g), 0.1);
    const auto dec = build_clusters(g, est.q_hat - est.a_hat, 8, 0.01);
    const auto audit = audit_clusters(g, dec, est.q_hat, est.a_hat, est.q_hat);
    return all({dec.size() >= 2 ? "" : "fewer than two clusters", near(dec.masses[0], 0.5, 0.05),
                near(dec.masses[1], 0.5, 0.05), near(audit.cross_high_total, 0.0, 1e-3)});
  });
  b.check("lift of the whole hypercube", [] {
    const auto d = sample_disorder(MixtureSpec::sk(1.0), 6, 3);
    const auto sys = build_cavity_system(d);
    const auto lifted = lift_clusters(build_clusters(sys.measure, -1.0, 1, 0.0), build_gibbs(d));
    return all({lifted.set(0).size() == 64 ? "" : "lifted set is not Sigma_N", lifted.pi(1) == 1 ? "" : "pi(1) != 1",
                near(lifted.mass(0), 1.0, 1e-12)});
  });
  b.check("lift with zero field and remainder", [] {
    const auto d = zero_disorder(MixtureSpec::sk(1.0), 6);
    const auto g = build_gibbs(d);
    const auto base = build_clusters(build_cavity_system(d).measure, 0.5, 8, 0.0);
    const auto lifted = lift_clusters(base, g);
    for (std::size_t a = 0; a < base.size(); ++a)
      if (lifted.permutation[a] != a || std::abs(lifted.lifted_masses[a] - base.masses[a]) > 1e-12)
        return std::string("lift is not the identity");
    return std::string();
  });
  b.expect_throw("lift dimension mismatch", [] {
    const auto g = build_gibbs(zero_disorder(MixtureSpec::sk(1.0), 6));
    (void)lift_clusters(build_clusters(g, 0.5, 4, 0.0), g);
  });
  b.check("symmetric difference examples", [] {
    const auto g = build_gibbs(sample_disorder(MixtureSpec::sk(1.0), 5, 3));
    const auto all_set = full_set(5);
    const ConfigSet empty;
    return all({near(symmetric_difference_mass(g, all_set, all_set), 0.0, 0.0),
                near(symmetric_difference_mass(g, all_set, empty), 1.0, 1e-12)});
  });
  b.check("permutation tail of identity permutations", [] {
    LiftedDecomposition l;
    l.permutation = {0, 1, 2, 3};
    l.lifted_masses = {0.4, 0.3, 0.2, 0.1};
    const std::vector<LiftedDecomposition> reps(5, l);
    return all({near(permutation_tail(reps, 2, 3), 0.0, 0.0), near(permutation_tail(reps, 2, 1), 1.0, 0.0)});
  });
}

inline void tap_checks(Battery& b) {
  b.check("zero-disorder TAP residual", [] {
    const auto d = zero_disorder(MixtureSpec::sk(1.0), 8);
    const auto g = build_gibbs(d);
    const auto rep = tap_residuals(g, CavitySplit(d), build_clusters(g, -1.0, 1, 0.0), 0.0, d.spec(), 1);
    return all({near(rep.records[0].m1, 0.0, 1e-15), near(rep.records[0].ybar, 0.0, 0.0),
                near(rep.records[0].residual, 0.0, 1e-15)});
  });
  b.check("single cluster equals the global TAP form", [] {
    const auto d = sample_disorder(MixtureSpec::sk(0.04, 0.2), 9, 5);
    const auto g = build_gibbs(d);
    const auto field = CavitySplit(d).field_table();
    const auto rep = tap_residuals(g, field, build_clusters(g, -1.0, 1, 0.0), 0.0, d.spec(), 1);
    const double m = expect(g, [](const SpinConfiguration& s) { return double(s.spin(0)); });
    const double y = expect(g, [&](const SpinConfiguration& s) { return field[s.index() >> 1]; });
    return near(rep.records[0].residual, m - std::tanh(y + 0.2 - d.spec().xi_prime(1.0) * m), 1e-12);
  });
  b.check("limit law at h = 0", [] {
    const auto m = limit_law_moments({0.0, 1.3});
    return all({near(m.mean_s, 0.0, 1e-14), near(m.mean_y, 0.0, 1e-13)});
  });
  b.check("limit law at h = 1, sigma2 = 1", [] {
    const auto m = limit_law_moments({1.0, 1.0});
    return all({near(m.mean_s, std::tanh(1.0), 1e-10), near(m.mean_y, 1.0 + std::tanh(1.0), 1e-10)});
  });
  b.check("limit law TAP identity", [] {
    CounterEngine rng(5);
    for (int i = 0; i < 50; ++i) {
      const double h = 4.0 * rng.uniform() - 2.0, s2 = 0.1 + 2.9 * rng.uniform();
      const auto m = limit_law_moments({h, s2});
      if (auto e = near(m.mean_s - std::tanh(m.mean_y - s2 * m.mean_s), 0.0, 1e-8); !e.empty()) return e;
    }
    return std::string();
  });
  b.check("cavity TAP with zero field", [] {
    const auto d = sample_disorder(MixtureSpec::sk(1.0), 7, 2);
    const auto sys = build_cavity_system(d);
    const std::vector<double> zero(sys.field.size(), 0.0);
    const auto rep = cavity_tap_residuals(sys.measure, zero, build_clusters(sys.measure, -1.0, 1, 0.0), 0.3,
                                          d.spec(), 1);
    return all({near(rep.records[0].m1, 0.0, 1e-15), near(rep.records[0].residual, 0.0, 1e-15)});
  });
  b.check("cavity TAP marginalization identity", [] {
    const auto d = sample_disorder(MixtureSpec({{2, 1.5}, {3, 0.1}}), 10, 8);
    const auto sys = build_cavity_system(d);
    const auto base = build_clusters(sys.measure, 0.2, 8, 0.01);
    const auto rep = cavity_tap_residuals(sys.measure, sys.field, base, 0.6, d.spec(), base.size());
    for (const auto& r : rep.records)
      if (r.marginalization_gap > 1e-12) return "gap " + io::format_double(r.marginalization_gap);
    return std::string();
  });
  b.check("h_alpha draws", [] {
    const auto sk = MixtureSpec::sk(1.0);
    std::vector<double> xs;
    for (std::uint64_t s = 0; s < 20000; ++s) xs.push_back(sample_h_alpha(sk, 0.6, s));
    const double var = stats::variance(xs);
    const double se = var * std::sqrt(2.0 / (xs.size() - 1));
    return all({near(sample_h_alpha(sk, 0.0, 3), 0.0, 0.0), near(sample_h_alpha(sk, 0.6, 9), sample_h_alpha(sk, 0.6, 9), 0.0),
                within_se(var, se, sk.xi_prime(0.6))});
  });
}

inline void pd_checks(Battery& b) {
  b.check("PD weights are positive and ranked", [] {
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto p = sample_pd(0.5, 1 + s, s);
      for (std::size_t i = 0; i < p.size(); ++i)
        if (!(p.weight(i) > 0.0) || (i && p.weight(i) > p.weight(i - 1))) return std::string("not ranked");
    }
    return std::string();
  });
  b.check("PD second moment", [] {
    for (double theta : {0.3, 0.7}) {
      std::vector<double> s;
      for (std::uint64_t k = 0; k < 20000; ++k) s.push_back(sample_pd(theta, 200, k).sum_of_squares());
      if (auto e = within_se(stats::mean(s), stats::standard_error(s), 1.0 - theta); !e.empty()) return e;
    }
    return std::string();
  });
  b.check("PD near theta = 0 has a dominant atom", [] {
    std::vector<double> v;
    for (std::uint64_t k = 0; k < 2000; ++k) v.push_back(sample_pd(0.05, 50, k).weight(0));
    return stats::mean(v) > 0.9 ? std::string() : "mean v1 " + io::format_double(stats::mean(v));
  });
  b.expect_throw("PD theta outside (0, 1)", [] { (void)sample_pd(1.0, 10, 1); });
  b.expect_throw("PD fit needs 30 partitions", [] {
    (void)compare_to_pd(std::vector<MassPartition>(29, MassPartition({0.5, 0.5})), 0.5, 2);
  });
  b.check("uniform singleton partitions are rejected", [] {
    std::vector<MassPartition> uni(60, MassPartition(std::vector<double>(64, 1.0 / 64)));
    PdFitOptions opt;
    opt.pd_samples = 2000;
    return compare_to_pd(uni, 0.5, 3, opt).rejected ? std::string() : std::string("fit not rejected");
  });
}

inline void harness_checks(Battery& b) {
  b.check("zero-disorder smoke plan", [] {
    ExperimentPlan p;
    p.kind = ExperimentKind::TapTrend;
    p.instance = InstanceKind::Zero;
    p.ns = {6, 8};
    p.replicas = 3;
    p.thresholds.single_cluster = true;
    p.workers = 1;
    const auto res = run_experiment(p);
    for (const auto& r : res.records) {
      if (!r.ok) return "replica failed: " + r.reason;
      if (r.tap.size() != 1 || r.tap[0].residual != 0.0) return std::string("nonzero residual");
    }
    return std::string();
  });
}

}  // namespace detail

inline std::vector<SelfTestResult> run_selftest() {
  detail::Battery b;
  detail::mixture_checks(b);
  detail::disorder_checks(b);
  detail::gibbs_checks(b);
  detail::cluster_checks(b);
  detail::tap_checks(b);
  detail::pd_checks(b);
  detail::harness_checks(b);
  return b.take();
}

}  // namespace tapglass

#endif  // TAPGLASS_SELFTEST_HPP

#ifndef TAPGLASS_CLI_HPP
#define TAPGLASS_CLI_HPP

// Subcommands of the `tapglass` executable. `run_cli` parses arguments and
// returns the process exit status so that tests can drive it in-process.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tapglass/config.hpp"
#include "tapglass/harness.hpp"
#include "tapglass/io.hpp"
#include "tapglass/selftest.hpp"

namespace tapglass::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerdict = 1;
inline constexpr int kExitUsage = 2;

struct Options {
  std::string command;
  std::string config;
  std::string plan;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned workers = 0;
};

/// A loaded run configuration with the command-line overrides applied.
struct Context {
  RunConfig config;
  std::uint64_t hash = 0;
  unsigned workers = 1;
  std::string header;
};

namespace detail {

inline Context load_context(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required for '" + o.command + "'");
  Context ctx;
  ctx.config = load_run_config(o.config);
  if (o.seed) ctx.config.seed = *o.seed;
  if (!o.out.empty()) ctx.config.out_dir = o.out;
  io::ensure_writable_directory(ctx.config.out_dir);
  ctx.workers = o.workers ? o.workers : default_workers();
  ctx.hash = run_config_hash(ctx.config);
  ctx.header = io::provenance_line(ctx.hash, ctx.config.seed);
  return ctx;
}

inline DisorderRealization instance(const RunConfig& c) {
  switch (c.instance) {
    case InstanceKind::Planted: return planted_two_well(c.spec, c.n, c.seed, c.ferro, c.sampler_caps);
    case InstanceKind::Zero: return zero_disorder(c.spec, c.n);
    case InstanceKind::Random: break;
  }
  return sample_disorder(c.spec, c.n, c.seed, c.sampler_caps);
}

inline nlohmann::json provenance_json(const Context& ctx) {
  return {{"config_hash", io::hex64(ctx.hash)}, {"seed", ctx.config.seed}};
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline int cmd_sample(const Context& ctx, std::ostream& out) {
  const auto& c = ctx.config;
  const auto d = instance(c);
  std::ostringstream bin;
  write_disorder(bin, d);
  io::write_file(c.out_dir / "disorder.bin", bin.str());
  auto j = provenance_json(ctx);
  j["n"] = c.n;
  j["instance"] = to_string(c.instance);
  j["h"] = c.spec.h();
  j["memory_bytes"] = disorder_memory_estimate(c.spec, c.n);
  nlohmann::json degs = nlohmann::json::array();
  for (const auto& t : d.tensors()) {
    const double mean = stats::mean(t.entries);
    degs.push_back({{"p", t.degree},
                    {"c_p", c.spec.coefficient(t.degree)},
                    {"entries", t.entries.size()},
                    {"scale", t.scale},
                    {"entry_mean", mean},
                    {"entry_variance", t.entries.size() > 1 ? stats::variance(t.entries) : 0.0}});
  }
  j["degrees"] = degs;
  j["dump"] = "disorder.bin";
  io::write_file(c.out_dir / "disorder_summary.json", dump(j));
  out << "wrote " << (c.out_dir / "disorder.bin").string() << " and disorder_summary.json\n";
  return kExitOk;
}

inline int cmd_gibbs(const Context& ctx, std::ostream& out) {
  const auto& c = ctx.config;
  const auto d = instance(c);
  const auto g = build_gibbs(d, c.gibbs_caps, ctx.workers);
  OverlapLawOptions opt;
  opt.caps = c.gibbs_caps;
  const auto law = overlap_law(g, opt);
  io::CsvWriter csv;
  csv.comment(ctx.header);
  csv.row({"support", "mass"});
  for (std::size_t j = 0; j < law.size(); ++j) csv.record(law.support(j), law.mass(j));
  io::write_file(c.out_dir / "overlap_law.csv", csv.str());

  const double m1 = expect(g, [](const SpinConfiguration& s) { return double(s.spin(0)); });
  const double e = expect(g, [&](const SpinConfiguration& s) { return energy(d, s); });
  io::CsvWriter ex;
  ex.comment(ctx.header);
  ex.row({"name", "value", "stderr"});
  ex.record("log_z", g.log_z(), 0.0);
  ex.record("mean_s1", m1, 0.0);
  ex.record("mean_energy", e, 0.0);
  io::write_file(c.out_dir / "gibbs_expectations.csv", ex.str());
  out << "log_Z = " << io::format_double(g.log_z()) << "\n";
  return kExitOk;
}

inline tapglass::detail::Lobe decompose_instance(const GibbsTable& g, const RunConfig& c) {
  return tapglass::detail::decompose(g, c.thresholds, c.gibbs_caps);
}

inline nlohmann::json decomposition_json(const Context& ctx, const tapglass::detail::Lobe& lobe) {
  auto j = provenance_json(ctx);
  j["n"] = lobe.dec.dimension;
  j["q_hat"] = lobe.q_hat;
  j["a_hat"] = lobe.a_hat;
  j["lobe_mass"] = lobe.lobe_mass;
  j["q_cut"] = lobe.dec.q_cut;
  j["residual"] = lobe.dec.residual_mass;
  nlohmann::json clusters = nlohmann::json::array();
  for (std::size_t a = 0; a < lobe.dec.size(); ++a)
    clusters.push_back({{"alpha", a + 1},
                        {"center", SpinConfiguration(lobe.dec.centers[a], lobe.dec.dimension).bitstring()},
                        {"mass", lobe.dec.masses[a]},
                        {"size", lobe.dec.clusters[a].size()}});
  j["clusters"] = clusters;
  return j;
}

inline int cmd_clusters(const Context& ctx, std::ostream& out) {
  const auto& c = ctx.config;
  const auto d = instance(c);
  const auto g = build_gibbs(d, c.gibbs_caps, ctx.workers);
  const auto lobe = decompose_instance(g, c);
  const auto& th = c.thresholds;
  const auto audit = audit_clusters(g, lobe.dec, lobe.q_hat, lobe.a_hat, lobe.q_hat, th.audit_top_k,
                                    std::min<std::size_t>(th.audit_top_k, 6), c.gibbs_caps);
  io::write_file(c.out_dir / "decomposition.json", dump(decomposition_json(ctx, lobe)));

  io::CsvWriter csv;
  csv.comment(ctx.header);
  csv.row({"item", "value", "threshold"});
  csv.record("residual_mass", audit.residual_mass, th.mass_floor);
  csv.record("within_low_max", audit.within_low_max, th.mass_floor);
  csv.record("cross_high_total", audit.cross_high_total, th.mass_floor);
  csv.record("cross_high_max", audit.cross_high_max, th.mass_floor);
  csv.row({"concentration_first", io::format_double(audit.concentration_first), ""});
  for (const auto& r : audit.rows) {
    const std::string tag = "cluster_" + std::to_string(r.alpha) + "_";
    csv.row({tag + "mass", io::format_double(r.mass), ""});
    csv.row({tag + "within_low", io::format_double(r.within_low), io::format_double(th.mass_floor)});
    csv.row({tag + "concentration", io::format_double(r.concentration), ""});
  }
  io::write_file(c.out_dir / "cluster_audit.csv", csv.str());
  out << lobe.dec.size() << " clusters, q_hat = " << io::format_double(lobe.q_hat)
      << ", q_cut = " << io::format_double(lobe.dec.q_cut)
      << ", residual = " << io::format_double(lobe.dec.residual_mass) << "\n";
  return kExitOk;
}

inline void write_tap(const Context& ctx, const std::string& stem, const TapReport& rep,
                      const tapglass::detail::Lobe& lobe, std::ostream& out) {
  const auto& c = ctx.config;
  io::CsvWriter csv;
  csv.comment(ctx.header);
  csv.row({"N", "replica_seed", "alpha", "mass", "m1", "ybar", "correction", "residual"});
  for (const auto& t : rep.records) csv.record(c.n, c.seed, t.alpha, t.mass, t.m1, t.ybar, t.correction, t.residual);
  io::write_file(c.out_dir / (stem + ".csv"), csv.str());

  auto j = provenance_json(ctx);
  j["n"] = c.n;
  j["q_hat"] = rep.q_hat;
  j["a_hat"] = lobe.a_hat;
  j["clusters"] = lobe.dec.size();
  j["reported_clusters"] = rep.records.size();
  j["weighted_mean_abs"] = rep.weighted_mean_abs;
  j["max_abs"] = rep.max_abs;
  j["sensitivity_minus"] = rep.sensitivity_minus;
  j["sensitivity_plus"] = rep.sensitivity_plus;
  double gap = 0.0;
  for (const auto& t : rep.records) gap = std::max(gap, t.marginalization_gap);
  if (stem == "cavity_tap") j["max_marginalization_gap"] = gap;
  io::write_file(c.out_dir / (stem + "_summary.json"), dump(j));
  out << "weighted mean |residual| = " << io::format_double(rep.weighted_mean_abs) << " over " << rep.records.size()
      << " clusters (q_hat = " << io::format_double(rep.q_hat) << ")\n";
}

inline int cmd_tap(const Context& ctx, std::ostream& out) {
  const auto& c = ctx.config;
  const auto d = instance(c);
  const auto g = build_gibbs(d, c.gibbs_caps, ctx.workers);
  const auto lobe = decompose_instance(g, c);
  const auto field = CavitySplit(d).field_table(ctx.workers);
  const std::size_t k = std::min(c.thresholds.top_k, lobe.dec.size());
  write_tap(ctx, "tap", tap_residuals(g, field, lobe.dec, lobe.q_hat, c.spec, k), lobe, out);
  return kExitOk;
}

inline int cmd_cavity_tap(const Context& ctx, std::ostream& out) {
  const auto& c = ctx.config;
  const auto d = instance(c);
  const auto sys = build_cavity_system(d, c.gibbs_caps, ctx.workers);
  const auto lobe = decompose_instance(sys.measure, c);
  const std::size_t k = std::min(c.thresholds.top_k, lobe.dec.size());
  write_tap(ctx, "cavity_tap", cavity_tap_residuals(sys.measure, sys.field, lobe.dec, lobe.q_hat, c.spec, k), lobe,
            out);
  return kExitOk;
}

/// One partition per line; '#' lines and a non-numeric header are skipped.
inline std::vector<MassPartition> read_partitions(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<MassPartition> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> w;
    std::istringstream cells(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(cells, cell, ',')) {
      if (cell.empty()) continue;
      try {
        std::size_t used = 0;
        w.push_back(std::stod(cell, &used));
        if (used != cell.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (out.empty()) continue;
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": not a list of masses");
    }
    try {
      out.push_back(MassPartition::from_masses(w));
    } catch (const DomainError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline int cmd_pd_fit(const Context& ctx, std::ostream& out) {
  const auto& c = ctx.config;
  std::vector<MassPartition> parts;
  std::optional<double> theta = c.pd.theta;
  if (!c.pd.partitions.empty()) {
    parts = read_partitions(c.pd.partitions);
    if (!theta) throw ConfigError("pd.theta is required with pd.partitions");
  } else {
    ExperimentPlan plan;
    plan.kind = ExperimentKind::PdFit;
    plan.spec = c.spec;
    plan.instance = c.instance;
    plan.ferro = c.ferro;
    plan.ns = {c.n};
    plan.replicas = std::max<std::size_t>(c.pd.replicas, 30);
    plan.master_seed = c.seed;
    plan.thresholds = c.thresholds;
    plan.gibbs_caps = c.gibbs_caps;
    plan.sampler_caps = c.sampler_caps;
    plan.pd_samples = c.pd.samples;
    plan.workers = ctx.workers;
    const auto res = run_experiment(plan);
    std::vector<double> lobe;
    for (const auto& r : res.records)
      if (r.ok) {
        parts.emplace_back(r.weights);
        lobe.push_back(r.values.front());
      }
    if (!theta && !lobe.empty()) theta = 1.0 - stats::mean(lobe);
  }
  if (!theta || !(*theta > 0.0 && *theta < 1.0)) throw DomainError("estimated theta lies outside (0, 1)");
  PdFitOptions opt;
  opt.pd_samples = c.pd.samples;
  opt.seed = derive_seed(c.seed, streams::kPoisson);
  opt.workers = ctx.workers;
  const auto fit = compare_to_pd(parts, *theta, c.pd.k, opt);

  auto j = provenance_json(ctx);
  j["theta"] = fit.theta;
  j["k"] = fit.k;
  j["empirical_count"] = fit.empirical_count;
  j["pd_count"] = fit.pd_count;
  j["ks_stat"] = fit.ks_stat;
  j["ks_critical"] = fit.ks_critical;
  j["rejected"] = fit.rejected;
  j["sum_sq_emp"] = fit.sum_sq_emp;
  j["sum_sq_pd"] = fit.sum_sq_pd;
  j["mean_emp"] = fit.mean_emp;
  j["mean_pd"] = fit.mean_pd;
  nlohmann::json tail = nlohmann::json::array();
  for (const auto& r : fit.tail_mass_table)
    tail.push_back({{"rank", r.rank},
                    {"empirical_mean", r.empirical_mean},
                    {"pd_mean", r.pd_mean},
                    {"empirical_exceed", r.empirical_exceed},
                    {"pd_exceed", r.pd_exceed}});
  j["tail_mass_table"] = tail;
  nlohmann::json gap = nlohmann::json::array();
  for (const auto& r : fit.gap_table)
    gap.push_back({{"rank", r.rank},
                   {"eta", r.eta},
                   {"empirical_frequency", r.empirical_frequency},
                   {"pd_frequency", r.pd_frequency}});
  j["gap_table"] = gap;
  io::write_file(c.out_dir / "pd_fit.json", dump(j));
  out << "theta = " << io::format_double(fit.theta) << ", KS = " << io::format_double(fit.ks_stat)
      << " (critical " << io::format_double(fit.ks_critical) << "), " << (fit.rejected ? "rejected" : "not rejected")
      << "\n";
  return kExitOk;
}

inline int cmd_experiment(const Options& o, std::ostream& out) {
  const std::string path = o.plan.empty() ? o.config : o.plan;
  if (path.empty()) throw ConfigError("--plan is required for 'experiment'");
  auto plan = load_plan(path);
  if (o.seed) plan.master_seed = *o.seed;
  if (!o.out.empty()) plan.out_dir = o.out;
  if (plan.out_dir.empty()) plan.out_dir = "out";
  if (o.workers) plan.workers = o.workers;
  plan.validate();
  const auto res = run_experiment(plan);
  out << res.verdict_text;
  return res.report.passed() ? kExitOk : kExitVerdict;
}

inline int cmd_selftest(std::ostream& out) {
  const auto results = run_selftest();
  std::size_t failed = 0;
  for (const auto& r : results) {
    out << (r.passed ? "PASS  " : "FAIL  ") << r.name;
    if (!r.passed) out << "  " << r.detail;
    out << "\n";
    failed += r.passed ? 0 : 1;
  }
  out << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed ? kExitVerdict : kExitOk;
}

inline int dispatch(const Options& o, std::ostream& out) {
  if (o.command == "selftest") return cmd_selftest(out);
  if (o.command == "experiment") return cmd_experiment(o, out);
  const auto ctx = load_context(o);
  if (o.command == "sample") return cmd_sample(ctx, out);
  if (o.command == "gibbs") return cmd_gibbs(ctx, out);
  if (o.command == "clusters") return cmd_clusters(ctx, out);
  if (o.command == "tap") return cmd_tap(ctx, out);
  if (o.command == "cavity-tap") return cmd_cavity_tap(ctx, out);
  if (o.command == "pd-fit") return cmd_pd_fit(ctx, out);
  throw ConfigError("unknown subcommand '" + o.command + "'");
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Exact-enumeration cluster and TAP residual experiments on mixed p-spin models", "tapglass"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"sample", "sample a disorder realization and write a dump and summary"},
      {"gibbs", "enumerate the Gibbs measure; write log Z and the overlap law"},
      {"clusters", "decompose the Gibbs measure into clusters and audit them"},
      {"tap", "TAP residuals of the top clusters"},
      {"cavity-tap", "TAP residuals in cavity coordinates"},
      {"pd-fit", "compare cluster masses with Poisson-Dirichlet laws"},
      {"experiment", "run an experiment plan"},
      {"selftest", "run the built-in oracle checks"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "run configuration (TOML or JSON)");
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--workers", o.workers, "worker threads (0 = all cores)");
    sub->add_option("--plan", o.plan, "experiment plan (TOML or JSON)");
    sub->callback([&o, name = name] { o.command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  for (auto* sub : app.get_subcommands())
    if (sub->count("--seed")) o.seed = seed;
  try {
    return detail::dispatch(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CapError& e) {
    err << "cap error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitVerdict;
  }
}

}  // namespace tapglass::cli

#endif  // TAPGLASS_CLI_HPP

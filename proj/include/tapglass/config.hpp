#ifndef TAPGLASS_CONFIG_HPP
#define TAPGLASS_CONFIG_HPP

// Strict run configuration and experiment plans. TOML documents are turned
// into a JSON tree first, so both formats go through the same reader, which
// rejects unknown keys and mistyped values.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "tapglass/disorder.hpp"
#include "tapglass/error.hpp"
#include "tapglass/gibbs.hpp"
#include "tapglass/harness.hpp"
#include "tapglass/io.hpp"
#include "tapglass/mixture.hpp"

namespace tapglass {

struct PdSettings {
  std::optional<double> theta;
  std::size_t k = 3;
  std::size_t replicas = 50;
  std::size_t samples = 20000;
  /// CSV of empirical partitions, one per row; sampled from the model when empty.
  std::filesystem::path partitions;
};

struct RunConfig {
  MixtureSpec spec = MixtureSpec::sk(1.0);
  int n = 10;
  std::uint64_t seed = 1;
  InstanceKind instance = InstanceKind::Random;
  double ferro = 2.0;
  GibbsCaps gibbs_caps;
  SamplerCaps sampler_caps;
  Thresholds thresholds;
  std::filesystem::path out_dir = "out";
  PdSettings pd;
};

namespace config {

/// Parses TOML or JSON text into a JSON tree. `format` is "toml", "json" or
/// "auto" (JSON when the first non-blank character is '{').
inline nlohmann::json parse_document(const std::string& text, const std::string& format = "auto") {
  std::string fmt = format;
  if (fmt == "auto") {
    const auto pos = text.find_first_not_of(" \t\r\n");
    fmt = pos != std::string::npos && text[pos] == '{' ? "json" : "toml";
  }
  try {
    if (fmt == "json") return nlohmann::json::parse(text);
    const auto table = toml::parse(text);
    std::ostringstream ss;
    ss << toml::json_formatter{table};
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  } catch (const toml::parse_error& e) {
    std::ostringstream ss;
    ss << "malformed TOML: " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(ss.str());
  }
}

inline nlohmann::json load_document(const std::filesystem::path& path) {
  const auto text = io::read_file(path);
  const auto ext = path.extension().string();
  return parse_document(text, ext == ".json" ? "json" : ext == ".toml" ? "toml" : "auto");
}

/// Reads the keys of one table and reports the ones nobody asked for.
class Section {
 public:
  Section(const nlohmann::json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + " must be a table");
  }

  bool has(const std::string& key) { return seen(key), node_.contains(key); }

  const nlohmann::json& raw(const std::string& key) {
    seen(key);
    return node_.at(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
    return v.get<double>();
  }

  std::optional<double> optional_number(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return number(key, 0.0);
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_number_integer()) throw ConfigError(where(key) + " must be an integer");
    return v.get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
      throw ConfigError(where(key) + " must be a nonnegative integer");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    return static_cast<std::size_t>(unsigned_integer(key, fallback));
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + " must be a boolean");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_string()) throw ConfigError(where(key) + " must be a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_array()) throw ConfigError(where(key) + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(where(key) + " must be an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::vector<std::int64_t> integers(const std::string& key, std::vector<std::int64_t> fallback) {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_array()) throw ConfigError(where(key) + " must be an array of integers");
    std::vector<std::int64_t> out;
    for (const auto& x : v) {
      if (!x.is_number_integer()) throw ConfigError(where(key) + " must be an array of integers");
      out.push_back(x.get<std::int64_t>());
    }
    return out;
  }

  std::optional<Section> table(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return Section(node_.at(key), path_.empty() ? key : path_ + "." + key);
  }

  const nlohmann::json& raw_items() const { return node_; }
  void mark(const std::string& key) { seen(key); }

  /// Throws on the first key that was never read.
  void finish() const {
    for (const auto& [k, v] : node_.items())
      if (!used_.count(k)) throw ConfigError("unknown key '" + (path_.empty() ? k : path_ + "." + k) + "'");
  }

 private:
  void seen(const std::string& key) { used_.insert(key); }
  std::string where() const { return path_.empty() ? "configuration" : "'" + path_ + "'"; }
  std::string where(const std::string& key) const { return "'" + (path_.empty() ? key : path_ + "." + key) + "'"; }

  const nlohmann::json& node_;
  std::string path_;
  std::set<std::string> used_;
};

inline std::size_t positive_count(Section& s, const std::string& key, std::size_t fallback) {
  const auto v = s.count(key, fallback);
  if (v == 0) throw ConfigError("'" + key + "' must be positive");
  return v;
}

inline MixtureSpec read_model(Section& root) {
  auto model = root.table("model");
  if (!model) throw ConfigError("missing [model] table");
  std::map<int, double> coeffs;
  if (model->has("coefficients")) {
    auto c = model->table("coefficients");
    for (const auto& [k, v] : c->raw_items().items()) {
      int p = 0;
      try {
        std::size_t used = 0;
        p = std::stoi(k, &used);
        if (used != k.size()) throw std::invalid_argument(k);
      } catch (const std::exception&) {
        throw ConfigError("model coefficient key '" + k + "' is not a degree");
      }
      if (!v.is_number()) throw ConfigError("model coefficient for degree " + k + " must be a number");
      coeffs[p] = v.get<double>();
      c->mark(k);
    }
    c->finish();
  }
  if (model->has("terms")) {
    const auto& terms = model->raw("terms");
    if (!terms.is_array()) throw ConfigError("'model.terms' must be an array of tables");
    for (std::size_t i = 0; i < terms.size(); ++i) {
      Section t(terms[i], "model.terms[" + std::to_string(i) + "]");
      const auto p = t.integer("p", 0);
      if (!t.has("c_p")) throw ConfigError("'model.terms[" + std::to_string(i) + "]' needs c_p");
      if (coeffs.count(static_cast<int>(p))) throw ConfigError("degree " + std::to_string(p) + " given twice");
      coeffs[static_cast<int>(p)] = t.number("c_p", 0.0);
      t.finish();
    }
  }
  if (coeffs.empty()) throw ConfigError("model needs [model.coefficients] or [[model.terms]]");
  const double h = model->number("h", 0.0);
  const int max_degree = static_cast<int>(model->integer("max_degree", MixtureSpec::kDefaultMaxDegree));
  model->finish();
  try {
    return MixtureSpec(coeffs, h, max_degree);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid model: ") + e.what());
  }
}

inline void read_instance(Section& root, InstanceKind& kind, double& ferro) {
  if (auto s = root.table("instance")) {
    kind = parse_instance_kind(s->string("type", to_string(kind)));
    ferro = s->number("ferro", ferro);
    s->finish();
  }
}

inline void read_caps(Section& root, GibbsCaps& g, SamplerCaps& d) {
  if (auto s = root.table("caps")) {
    g.enumeration_cap = static_cast<int>(s->integer("enumeration_cap", g.enumeration_cap));
    g.pair_cap = static_cast<int>(s->integer("pair_cap", g.pair_cap));
    d.max_n = static_cast<int>(s->integer("max_n", d.max_n));
    d.memory_budget_bytes = static_cast<std::size_t>(s->unsigned_integer("memory_budget_bytes", d.memory_budget_bytes));
    s->finish();
  }
  if (g.enumeration_cap <= 0 || g.pair_cap <= 0 || d.max_n <= 0 || d.memory_budget_bytes == 0)
    throw ConfigError("all caps must be positive");
}

inline void read_thresholds(Section& root, Thresholds& t) {
  if (auto s = root.table("thresholds")) {
    t.jump_mass_floor = s->number("jump_mass_floor", t.jump_mass_floor);
    t.mass_floor = s->number("mass_floor", t.mass_floor);
    t.max_clusters = positive_count(*s, "max_clusters", t.max_clusters);
    t.top_k = positive_count(*s, "top_k", t.top_k);
    t.audit_top_k = positive_count(*s, "audit_top_k", t.audit_top_k);
    t.q_hat = s->optional_number("q_hat");
    t.single_cluster = s->boolean("single_cluster", t.single_cluster);
    t.pooled_qstar = s->boolean("pooled_qstar", t.pooled_qstar);
    s->finish();
  }
  if (!(t.jump_mass_floor >= 0.0 && t.jump_mass_floor <= 1.0)) throw ConfigError("jump_mass_floor must lie in [0, 1]");
  if (!(t.mass_floor >= 0.0 && t.mass_floor <= 1.0)) throw ConfigError("mass_floor must lie in [0, 1]");
  if (t.q_hat && !(*t.q_hat >= 0.0 && *t.q_hat <= 1.0)) throw ConfigError("q_hat must lie in [0, 1]");
}

inline void read_output(Section& root, std::filesystem::path& dir) {
  if (auto s = root.table("output")) {
    dir = s->string("dir", dir.string());
    s->finish();
  }
}

}  // namespace config

inline RunConfig parse_run_config(const nlohmann::json& doc) {
  config::Section root(doc, "");
  RunConfig c;
  c.spec = config::read_model(root);
  c.n = static_cast<int>(root.integer("n", c.n));
  c.seed = root.unsigned_integer("seed", c.seed);
  config::read_instance(root, c.instance, c.ferro);
  config::read_caps(root, c.gibbs_caps, c.sampler_caps);
  config::read_thresholds(root, c.thresholds);
  config::read_output(root, c.out_dir);
  if (auto s = root.table("pd")) {
    c.pd.theta = s->optional_number("theta");
    c.pd.k = config::positive_count(*s, "k", c.pd.k);
    c.pd.replicas = config::positive_count(*s, "replicas", c.pd.replicas);
    c.pd.samples = config::positive_count(*s, "samples", c.pd.samples);
    c.pd.partitions = s->string("partitions", "");
    s->finish();
  }
  root.finish();
  if (c.n < 2) throw ConfigError("n must be at least 2");
  if (c.pd.theta && !(*c.pd.theta > 0.0 && *c.pd.theta < 1.0)) throw ConfigError("pd theta must lie in (0, 1)");
  if (c.pd.k > 5) throw ConfigError("pd k must be at most 5");
  if (c.instance == InstanceKind::Planted && c.spec.coefficient(2) <= 0.0)
    throw ConfigError("planted instance needs a positive c2 coefficient");
  return c;
}

inline ExperimentPlan parse_plan(const nlohmann::json& doc) {
  config::Section root(doc, "");
  ExperimentPlan p;
  p.kind = parse_experiment_kind(root.string("kind", ""));
  p.spec = config::read_model(root);
  for (auto n : root.integers("ns", {})) p.ns.push_back(static_cast<int>(n));
  p.replicas = root.count("replicas", p.replicas);
  p.master_seed = root.unsigned_integer("seed", p.master_seed);
  p.workers = static_cast<unsigned>(root.unsigned_integer("workers", 0));
  config::read_instance(root, p.instance, p.ferro);
  config::read_caps(root, p.gibbs_caps, p.sampler_caps);
  config::read_thresholds(root, p.thresholds);
  if (auto s = root.table("output")) {
    p.out_dir = s->string("dir", "");
    s->finish();
  }
  if (auto s = root.table("experiment")) {
    p.tilting_sets = s->count("tilting_sets", p.tilting_sets);
    p.covariance_pairs = s->count("covariance_pairs", p.covariance_pairs);
    p.tail_levels = s->numbers("tail_levels", p.tail_levels);
    p.k_tilde_levels = s->numbers("k_tilde_levels", p.k_tilde_levels);
    std::vector<std::int64_t> ranks(p.permutation_ranks.begin(), p.permutation_ranks.end());
    ranks = s->integers("permutation_ranks", ranks);
    p.permutation_ranks.clear();
    for (auto r : ranks) {
      if (r < 1) throw ConfigError("permutation ranks are 1-based");
      p.permutation_ranks.push_back(static_cast<std::size_t>(r));
    }
    p.pd_theta = s->optional_number("pd_theta");
    p.pd_samples = s->count("pd_samples", p.pd_samples);
    s->finish();
  }
  root.finish();
  p.validate();
  return p;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(config::load_document(path));
}

inline ExperimentPlan load_plan(const std::filesystem::path& path) { return parse_plan(config::load_document(path)); }

/// Canonical JSON of a run configuration; its FNV-1a hash tags every output.
inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json coeffs = nlohmann::json::object();
  for (const auto& [deg, v] : c.spec.coefficients()) coeffs[std::to_string(deg)] = v;
  nlohmann::json j;
  j["model"] = {{"coefficients", coeffs}, {"h", c.spec.h()}, {"max_degree", c.spec.max_degree()}};
  j["n"] = c.n;
  j["seed"] = c.seed;
  j["instance"] = {{"type", to_string(c.instance)}, {"ferro", c.ferro}};
  j["caps"] = {{"enumeration_cap", c.gibbs_caps.enumeration_cap},
               {"pair_cap", c.gibbs_caps.pair_cap},
               {"max_n", c.sampler_caps.max_n},
               {"memory_budget_bytes", c.sampler_caps.memory_budget_bytes}};
  nlohmann::json th{{"jump_mass_floor", c.thresholds.jump_mass_floor},
                    {"mass_floor", c.thresholds.mass_floor},
                    {"max_clusters", c.thresholds.max_clusters},
                    {"top_k", c.thresholds.top_k},
                    {"audit_top_k", c.thresholds.audit_top_k},
                    {"single_cluster", c.thresholds.single_cluster},
                    {"pooled_qstar", c.thresholds.pooled_qstar}};
  if (c.thresholds.q_hat) th["q_hat"] = *c.thresholds.q_hat;
  j["thresholds"] = th;
  nlohmann::json pd{{"k", c.pd.k}, {"replicas", c.pd.replicas}, {"samples", c.pd.samples},
                    {"partitions", c.pd.partitions.string()}};
  if (c.pd.theta) pd["theta"] = *c.pd.theta;
  j["pd"] = pd;
  return j;
}

inline std::uint64_t run_config_hash(const RunConfig& c) { return io::fnv1a(run_config_to_json(c).dump()); }

}  // namespace tapglass

#endif  // TAPGLASS_CONFIG_HPP

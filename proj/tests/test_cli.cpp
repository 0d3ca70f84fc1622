#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "tapglass/cli.hpp"

using namespace tapglass;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "tapglass");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("tapglass_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

fs::path write_config(const std::string& name, const std::string& text) {
  const auto path = fs::temp_directory_path() / ("tapglass_cli_" + name);
  io::write_file(path, text);
  return path;
}

const std::string kSource = TAPGLASS_SOURCE_DIR;

}  // namespace

TEST(Cli, GibbsWithZeroDisorderPrintsNLog2) {
  const auto out = scratch("zero");
  const auto r = run({"gibbs", "--config", kSource + "/configs/zero_disorder.json", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("log_Z = " + io::format_double(8 * std::log(2.0)).substr(0, 10)), std::string::npos) << r.out;
  const auto csv = io::read_file(out / "overlap_law.csv");
  EXPECT_EQ(csv.rfind("# config_hash=", 0), 0u);
  EXPECT_NE(csv.find("support,mass\r\n"), std::string::npos);
  EXPECT_NE(io::read_file(out / "gibbs_expectations.csv").find("name,value,stderr"), std::string::npos);
}

TEST(Cli, EveryStageSubcommandWritesArtifacts) {
  const auto out = scratch("stages");
  const std::string cfg = kSource + "/configs/sk_n10.toml";
  for (const char* cmd : {"sample", "gibbs", "tap", "cavity-tap"}) {
    const auto r = run({cmd, "--config", cfg, "--out", out.string(), "--workers", "2"});
    EXPECT_EQ(r.code, 0) << cmd << ": " << r.err;
  }
  const auto planted = run({"clusters", "--config", kSource + "/configs/planted.toml", "--out", out.string()});
  EXPECT_EQ(planted.code, 0) << planted.err;
  for (const char* f : {"disorder.bin", "disorder_summary.json", "overlap_law.csv", "decomposition.json",
                        "cluster_audit.csv", "cavity_tap.csv", "cavity_tap_summary.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const auto dec = nlohmann::json::parse(io::read_file(out / "decomposition.json"));
  EXPECT_GE(dec["clusters"].size(), 2u);
  EXPECT_EQ(dec["clusters"][0]["center"].get<std::string>().size(), 12u);
  EXPECT_EQ(dec["seed"], 3u);
  const auto audit = io::read_file(out / "cluster_audit.csv");
  EXPECT_NE(audit.find("item,value,threshold"), std::string::npos);
  const auto tap = io::read_file(out / "cavity_tap.csv");
  EXPECT_NE(tap.find("N,replica_seed,alpha,mass,m1,ybar,correction,residual"), std::string::npos);
}

TEST(Cli, TapRunsOnPlantedInstance) {
  const auto out = scratch("tap_planted");
  const auto r = run({"tap", "--config", kSource + "/configs/planted.toml", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "tap.csv"));
  const auto s = nlohmann::json::parse(io::read_file(out / "tap_summary.json"));
  EXPECT_GT(s["reported_clusters"].get<int>(), 0);
}

TEST(Cli, IdenticalInvocationsAreByteIdentical) {
  const std::string cfg = kSource + "/configs/sk_n10.toml";
  const auto a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(run({"gibbs", "--config", cfg, "--out", a.string(), "--workers", "1"}).code, 0);
  ASSERT_EQ(run({"gibbs", "--config", cfg, "--out", b.string(), "--workers", "3"}).code, 0);
  EXPECT_EQ(io::read_file(a / "overlap_law.csv"), io::read_file(b / "overlap_law.csv"));
  ASSERT_EQ(run({"sample", "--config", cfg, "--out", a.string()}).code, 0);
  ASSERT_EQ(run({"sample", "--config", cfg, "--out", b.string()}).code, 0);
  EXPECT_EQ(io::read_file(a / "disorder.bin"), io::read_file(b / "disorder.bin"));
}

TEST(Cli, SeedOverrideChangesOutputAndHeader) {
  const std::string cfg = kSource + "/configs/sk_n10.toml";
  const auto a = scratch("seed_a"), b = scratch("seed_b");
  ASSERT_EQ(run({"gibbs", "--config", cfg, "--out", a.string()}).code, 0);
  ASSERT_EQ(run({"gibbs", "--config", cfg, "--out", b.string(), "--seed", "8"}).code, 0);
  const auto ca = io::read_file(a / "overlap_law.csv"), cb = io::read_file(b / "overlap_law.csv");
  EXPECT_NE(ca, cb);
  EXPECT_NE(cb.find("seed=8\r\n"), std::string::npos);
  EXPECT_NE(ca.find("seed=7\r\n"), std::string::npos);
}

TEST(Cli, PdFitWritesReport) {
  const auto out = scratch("pd");
  const auto cfg = write_config("pd.toml", R"(
n = 10
seed = 5
[model.coefficients]
2 = 0.1
[instance]
type = "planted"
[pd]
k = 2
replicas = 30
samples = 2000
)");
  const auto r = run({"pd-fit", "--config", cfg.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(io::read_file(out / "pd_fit.json"));
  for (const char* key : {"theta", "k", "ks_stat", "ks_critical", "sum_sq_emp", "sum_sq_pd", "tail_mass_table",
                          "gap_table", "config_hash", "seed"})
    EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Cli, PdFitFromPartitionFile) {
  const auto out = scratch("pd_file");
  std::string rows = "v1,v2,v3\n";
  for (int i = 0; i < 40; ++i) rows += "0.5,0.3,0.2\n";
  const auto parts = write_config("parts.csv", rows);
  const auto cfg = write_config("pd_file.toml", "[model.coefficients]\n2 = 1.0\n[pd]\ntheta = 0.5\nsamples = 1000\n"
                                                "partitions = \"" + parts.string() + "\"\n");
  const auto r = run({"pd-fit", "--config", cfg.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(nlohmann::json::parse(io::read_file(out / "pd_fit.json"))["rejected"].get<bool>());
}

TEST(Cli, ExperimentExitCodesReflectVerdicts) {
  const auto out = scratch("exp");
  const auto plan = write_config("plan.toml", R"(
kind = "cluster_audit"
ns = [8, 10]
replicas = 12
seed = 4
[model.coefficients]
2 = 0.1
[instance]
type = "planted"
)");
  const auto r = run({"experiment", "--plan", plan.string(), "--out", out.string(), "--workers", "2"});
  EXPECT_TRUE(r.code == 0 || r.code == 1) << r.err;
  EXPECT_NE(r.out.find("overall"), std::string::npos);
  const auto summary = nlohmann::json::parse(io::read_file(out / "cluster_audit_summary.json"));
  EXPECT_EQ(summary["passed"].get<bool>(), r.code == 0);
}

TEST(Cli, UsageAndConfigErrorsExitWithTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"gibbs"}).code, 2);
  EXPECT_EQ(run({"gibbs", "--config", "/nonexistent.toml"}).code, 2);
  EXPECT_EQ(run({"gibbs", "--config", kSource + "/configs/sk_n10.toml", "--bogus"}).code, 2);
  EXPECT_EQ(run({"gibbs", "--config", kSource + "/configs/sk_n10.toml", "--seed", "abc"}).code, 2);
  EXPECT_EQ(run({"experiment"}).code, 2);
  const auto bad = write_config("bad.toml", "n = 8\ntypo = 1\n[model.coefficients]\n2 = 1.0\n");
  const auto r = run({"gibbs", "--config", bad.string(), "--out", scratch("bad").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("unknown key 'typo'"), std::string::npos) << r.err;
  const auto big = write_config("big.toml", "n = 30\n[model.coefficients]\n2 = 1.0\n");
  EXPECT_EQ(run({"gibbs", "--config", big.string(), "--out", scratch("big").string()}).code, 2);
}

TEST(Cli, UnwritableOutputDirectoryIsRejected) {
  const auto file = write_config("not_a_dir", "x");
  EXPECT_EQ(run({"gibbs", "--config", kSource + "/configs/sk_n10.toml", "--out", (file / "sub").string()}).code, 2);
}

TEST(Cli, HelpExitsCleanly) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("selftest"), std::string::npos);
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "selftalk/cli.hpp"
#include "selftalk/report.hpp"

using namespace selftalk;
using namespace selftalk::cli;
namespace fs = std::filesystem;

namespace {

fs::path temp_root() {
  static fs::path root = [] {
    fs::path p = fs::path(testing::TempDir()) / "selftalk_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::string write_tiny_config(const std::string& name, uint64_t seed,
                              const std::string& out_dir) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["world"] = {{"image_count", 60},
                {"split_fractions", {0.6, 0.2, 0.2}},
                {"attribute_sizes", {3, 3, 3, 3, 3, 3, 3, 3, 3, 3}}};
  j["model"] = {{"embed_dim", 10}, {"hidden_dim", 12}};
  j["train"] = {{"sl_epochs", 1},
                {"batch_size", 12},
                {"curriculum_sweeps", 1},
                {"rl_episodes_per_stage", 4},
                {"rl_batch", 2},
                {"dropout_sl", 0.3}};
  j["eval"] = {{"split", "test"}, {"pool_size", 8}, {"candidate_k", 8}, {"beam_size", 2}};
  const fs::path path = temp_root() / name;
  std::ofstream(path, std::ios::binary) << j.dump(2);
  return path.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(std::vector<std::string> args) { return run_command(args); }

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({"unknown-subcommand"}), 1);
  EXPECT_EQ(run({}), 1);
}

TEST(Cli, MissingConfigIsCode2WithNoOutputs) {
  const std::string out = (temp_root() / "no_outputs").string();
  EXPECT_EQ(run({"generate", "--config", "/nonexistent/config.json", "--out", out}), 2);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run({"generate"}), 2);  // no --config at all
}

TEST(Cli, MalformedConfigIsCode2) {
  const fs::path bad = temp_root() / "bad.json";
  std::ofstream(bad, std::ios::binary) << "{ not json";
  EXPECT_EQ(run({"generate", "--config", bad.string()}), 2);
  const fs::path noversion = temp_root() / "noversion.json";
  std::ofstream(noversion, std::ios::binary) << "{}";
  EXPECT_EQ(run({"generate", "--config", noversion.string()}), 2);
}

TEST(Cli, MissingCorpusIsCode3) {
  const std::string cfg = write_tiny_config("orphan.json", 5, (temp_root() / "orphan").string());
  EXPECT_EQ(run({"pretrain", "--config", cfg}), 3);
}

TEST(Cli, FullPipelineAndManifestSelfVerifies) {
  const std::string out = (temp_root() / "pipe").string();
  const std::string cfg = write_tiny_config("pipe.json", 7, out);
  ASSERT_EQ(run({"generate", "--config", cfg}), 0);
  ASSERT_EQ(run({"pretrain", "--config", cfg}), 0);
  ASSERT_EQ(run({"finetune", "--config", cfg}), 0);
  ASSERT_EQ(run({"selftalk", "--config", cfg}), 0);
  ASSERT_EQ(run({"evaluate", "--config", cfg}), 0);

  // Manifest checksums match the files on disk.
  nlohmann::json manifest = nlohmann::json::parse(slurp(fs::path(out) / "manifest.json"));
  EXPECT_EQ(manifest.at("schema_version").get<int>(), 1);
  const auto& artifacts = manifest.at("artifacts");
  EXPECT_GE(artifacts.size(), 8u);
  for (const auto& [rel, sum] : artifacts.items()) {
    ASSERT_TRUE(fs::exists(fs::path(out) / rel)) << rel;
    EXPECT_EQ(sum.get<std::string>(), checksum_string(fnv64_file(fs::path(out) / rel))) << rel;
  }

  // Metrics report parses back and carries every Table-1/Table-2 field.
  auto rep = report::parse_metrics_report(slurp(fs::path(out) / "eval" / "metrics.json"),
                                          "metrics.json");
  EXPECT_EQ(rep.rounds, 10);
  EXPECT_GE(rep.retrieval.mean_rank, 1.0);
  EXPECT_EQ(rep.cosine_curve.size(), 10u);
  EXPECT_EQ(rep.percentile_curve.size(), 11u);

  // Round-trip: serialize -> parse -> serialize is identity.
  const std::string json1 = report::metrics_report_json(rep);
  const std::string json2 = report::metrics_report_json(
      report::parse_metrics_report(json1, "roundtrip"));
  EXPECT_EQ(json1, json2);

  // The cosine SVG carries exactly `rounds` data markers.
  const std::string svg = slurp(fs::path(out) / "eval" / "cosine_curve.svg");
  size_t markers = 0;
  for (size_t pos = svg.find("<circle"); pos != std::string::npos;
       pos = svg.find("<circle", pos + 1))
    ++markers;
  EXPECT_EQ(markers, 10u);
}

TEST(Cli, SelfTalkRunsAreByteIdentical) {
  const std::string out = (temp_root() / "pipe").string();  // reuses trained pipeline
  const std::string cfg = write_tiny_config("pipe.json", 7, out);
  ASSERT_TRUE(fs::exists(fs::path(out) / "rl" / "qbot.json"));
  const std::string first = slurp(fs::path(out) / "selftalk" / "transcripts.jsonl");
  ASSERT_EQ(run({"selftalk", "--config", cfg}), 0);
  EXPECT_EQ(slurp(fs::path(out) / "selftalk" / "transcripts.jsonl"), first);
}

TEST(Cli, SeedOverrideChangesArtifacts) {
  const std::string out_a = (temp_root() / "seed_a").string();
  const std::string out_b = (temp_root() / "seed_b").string();
  const std::string cfg = write_tiny_config("seed.json", 11, out_a);
  ASSERT_EQ(run({"generate", "--config", cfg}), 0);
  ASSERT_EQ(run({"generate", "--config", cfg, "--seed", "12", "--out", out_b}), 0);
  EXPECT_NE(slurp(fs::path(out_a) / "corpus" / "corpus.jsonl"),
            slurp(fs::path(out_b) / "corpus" / "corpus.jsonl"));
}

TEST(Cli, DiffReportCarriesRunIdsAndDeltas) {
  const std::string out = (temp_root() / "pipe").string();
  const std::string cfg = write_tiny_config("pipe.json", 7, out);
  const std::string metrics = (fs::path(out) / "eval" / "metrics.json").string();
  ASSERT_TRUE(fs::exists(metrics));
  ASSERT_EQ(run({"report", "--config", cfg, metrics, metrics}), 0);

  nlohmann::json j = nlohmann::json::parse(slurp(fs::path(out) / "report" / "report.json"));
  EXPECT_EQ(j.at("run_ids").size(), 2u);
  EXPECT_TRUE(j.at("metrics").contains("mutual_overlap_mean"));
  EXPECT_DOUBLE_EQ(j.at("metrics").at("mrr").at("delta").get<double>(), 0.0);
  const std::string csv = slurp(fs::path(out) / "report" / "report.csv");
  EXPECT_NE(csv.find(",delta"), std::string::npos);

  EXPECT_EQ(run({"report", "--config", cfg}), 1);  // no inputs: usage error
}

TEST(Cli, LockedRunDirectoryIsCode3) {
  const std::string out = (temp_root() / "locked").string();
  const std::string cfg = write_tiny_config("locked.json", 13, out);
  fs::create_directories(out);
  std::ofstream(fs::path(out) / ".lock", std::ios::binary) << "held\n";
  EXPECT_EQ(run({"generate", "--config", cfg}), 3);
  fs::remove(fs::path(out) / ".lock");
  EXPECT_EQ(run({"generate", "--config", cfg}), 0);
}

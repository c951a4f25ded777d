#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "advdet/cli/commands.hpp"
#include "test_util.hpp"

using namespace advdet;
using namespace advdet::cli;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Exit status of the CLI binary run with `args`; output goes to `log`.
int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(ADVDET_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new tu::TempDir;
    FactorDatasetSpec spec;
    spec.n_identities = 3;
    spec.n_methods = 2;
    spec.images_per_combo = 3;
    spec.frames_per_video = 3;
    spec.image_size = 16;
    std::ostringstream sink;
    manifest_ = cmd_prepare_synthetic(spec, dir_->path() / "data", sink).manifest_path;

    auto cfg = AdversarialConfig::toy_defaults();
    cfg.image_size = 16;
    cfg.feature_dim = 8;
    cfg.n_methods = 2;
    cfg.batch_size = 4;
    cfg.total_iters = 4;
    cfg.checks_per_epoch = 1;
    cfg.tau = 0.5;
    std::ofstream(dir_->path() / "cfg.json") << config_to_json(cfg).dump(2);

    TrainArgs t;
    t.manifest = manifest_;
    t.config = dir_->path() / "cfg.json";
    t.run_dir = run_dir();
    t.adv_forgery = "on";
    t.adv_identity = "sim";
    cmd_train(t, sink);
  }
  static void TearDownTestSuite() { delete dir_; }

  static std::filesystem::path run_dir() { return dir_->path() / "run"; }

  static inline tu::TempDir* dir_ = nullptr;
  static inline std::filesystem::path manifest_;
};

}  // namespace

TEST(CliParsing, FlagValues) {
  EXPECT_EQ(parse_adv_forgery("on"), ForgeryMode::kOn);
  EXPECT_EQ(parse_adv_identity("pseudo"), IdentityMode::kPseudoLabel);
  EXPECT_EQ(parse_adv_identity("off"), IdentityMode::kOff);
  EXPECT_THROW(parse_adv_identity("soft"), ConfigError);
  EXPECT_THROW(parse_probe_target("gender"), ConfigError);
  EXPECT_THROW(parse_algorithm("dbscan"), ConfigError);
  EXPECT_EQ(parse_band("0,1"), (std::pair<double, double>{0.0, 1.0}));
  EXPECT_THROW(parse_band("0.6"), ConfigError);
  EXPECT_THROW(parse_band("a,b"), ConfigError);
  EXPECT_EQ(parse_subset("heldout"), Subset::kHeldout);
  EXPECT_TRUE(in_subset(Split::kVal, Subset::kHeldout));
  EXPECT_FALSE(in_subset(Split::kTrain, Subset::kHeldout));
  EXPECT_THROW(parse_subset("dev"), ConfigError);
}

TEST(CliParsing, RunGuardedMapsExitCodes) {
  std::ostringstream err;
  EXPECT_EQ(run_guarded([] {}, err), 0);
  EXPECT_EQ(run_guarded([] { throw ConfigError("x"); }, err), 1);
  EXPECT_EQ(run_guarded([] { throw DataError("x"); }, err), 2);
  EXPECT_EQ(run_guarded([] { throw NumericalError("x"); }, err), 3);
  EXPECT_EQ(run_guarded([] { nlohmann::json::parse("{").dump(); }, err), 2);
  EXPECT_EQ(run_guarded([] { throw std::runtime_error("x"); }, err), 3);
  EXPECT_NE(err.str().find("error: "), std::string::npos);
}

TEST_F(CliTest, PrepareDefaultsAndDeterminism) {
  tu::TempDir a, b;
  std::ostringstream sink;
  FactorDatasetSpec spec;
  spec.seed = 7;
  const auto ra = cmd_prepare_synthetic(spec, a.path(), sink);
  cmd_prepare_synthetic(spec, b.path(), sink);
  EXPECT_EQ(load_manifest(ra.manifest_path).records.size(), 1600u);
  EXPECT_EQ(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
}

TEST_F(CliTest, TrainFlagsResolveOverConfig) {
  const Manifest m = load_manifest(manifest_);
  TrainArgs a;
  a.adv_identity = "sim";
  const auto d = resolve_train_config(a, m);
  EXPECT_DOUBLE_EQ(d.tau, 0.07);
  EXPECT_EQ(d.identity_mode, IdentityMode::kSimilarity);
  a.adv_identity = "hard";
  a.adv_forgery = "off";
  a.tau = 0.3;
  a.seed = 9;
  const auto h = resolve_train_config(a, m);
  EXPECT_EQ(h.n_identities, 3);
  EXPECT_EQ(h.forgery_mode, ForgeryMode::kOff);
  EXPECT_DOUBLE_EQ(h.tau, 0.3);
  EXPECT_EQ(h.seed, 9);
}

TEST_F(CliTest, RunDirectoryIsComplete) {
  for (const char* f : {"config.json", "metrics.jsonl", "validation.jsonl", "train_summary.json", "checkpoints/latest"}) {
    EXPECT_TRUE(std::filesystem::exists(run_dir() / f)) << f;
  }
}

TEST_F(CliTest, EvaluateIsRepeatable) {
  std::ostringstream sink;
  EvaluateArgs a;
  a.run_dir = run_dir();
  a.manifest = manifest_;
  const auto r1 = cmd_evaluate(a, sink);
  const auto first = slurp(run_dir() / "eval_test.json");
  const auto r2 = cmd_evaluate(a, sink);
  EXPECT_EQ(first, slurp(run_dir() / "eval_test.json"));
  EXPECT_EQ(r1.n_frames, 3 * 3 * 3);  // identities x (real + 2 methods) x frames, one TEST video each
  EXPECT_EQ(r1.n_videos, 9);
  EXPECT_EQ(r1.frame_auc, r2.frame_auc);
  const auto j = nlohmann::json::parse(first);
  for (const char* k : {"frame_auc", "frame_acc", "video_auc", "video_acc"}) EXPECT_TRUE(j[k].is_number()) << k;
}

TEST_F(CliTest, ExportIsRepeatableAndShaped) {
  std::ostringstream sink;
  ExportArgs a;
  a.run_dir = run_dir();
  a.manifest = manifest_;
  a.split = "val";
  EXPECT_EQ(cmd_export_features(a, sink), 27u);
  const auto first = slurp(run_dir() / "features_val.csv");
  cmd_export_features(a, sink);
  EXPECT_EQ(first, slurp(run_dir() / "features_val.csv"));
  std::istringstream in(first);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 4 + 8 - 1);
}

TEST_F(CliTest, ProbeTargetsAndSingleIdentity) {
  std::ostringstream sink;
  ProbeArgs a;
  a.run_dir = run_dir();
  a.manifest = manifest_;
  const auto method = cmd_probe_clustering(a, sink);
  EXPECT_EQ(method.k, 2);
  EXPECT_EQ(method.n_samples, 3 * 2 * 2 * 3);  // identities x methods x heldout videos x frames
  EXPECT_TRUE(std::filesystem::exists(run_dir() / "probe_method_kmeans_heldout.json"));

  // a manifest with one identity: the identity probe is trivially perfect
  const Manifest m = load_manifest(manifest_);
  std::vector<SampleRecord> one;
  for (auto r : m.records) {
    if (*r.identity_label != 0) continue;
    r.image_path = (m.base_dir / r.image_path).string();
    one.push_back(r);
  }
  tu::TempDir d;
  write_manifest(d / "one.jsonl", one);
  a.manifest = d / "one.jsonl";
  a.target = "identity";
  a.out = d / "probe.json";
  const auto id = cmd_probe_clustering(a, sink);
  EXPECT_EQ(id.k, 1);
  EXPECT_DOUBLE_EQ(id.accuracy, 1.0);
}

TEST_F(CliTest, CalibrateWritesReportAndCurve) {
  tu::TempDir d;
  std::ostringstream sink;
  CalibrateArgs a;
  a.manifest = manifest_;
  a.out = d / "tau.json";
  a.options.n_batches = 5;
  a.options.batch_size = 8;
  a.options.quantile_band = {0.0, 1.0};
  const auto rep = cmd_calibrate_tau(a, sink);
  EXPECT_EQ(rep.candidate_range.first, rep.cumulative_curve.front().first);
  EXPECT_EQ(rep.candidate_range.second, rep.cumulative_curve.back().first);
  EXPECT_TRUE(std::filesystem::exists(d / "tau_curve.csv"));
  const auto j = nlohmann::json::parse(slurp(d / "tau.json"));
  EXPECT_TRUE(j.contains("grid"));
}

TEST_F(CliTest, BinaryExitCodes) {
  tu::TempDir d;
  const auto log = d / "log.txt";
  EXPECT_EQ(run_cli("--version", log), 0);
  EXPECT_EQ(run_cli("", log), 1);
  EXPECT_EQ(run_cli("train --manifest " + manifest_.string() + " --run-dir " + (d / "r").string() +
                        " --adv-identity maybe",
                    log),
            1);
  EXPECT_EQ(run_cli("probe-clustering --run-dir " + run_dir().string() + " --manifest " + manifest_.string() +
                        " --target gender",
                    log),
            1);
  EXPECT_NE(slurp(log).find("gender"), std::string::npos);
  EXPECT_EQ(run_cli("evaluate --run-dir " + run_dir().string() + " --manifest " + (d / "none.jsonl").string(), log), 2);
  std::ofstream(d / "empty.jsonl") << "";
  EXPECT_EQ(run_cli("calibrate-tau --provider synthetic --manifest " + (d / "empty.jsonl").string() + " --out " +
                        (d / "t.json").string(),
                    log),
            2);
  EXPECT_EQ(run_cli("calibrate-tau --manifest " + manifest_.string() + " --quantile-band 0,1 --batches 3 "
                        "--batch-size 8 --out " + (d / "t.json").string(),
                    log),
            0);
  EXPECT_NE(slurp(log).find("grid"), std::string::npos);
  EXPECT_EQ(run_cli("evaluate --run-dir " + run_dir().string() + " --manifest " + manifest_.string() +
                        " --out " + (d / "e.json").string(),
                    log),
            0);
  EXPECT_EQ(run_cli("prepare-synthetic --out /proc/advdet_forbidden --identities 1", log), 3);
}

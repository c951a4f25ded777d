#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "advdet/eval/metrics.hpp"
#include "advdet/eval/probe.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace advdet;
using namespace advdet::eval;

TEST(Auc, Examples) {
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, y), 0.75);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y), 0.0);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y), 0.5);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), MetricError);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 2}), ContractViolation);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 2 + trial % 40;
    std::uniform_int_distribution<int> level(0, 5);  // coarse scores force ties
    std::vector<double> s(m);
    std::vector<int> y(m);
    for (int i = 0; i < m; ++i) {
      s[i] = level(rng) / 5.0;
      y[i] = i % 2;
    }
    std::shuffle(y.begin(), y.end(), rng);
    EXPECT_NEAR(roc_auc(s, y), tu::pairwise_auc(s, y), 1e-12);
  }
}

TEST(Accuracy, ThresholdIsInclusive) {
  const std::vector<double> s{0.5, 0.49, 0.9, 0.1};
  EXPECT_DOUBLE_EQ(accuracy_at(s, std::vector<int>{1, 0, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(accuracy_at(s, std::vector<int>{0, 0, 1, 0}), 0.75);
  EXPECT_THROW(accuracy_at(std::vector<double>{}, std::vector<int>{}), MetricError);
}

TEST(VideoScores, MeanOfFirstFramesUpToCap) {
  std::vector<FrameScore> f;
  for (int i = 0; i < 150; ++i) f.push_back({"a", i < 110 ? 0.2 : 1.0});
  f.push_back({"b", 0.6});
  f.push_back({"b", 0.8});
  const auto v = video_level_scores(f);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].video_id, "a");
  EXPECT_EQ(v[0].frames_used, 110);
  EXPECT_NEAR(v[0].score, 0.2, 1e-12);
  EXPECT_NEAR(v[1].score, 0.7, 1e-12);
  EXPECT_EQ(video_level_scores(f, 200)[0].frames_used, 150);
  EXPECT_THROW(video_level_scores(f, 0), ConfigError);
  EXPECT_THROW(video_level_scores(f, 110, {"a"}), DataError);
  EXPECT_THROW(video_level_scores(std::vector<FrameScore>{{"a", 1.5}}), ContractViolation);
}

TEST(EvaluateFrames, FrameAndVideoLevels) {
  std::vector<LabeledFrame> frames{
      {"r1", 0, 0.1}, {"r1", 0, 0.7},  // one misclassified real frame
      {"r2", 0, 0.2}, {"f1", 1, 0.9}, {"f1", 1, 0.8}, {"f2", 1, 0.6},
  };
  const auto rep = evaluate_frames(frames);
  EXPECT_EQ(rep.n_frames, 6);
  EXPECT_EQ(rep.n_videos, 4);
  EXPECT_NEAR(rep.frame_acc, 5.0 / 6.0, 1e-12);
  EXPECT_DOUBLE_EQ(rep.video_acc, 1.0);  // r1 averages to 0.4
  EXPECT_DOUBLE_EQ(rep.video_auc, 1.0);
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& f : frames) {
    s.push_back(f.score);
    y.push_back(f.label);
  }
  EXPECT_DOUBLE_EQ(rep.frame_auc, tu::pairwise_auc(s, y));
  EXPECT_THROW(evaluate_frames(std::vector<LabeledFrame>{}), DataError);
  const auto j = rep.to_json();
  EXPECT_TRUE(j.contains("video_auc"));
}

TEST(Probe, DenseLabels) {
  int n = 0;
  EXPECT_EQ(dense_labels(std::vector<int>{7, 3, 7, 9}, &n), (std::vector<int>{1, 0, 1, 2}));
  EXPECT_EQ(n, 3);
}

TEST(FeatureCsv, HeaderAndAbsentLabels) {
  tu::TempDir dir;
  FeatureBatch b;
  b.features = FeatureMatrix(2, 2);
  b.features << 0.5, -1, 0.25, 3;
  b.binary_labels = {BinaryLabel::kReal, BinaryLabel::kFake};
  b.method_labels = {std::nullopt, 2};
  b.identity_labels = {4, 5};
  b.sample_ids = {"a.ppm", "b.ppm"};
  write_feature_csv(dir / "f.csv", b);
  std::ifstream in(dir / "f.csv");
  std::string header, r1, r2;
  std::getline(in, header);
  std::getline(in, r1);
  std::getline(in, r2);
  EXPECT_EQ(header, "sample_id,binary_label,method_label,identity_label,f0,f1");
  EXPECT_EQ(r1, "a.ppm,REAL,,4,0.5,-1");
  EXPECT_EQ(r2, "b.ppm,FAKE,2,5,0.25,3");
}

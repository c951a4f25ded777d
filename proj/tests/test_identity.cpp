#include <gtest/gtest.h>

#include <fstream>

#include "advdet/identity/embedding.hpp"
#include "advdet/identity/supervision.hpp"
#include "mixture_oracle.hpp"
#include "test_util.hpp"

using namespace advdet;
using namespace advdet::identity;

namespace {

Embedding axis(int i, float scale = 1.0f) {
  Embedding e(kEmbeddingDim, 0.0f);
  e[static_cast<std::size_t>(i)] = scale;
  return e;
}

SampleRecord record(const std::string& id, int identity) {
  SampleRecord r;
  r.image_path = id;
  r.video_id = id;
  r.identity_label = identity;
  return r;
}

}  // namespace

TEST(Cosine, Examples) {
  const std::vector<float> a{1, 0}, b{0, 1}, c{1, 1}, d{2, 2}, z{0, 0};
  EXPECT_DOUBLE_EQ(cosine_similarity(a, a), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_NEAR(cosine_similarity(c, d), 1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(a, c), std::sqrt(0.5), 1e-7);
  EXPECT_THROW(cosine_similarity(a, z), EmbeddingError);
  EXPECT_THROW(cosine_similarity(a, std::vector<float>{1, 0, 0}), ContractViolation);
}

TEST(Supervision, ThresholdIsStrict) {
  EXPECT_EQ(threshold_label(0.5, 0.07), 1);
  EXPECT_EQ(threshold_label(0.0, 0.07), 0);
  EXPECT_EQ(threshold_label(0.07, 0.07), 0);
}

TEST(Supervision, CanonicalPairOrder) {
  std::vector<Embedding> e{axis(0), axis(1), axis(0, 2.0f), axis(2)};
  const auto s = similarity_supervision_from(e, 0.07);
  ASSERT_EQ(s.labels.size(), 6u);
  // (0,1) (0,2) (0,3) (1,2) (1,3) (2,3)
  EXPECT_EQ(s.labels, (std::vector<int>{0, 1, 0, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(s.similarities[1], 1.0);
  EXPECT_THROW(similarity_supervision_from(std::span<const Embedding>(e.data(), 1), 0.07), ContractViolation);
}

TEST(Supervision, MatchesDoubleLoopOracle) {
  SyntheticFactorOracle oracle(3, 0.8);
  std::vector<SampleRecord> batch;
  for (int i = 0; i < 20; ++i) batch.push_back(record("x" + std::to_string(i), i % 5));
  const auto s = build_similarity_supervision(batch, oracle, 0.3);
  std::size_t p = 0;
  for (std::size_t a = 0; a < batch.size(); ++a) {
    for (std::size_t b = a + 1; b < batch.size(); ++b, ++p) {
      const auto ea = oracle.embed(batch[a]), eb = oracle.embed(batch[b]);
      double dot = 0, na = 0, nb = 0;
      for (int d = 0; d < kEmbeddingDim; ++d) {
        dot += double(ea[d]) * eb[d];
        na += double(ea[d]) * ea[d];
        nb += double(eb[d]) * eb[d];
      }
      const double sim = dot / std::sqrt(na * nb);
      EXPECT_NEAR(s.similarities[p], sim, 1e-9);
      EXPECT_EQ(s.labels[p], sim > 0.3 ? 1 : 0);
    }
  }
  EXPECT_EQ(p, s.labels.size());
}

TEST(SyntheticOracle, SameIdentityIsCloserThanDifferent) {
  SyntheticFactorOracle oracle(0);
  const auto a = oracle.embed(record("a", 1)), b = oracle.embed(record("b", 1)), c = oracle.embed(record("c", 2));
  EXPECT_GT(cosine_similarity(a, b), 0.99);
  EXPECT_LT(std::abs(cosine_similarity(a, c)), 0.25);
  EXPECT_EQ(oracle.embed(record("a", 1)), a);
  SampleRecord unlabeled;
  unlabeled.image_path = "u";
  EXPECT_THROW(oracle.embed(unlabeled), EmbeddingError);
}

TEST(Cache, RoundTripAndReopen) {
  tu::TempDir dir;
  const auto path = dir / "emb.bin";
  {
    EmbeddingCache cache(path);
    cache.put(ProviderId::kSyntheticFactor, "a", axis(3));
    cache.put(ProviderId::kSyntheticFactor, "b", axis(4));
    cache.put(ProviderId::kSyntheticFactor, "a", axis(5));  // shadows the first entry
    EXPECT_EQ(cache.size(), 2u);
    EXPECT_EQ(*cache.get(ProviderId::kSyntheticFactor, "a"), axis(5));
    EXPECT_FALSE(cache.get(ProviderId::kArcfaceOnnxFile, "a"));
    EXPECT_THROW(cache.put(ProviderId::kSyntheticFactor, "c", std::vector<float>(3)), EmbeddingError);
  }
  EmbeddingCache reopened(path);
  EXPECT_EQ(reopened.size(), 2u);
  EXPECT_EQ(*reopened.get(ProviderId::kSyntheticFactor, "a"), axis(5));
  EXPECT_EQ(*reopened.get(ProviderId::kSyntheticFactor, "b"), axis(4));
}

TEST(Cache, StaleSidecarIsRebuiltByScan) {
  tu::TempDir dir;
  const auto path = dir / "emb.bin";
  {
    EmbeddingCache cache(path);
    cache.put(ProviderId::kSyntheticFactor, "a", axis(1));
  }
  std::ofstream(path.string() + ".idx", std::ios::trunc) << "999\tjunk\n";
  EmbeddingCache cache(path);
  EXPECT_EQ(cache.size(), 1u);
  EXPECT_EQ(*cache.get(ProviderId::kSyntheticFactor, "a"), axis(1));
}

TEST(Cache, CorruptFilesAreRejected) {
  tu::TempDir dir;
  std::ofstream(dir / "bad.bin") << "nope";
  EXPECT_THROW(EmbeddingCache(dir / "bad.bin"), IntegrityError);
  const auto path = dir / "emb.bin";
  {
    EmbeddingCache cache(path);
    cache.put(ProviderId::kSyntheticFactor, "a", axis(1));
  }
  std::filesystem::remove(path.string() + ".idx");
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 10);
  EXPECT_THROW(EmbeddingCache{path}, IntegrityError);
}

TEST(Oracles, CachedOracleFillsAndCacheOnlyServes) {
  tu::TempDir dir;
  const auto path = dir / "emb.bin";
  const auto r = record("img/0", 2);
  {
    auto cache = std::make_shared<EmbeddingCache>(path);
    CachedOracle o(std::make_shared<SyntheticFactorOracle>(1), cache);
    const auto e = o.embed(r);
    EXPECT_EQ(cache->size(), 1u);
    EXPECT_EQ(o.embed(r), e);
  }
  auto only = make_oracle({ProviderId::kCacheOnly, path, ProviderId::kSyntheticFactor, {}, 0});
  EXPECT_EQ(only->embed(r), SyntheticFactorOracle(1).embed(r));
  try {
    only->embed(record("img/missing", 0));
    FAIL();
  } catch (const EmbeddingError& e) {
    EXPECT_NE(std::string(e.what()).find("img/missing"), std::string::npos);
    EXPECT_EQ(e.exit_code(), ExitCode::kData);
  }
}

TEST(Oracles, UnavailableProvidersFailClearly) {
  tu::TempDir dir;
  EXPECT_THROW(make_oracle({ProviderId::kCacheOnly, dir / "none.bin", ProviderId::kSyntheticFactor, {}, 0}),
               EmbeddingError);
  EXPECT_THROW(make_oracle({ProviderId::kCacheOnly, {}, ProviderId::kSyntheticFactor, {}, 0}), ConfigError);
  ArcfaceRuntime::factory() = nullptr;
  EXPECT_THROW(make_oracle({ProviderId::kArcfaceOnnxFile, {}, ProviderId::kSyntheticFactor, "m.onnx", 0}),
               EmbeddingError);
  EXPECT_EQ(parse_provider("synthetic"), ProviderId::kSyntheticFactor);
  EXPECT_THROW(parse_provider("facenet"), ConfigError);
}

TEST(Calibration, QuantileAndGridHelpers) {
  const std::vector<double> s{0.1, 0.2, 0.3, 0.4};
  EXPECT_EQ(empirical_quantile(s, 0.0), 0.1);
  EXPECT_EQ(empirical_quantile(s, 0.5), 0.2);
  EXPECT_EQ(empirical_quantile(s, 0.51), 0.3);
  EXPECT_EQ(empirical_quantile(s, 1.0), 0.4);
  const auto grid = tau_grid(0.035, 0.091, 0.01);
  ASSERT_EQ(grid.size(), 6u);
  EXPECT_NEAR(grid.front(), 0.04, 1e-12);
  EXPECT_NEAR(grid.back(), 0.09, 1e-12);
  EXPECT_EQ(tau_grid(0.041, 0.049, 0.01), std::vector<double>{0.045});
}

TEST(Calibration, FullBandSpansObservedRange) {
  auto records = tu::mixture_records(80, 4);
  tu::MixtureOracle oracle(0);
  CalibrationOptions opt;
  opt.n_batches = 5;
  opt.batch_size = 16;
  opt.quantile_band = {0.0, 1.0};
  const auto rep = calibrate_tau(records, oracle, opt);
  EXPECT_EQ(rep.n_pairs, 5u * 120u);
  EXPECT_EQ(rep.candidate_range.first, rep.cumulative_curve.front().first);
  EXPECT_EQ(rep.candidate_range.second, rep.cumulative_curve.back().first);
  EXPECT_LT(rep.candidate_range.first, 0.2);
  EXPECT_GT(rep.candidate_range.second, 0.8);
  for (std::size_t i = 1; i < rep.cumulative_curve.size(); ++i) {
    EXPECT_GE(rep.cumulative_curve[i].first, rep.cumulative_curve[i - 1].first);
  }
}

TEST(Calibration, DefaultBandBracketsQuarterMixtureGap) {
  // A quarter of the pairs sit in the upper mode, so the 60% quantile lies in
  // the lower mode and the 85% quantile in the upper one.
  auto records = tu::mixture_records(400, 4);
  tu::MixtureOracle oracle(7);
  CalibrationOptions opt;
  opt.seed = 7;
  const auto rep = calibrate_tau(records, oracle, opt);
  EXPECT_TRUE(tu::brackets_gap(rep.candidate_range, records, oracle))
      << rep.candidate_range.first << " " << rep.candidate_range.second;
}

TEST(Calibration, OnlyTrainRecordsAreSampled) {
  auto records = tu::mixture_records(40, 2);
  for (std::size_t i = 10; i < records.size(); ++i) records[i].split = Split::kTest;
  tu::MixtureOracle oracle(0);
  CalibrationOptions opt;
  opt.batch_size = 16;
  EXPECT_THROW(calibrate_tau(records, oracle, opt), DataError);
  opt.batch_size = 10;
  opt.n_batches = 3;
  EXPECT_EQ(calibrate_tau(records, oracle, opt).n_pairs, 3u * 45u);
}

TEST(Calibration, DegenerateAndInvalidInputs) {
  std::vector<SampleRecord> same;
  for (int i = 0; i < 8; ++i) same.push_back(record("s", 0));  // identical images
  tu::MixtureOracle oracle(0);
  CalibrationOptions opt;
  opt.batch_size = 4;
  EXPECT_THROW(calibrate_tau(same, oracle, opt), CalibrationError);
  opt.quantile_band = {0.9, 0.1};
  EXPECT_THROW(calibrate_tau(same, oracle, opt), ConfigError);
}

TEST(PseudoLabels, RecoverWellSeparatedIdentities) {
  auto records = tu::mixture_records(30, 3);
  tu::MixtureOracle oracle(2);
  const auto labels = derive_pseudo_identity_labels(records, oracle, 3, 5);
  // each cluster is exactly one identity
  std::map<int, int> cluster_of;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int id = *records[i].identity_label;
    auto [it, fresh] = cluster_of.emplace(id, labels[i]);
    EXPECT_EQ(it->second, labels[i]);
  }
  EXPECT_EQ(std::set<int>(labels.begin(), labels.end()).size(), 3u);
  EXPECT_EQ(derive_pseudo_identity_labels(records, oracle, 3, 5), labels);
  EXPECT_EQ(derive_pseudo_identity_labels(records, oracle, 1, 5), std::vector<int>(30, 0));
}

TEST(PseudoLabels, TooFewDistinctEmbeddings) {
  std::vector<SampleRecord> same;
  for (int i = 0; i < 5; ++i) same.push_back(record("s", 0));
  tu::MixtureOracle oracle(0);
  EXPECT_THROW(derive_pseudo_identity_labels(same, oracle, 2, 0), ClusteringError);
  EXPECT_THROW(derive_pseudo_identity_labels(same, oracle, 0, 0), ConfigError);
}

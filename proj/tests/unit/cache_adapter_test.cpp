#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "cap2aug/cache_adapter.hpp"
#include "cap2aug/error.hpp"
#include "cap2aug/trainer.hpp"
#include "test_util.hpp"

using namespace cap2aug;
using cap2aug::testing::TempDir;

namespace {

FeatureMatrix unit_rows(std::mt19937_64& rng, std::size_t rows, std::size_t dim, std::uint32_t classes) {
  return l2_normalize(cap2aug::testing::random_features(rng, rows, dim, classes));
}

// Labels cycle 0..classes-1 so every class is present.
FeatureMatrix support_for(std::mt19937_64& rng, std::size_t rows, std::size_t dim, std::uint32_t classes) {
  FeatureMatrix m = unit_rows(rng, rows, dim, classes);
  for (std::size_t r = 0; r < rows; ++r) m.labels[r] = static_cast<std::uint32_t>(r % classes);
  return m;
}

FeatureMatrix text_for(std::mt19937_64& rng, std::size_t dim, std::uint32_t classes) {
  FeatureMatrix w = unit_rows(rng, classes, dim, classes);
  std::iota(w.labels.begin(), w.labels.end(), 0u);
  return w;
}

}  // namespace

TEST(CacheAdapter, InitStoresSupportAndDefaults) {
  std::mt19937_64 rng(1);
  const FeatureMatrix support = support_for(rng, 6, 4, 3);
  const CacheAdapter ad = init_from_support(support, text_for(rng, 4, 3), kDefaultBeta, kDefaultResidualRatio);
  EXPECT_EQ(ad.beta, 5.5);
  EXPECT_EQ(ad.a, 1.0);
  EXPECT_EQ(ad.key_count(), 6u);
  EXPECT_EQ(ad.class_count(), 3u);
  EXPECT_TRUE(ad.keys.isApprox(support.to_matrix()));
  // Column sums of the one-hot values are the per-class support counts.
  EXPECT_EQ(ad.values.colwise().sum(), Eigen::RowVectorXd::Constant(3, 2.0));
  EXPECT_EQ(ad.values.rowwise().sum(), Eigen::VectorXd::Ones(6));
}

TEST(CacheAdapter, InitValidation) {
  std::mt19937_64 rng(2);
  const FeatureMatrix support = support_for(rng, 4, 3, 2);
  const FeatureMatrix text = text_for(rng, 3, 2);
  EXPECT_THROW(init_from_support(support, text, 0.0, 1.0), Error);
  EXPECT_THROW(init_from_support(support, text, 5.5, -1.0), Error);
  EXPECT_THROW(init_from_support(FeatureMatrix(0, 3), text, 5.5, 1.0), Error);
  EXPECT_THROW(init_from_support(support, text_for(rng, 4, 2), 5.5, 1.0), Error);
  FeatureMatrix raw = support;
  raw.data[0] *= 3.0f;
  EXPECT_THROW(init_from_support(raw, text, 5.5, 1.0), Error);
  FeatureMatrix bad_label = support;
  bad_label.labels[0] = 2;
  EXPECT_THROW(init_from_support(bad_label, text, 5.5, 1.0), Error);
}

TEST(CacheAdapter, PhiExamples) {
  Eigen::MatrixXd x(1, 4);
  x << 1.0, 0.0, 1.3, -1.0;
  const Eigen::MatrixXd p = phi(x, 5.5);
  EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
  EXPECT_NEAR(p(0, 1), 0.004086771438464067, 1e-15);
  EXPECT_DOUBLE_EQ(p(0, 2), 1.0);  // clamped
  EXPECT_NEAR(p(0, 3), std::exp(-11.0), 1e-18);
  EXPECT_EQ(count_clamped(x), 1u);
}

TEST(CacheAdapter, PhiMonotoneInAffinity) {
  for (double beta : {0.5, 5.5, 50.0}) {
    double prev = 0.0;
    for (double v = -1.0; v <= 1.0; v += 0.01) {
      const double cur = phi(Eigen::MatrixXd::Constant(1, 1, v), beta)(0, 0);
      EXPECT_GT(cur, prev);
      prev = cur;
    }
  }
}

TEST(CacheAdapter, LogitsMatchBruteForce) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureMatrix support = support_for(rng, 8, 5, 4);
    CacheAdapter ad = init_from_support(support, text_for(rng, 5, 4), 3.0, 0.7);
    ad.keys += cap2aug::testing::random_matrix(rng, 8, 5, 0.05);
    const Eigen::MatrixXd f = unit_rows(rng, 3, 5, 4).to_matrix();
    const Eigen::MatrixXd cache = cache_logits(f, ad);
    const Eigen::MatrixXd full = full_logits(f, ad);
    for (int i = 0; i < 3; ++i) {
      for (std::size_t c = 0; c < 4; ++c) {
        double want = 0.0;
        for (std::size_t m = 0; m < 8; ++m) {
          if (support.labels[m] != c) continue;
          const double aff = std::min(1.0, f.row(i).dot(ad.keys.row(m)));
          want += std::exp(-3.0 * (1.0 - aff));
        }
        want *= 0.7;
        EXPECT_NEAR(cache(i, c), want, 1e-12);
        EXPECT_NEAR(full(i, c), want + f.row(i).dot(ad.text_weights.row(c)), 1e-12);
      }
    }
  }
}

TEST(CacheAdapter, ZeroResidualIsZeroShot) {
  std::mt19937_64 rng(4);
  const FeatureMatrix support = support_for(rng, 6, 4, 3);
  const CacheAdapter ad = init_from_support(support, text_for(rng, 4, 3), 5.5, 0.0);
  const Eigen::MatrixXd f = unit_rows(rng, 5, 4, 3).to_matrix();
  EXPECT_EQ(full_logits(f, ad), Eigen::MatrixXd(f * ad.text_weights.transpose()));
}

TEST(CacheAdapter, LargeBetaRecallsNearestKey) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureMatrix support = support_for(rng, 10, 6, 5);
    const CacheAdapter ad = init_from_support(support, text_for(rng, 6, 5), 100.0, 1.0);
    const auto pred = argmax_rows(cache_logits(support.to_matrix(), ad));
    for (std::size_t r = 0; r < support.rows; ++r) EXPECT_EQ(pred[r], support.labels[r]);
  }
}

TEST(CacheAdapter, ArgmaxTiesAndScaling) {
  Eigen::MatrixXd s(2, 3);
  s << 1.0, 3.0, 3.0, -2.0, -1.0, -5.0;
  EXPECT_EQ(argmax_rows(s), (std::vector<std::uint32_t>{1, 1}));
  EXPECT_EQ(argmax_rows(s * 4.0), argmax_rows(s));
}

TEST(CacheAdapter, KeyPermutationIsEquivariant) {
  std::mt19937_64 rng(6);
  const FeatureMatrix support = support_for(rng, 7, 4, 3);
  const FeatureMatrix text = text_for(rng, 4, 3);
  const CacheAdapter ad = init_from_support(support, text, 5.5, 1.0);
  std::vector<std::size_t> order(7);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const CacheAdapter perm = init_from_support(support.select_rows(order), text, 5.5, 1.0);
  const Eigen::MatrixXd f = unit_rows(rng, 4, 4, 3).to_matrix();
  EXPECT_TRUE(full_logits(f, ad).isApprox(full_logits(f, perm), 1e-12));
}

TEST(CacheAdapter, ZeroResidualGivesZeroKeyGradient) {
  std::mt19937_64 rng(7);
  const FeatureMatrix support = support_for(rng, 6, 4, 3);
  const CacheAdapter ad = init_from_support(support, text_for(rng, 4, 3), 5.5, 0.0);
  train::TrainConfig cfg;
  cfg.alpha = 0.0;
  const auto g = train::loss_and_grad(ad, support.to_matrix(), Eigen::MatrixXd(), support.to_matrix(), support.labels, cfg);
  EXPECT_EQ(g.d_keys.cwiseAbs().maxCoeff(), 0.0);
}

TEST(CacheAdapter, InitialSupportAccuracyAtLeastZeroShot) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto data = synth_cluster_dataset(cap2aug::testing::small_cluster_params(seed));
    const CacheAdapter ad = init_from_support(data.train_real, data.text_weights, 5.5, 1.0);
    const Eigen::MatrixXd f = data.train_real.to_matrix();
    const auto with_cache = argmax_rows(full_logits(f, ad));
    const auto zero_shot = argmax_rows(f * ad.text_weights.transpose());
    std::size_t hit_cache = 0, hit_zero = 0;
    for (std::size_t r = 0; r < data.train_real.rows; ++r) {
      hit_cache += with_cache[r] == data.train_real.labels[r];
      hit_zero += zero_shot[r] == data.train_real.labels[r];
    }
    EXPECT_GE(hit_cache, hit_zero) << "seed " << seed;
  }
}

TEST(Checkpoint, RoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(8);
  const FeatureMatrix support = support_for(rng, 6, 4, 3);
  const FeatureMatrix text = text_for(rng, 4, 3);
  CacheAdapter ad = init_from_support(support, text, 4.0, 2.0);
  ad.keys += cap2aug::testing::random_matrix(rng, 6, 4, 0.1);
  CheckpointMeta meta;
  meta.beta = 4.0;
  meta.a = 2.0;
  meta.class_count = 3;
  meta.manifest_hash = "abc";
  meta.classes = {0, 1, 2};
  save_checkpoint(ad, meta, dir / "adapter");
  EXPECT_TRUE(std::filesystem::exists(dir / "adapter.capf"));
  EXPECT_TRUE(std::filesystem::exists(dir / "adapter.json"));

  const LoadedCheckpoint back = load_checkpoint(dir / "adapter", text);
  EXPECT_EQ(back.meta.beta, 4.0);
  EXPECT_EQ(back.meta.a, 2.0);
  EXPECT_EQ(back.meta.manifest_hash, "abc");
  EXPECT_EQ(back.adapter.key_labels, ad.key_labels);
  EXPECT_EQ(back.adapter.key_origin, ad.key_origin);
  EXPECT_EQ(back.adapter.values, ad.values);
  // Keys are stored as float32.
  EXPECT_LT((back.adapter.keys - ad.keys).cwiseAbs().maxCoeff(), 1e-6);
}

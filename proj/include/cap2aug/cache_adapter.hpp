#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cap2aug/feature_store.hpp"

namespace cap2aug {

inline constexpr double kDefaultBeta = 5.5;
inline constexpr double kDefaultResidualRatio = 1.0;

// Key-value cache over support embeddings.
//
// Keys start as the normalized support rows and are the only trainable
// tensor. Values are one-hot rows of the support labels, text_weights is the
// zero-shot classifier; both stay fixed.
struct CacheAdapter {
  Eigen::MatrixXd keys;          // M x d
  Eigen::MatrixXd values;        // M x N, one-hot
  Eigen::MatrixXd text_weights;  // N x d, unit rows
  std::vector<std::uint32_t> key_labels;
  std::vector<Origin> key_origin;
  double beta = kDefaultBeta;
  double a = kDefaultResidualRatio;

  std::size_t class_count() const { return static_cast<std::size_t>(values.cols()); }
  std::size_t key_count() const { return static_cast<std::size_t>(keys.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(keys.cols()); }
};

CacheAdapter init_from_support(const FeatureMatrix& support, const FeatureMatrix& text_weights, double beta,
                               double a);

// Elementwise exp(-beta (1 - x)). Inputs above 1 are clamped to 1.
Eigen::MatrixXd phi(const Eigen::MatrixXd& x, double beta);
std::size_t count_clamped(const Eigen::MatrixXd& x);

// a * phi(f K^T) V
Eigen::MatrixXd cache_logits(const Eigen::MatrixXd& f, const CacheAdapter& adapter);
// cache_logits + f W^T
Eigen::MatrixXd full_logits(const Eigen::MatrixXd& f, const CacheAdapter& adapter);
// phi(f K^T) V, the representation the alignment loss compares.
Eigen::MatrixXd mmd_embedding(const Eigen::MatrixXd& f, const CacheAdapter& adapter);

// Row-wise argmax, ties to the lowest column.
std::vector<std::uint32_t> argmax_rows(const Eigen::MatrixXd& scores);

struct CheckpointMeta {
  double beta = kDefaultBeta;
  double a = kDefaultResidualRatio;
  std::size_t class_count = 0;
  std::string manifest_hash;
  std::vector<std::uint32_t> classes;  // manifest index per adapter class
};

// Keys go to `<stem>.capf` (labels and origin in the sidecars), scalars to
// `<stem>.json`.
void save_checkpoint(const CacheAdapter& adapter, const CheckpointMeta& meta, const std::filesystem::path& stem);
struct LoadedCheckpoint {
  CacheAdapter adapter;
  CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& stem, const FeatureMatrix& text_weights);

}  // namespace cap2aug

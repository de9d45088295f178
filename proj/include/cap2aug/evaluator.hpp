#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cap2aug/cache_adapter.hpp"
#include "cap2aug/feature_store.hpp"
#include "cap2aug/trainer.hpp"

namespace cap2aug::eval {

// Long-tail buckets by training-set count: few < 20, medium 20..100, many > 100.
inline constexpr std::size_t kFewShotBelow = 20;
inline constexpr std::size_t kManyShotAbove = 100;

struct GroupAccuracy {
  std::optional<double> many, medium, few;  // percent; absent when the group is empty
  std::size_t many_rows = 0, medium_rows = 0, few_rows = 0;
};

struct EvalReport {
  double overall_acc = 0.0;  // percent
  std::vector<double> per_class_acc;  // percent; 0 for classes without test rows
  std::vector<std::size_t> per_class_count;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<std::uint32_t> predictions;
  std::optional<GroupAccuracy> group_acc;
};

EvalReport evaluate(const CacheAdapter& adapter, const FeatureMatrix& test);

// Builds a report from labels and predictions directly.
EvalReport report_from_predictions(const std::vector<std::uint32_t>& truth, const std::vector<std::uint32_t>& predicted,
                                   std::size_t class_count);

GroupAccuracy group_accuracy(const std::vector<std::vector<std::size_t>>& confusion,
                             const std::vector<std::size_t>& class_train_counts);

std::string report_json(const EvalReport& report, const std::vector<std::string>& class_names);

// --- sweeps ---

struct CellStats {
  double mean = 0.0;
  double spread = 0.0;  // population standard deviation over seeds
  std::vector<double> per_seed;
  // Manifest train rows used as support per seed (real then synthetic).
  std::vector<std::vector<std::size_t>> support_rows;
};

struct SweepTable {
  std::string corner;  // name of the row variable
  std::vector<std::string> row_labels;
  std::vector<std::string> column_labels;
  std::vector<std::vector<CellStats>> cells;  // [row][column]
};

struct SweepOptions {
  std::size_t n_way = 0;  // 0 = every class in the manifest
  std::vector<std::uint64_t> seeds{0};
  train::TrainConfig config;
  std::size_t threads = 1;
};

// One train + evaluate per shot count; one row per shot.
SweepTable shot_sweep(const Dataset& data, const std::vector<std::size_t>& shots, const SweepOptions& options);
// Rows alpha, columns shots.
SweepTable alpha_ablation(const Dataset& data, const std::vector<double>& alphas, const std::vector<std::size_t>& shots,
                          const SweepOptions& options);
// Rows shots, columns synthetic rows per class. A count of 0 drops the
// synthetic set and forces alpha to 0.
SweepTable synth_count_ablation(const Dataset& data, const std::vector<std::size_t>& counts,
                                const std::vector<std::size_t>& shots, const SweepOptions& options);

std::string to_csv(const SweepTable& table);
std::string to_text(const SweepTable& table);

// mmd_embedding of `data` as a CAPF matrix, labels and origin carried over.
FeatureMatrix embed_features(const CacheAdapter& adapter, const FeatureMatrix& data);
FeatureMatrix export_embeddings(const CacheAdapter& adapter, const FeatureMatrix& data,
                                const std::filesystem::path& path);

std::string format_number(double v);

}  // namespace cap2aug::eval

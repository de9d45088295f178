#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cap2aug {

enum class Origin : std::uint8_t { real = 0, synthetic = 1 };

// Dense row-major embeddings with per-row label and origin sidecars.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;
  std::vector<std::uint32_t> labels;
  std::vector<Origin> origin;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t dim);

  float& at(std::size_t r, std::size_t c) { return data[r * dim + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * dim + c]; }

  // Widened copy for the 64-bit math path.
  Eigen::MatrixXd to_matrix() const;
  static FeatureMatrix from_matrix(const Eigen::MatrixXd& m);

  // Rows in the given order; labels and origin follow.
  FeatureMatrix select_rows(const std::vector<std::size_t>& indices) const;

  // Throws on length mismatch or a non-finite value (names the row).
  void validate() const;

  bool operator==(const FeatureMatrix&) const = default;
};

FeatureMatrix concat_rows(const FeatureMatrix& top, const FeatureMatrix& bottom);

inline constexpr std::uint32_t kFeatureFileVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

FeatureMatrix read_feature_file(const std::filesystem::path& path);
// Same as above, additionally requiring the stored dim to equal `expected_dim`.
FeatureMatrix read_feature_file(const std::filesystem::path& path, std::size_t expected_dim);
FeatureMatrix decode_feature_bytes(const std::vector<std::uint8_t>& bytes);

void write_feature_file(const FeatureMatrix& m, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_feature_bytes(const FeatureMatrix& m);

inline constexpr double kMinRowNorm = 1e-12;
inline constexpr double kUnitNormTolerance = 1e-4;

FeatureMatrix l2_normalize(const FeatureMatrix& m);
bool rows_unit_norm(const FeatureMatrix& m, double tolerance = kUnitNormTolerance);

struct SplitEntry {
  std::string file;
};

struct DatasetManifest {
  std::vector<std::string> classes;
  std::string text_classifier;
  std::map<std::string, std::vector<SplitEntry>> splits;
  int synthetic_per_class = 0;
  // Directory that relative file references resolve against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& file) const { return base_dir / file; }
};

inline constexpr const char* kTrainSplit = "train";
inline constexpr const char* kTestSplit = "test";

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Manifest plus its loaded, validated and L2-normalized feature files.
struct Dataset {
  DatasetManifest manifest;
  FeatureMatrix text_weights;
  FeatureMatrix train;
  FeatureMatrix test;

  std::size_t class_count() const { return manifest.classes.size(); }
  std::vector<std::size_t> shots_available() const;
  std::vector<std::size_t> synthetic_available() const;
};

Dataset load_dataset(const std::filesystem::path& manifest_path);
Dataset load_dataset(const DatasetManifest& manifest);

// One N-way K-shot task. Labels are episode-local (0..n_way-1); `classes`
// maps them back to manifest indices.
struct Episode {
  FeatureMatrix support_real;
  FeatureMatrix support_synthetic;
  FeatureMatrix query;
  FeatureMatrix text_weights;
  std::vector<std::uint32_t> classes;
  std::vector<std::size_t> support_real_rows;
  std::vector<std::size_t> support_synthetic_rows;
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::uint64_t seed = 0;

  bool operator==(const Episode&) const = default;
};

inline constexpr std::size_t kMinShots = 2;
inline constexpr std::size_t kAllSynthetic = static_cast<std::size_t>(-1);

// `k_synth` caps the synthetic rows taken per class; the kept rows are a
// seeded prefix so smaller counts are subsets of larger ones.
Episode sample_episode(const Dataset& data, std::size_t n_way, std::size_t k_shot,
                       std::uint64_t seed, std::size_t k_synth = kAllSynthetic);

struct SynthClusterParams {
  std::size_t n_way = 10;
  std::size_t k_shot = 16;
  std::size_t k_synth = 16;
  std::size_t n_test = 50;
  std::size_t dim = 64;
  // Expected norm of the per-row noise around a unit class mean. At 3 a row's
  // cosine to its own mean is about 1/sqrt(10), so the task is not saturated.
  double noise = 3.0;
  std::vector<double> domain_shift;  // empty means zero shift
  std::uint64_t seed = 0;
};

struct SynthClusterData {
  DatasetManifest manifest;
  FeatureMatrix train_real;
  FeatureMatrix train_synthetic;
  FeatureMatrix test;
  FeatureMatrix text_weights;
};

SynthClusterData synth_cluster_dataset(const SynthClusterParams& params);
// Writes the manifest and its feature files into `dir`; returns the manifest path.
std::filesystem::path write_synth_cluster_dataset(const SynthClusterData& data,
                                                  const std::filesystem::path& dir);
// A seeded unit vector of length `norm` in `dim` dimensions.
std::vector<double> random_shift(std::size_t dim, double norm, std::uint64_t seed);

std::uint64_t fnv1a_hash(const std::vector<std::uint8_t>& bytes);
std::string file_hash_hex(const std::filesystem::path& path);

}  // namespace cap2aug

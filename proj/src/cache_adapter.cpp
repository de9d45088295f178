#include "cap2aug/cache_adapter.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cap2aug/error.hpp"

namespace cap2aug {

namespace {

void check_query(const Eigen::MatrixXd& f, const CacheAdapter& adapter) {
  if (f.cols() != adapter.keys.cols()) {
    throw Error(ErrorKind::dimension_mismatch, "query dim " + std::to_string(f.cols()) + " vs key dim " +
                                                   std::to_string(adapter.keys.cols()));
  }
}

}  // namespace

CacheAdapter init_from_support(const FeatureMatrix& support, const FeatureMatrix& text_weights, double beta,
                               double a) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw Error(ErrorKind::invalid_argument, "beta must be positive");
  if (!(a >= 0.0) || !std::isfinite(a)) throw Error(ErrorKind::invalid_argument, "residual ratio must be >= 0");
  if (support.rows == 0) throw Error(ErrorKind::empty_input, "empty support set");
  if (support.dim != text_weights.dim) {
    throw Error(ErrorKind::dimension_mismatch, "support dim " + std::to_string(support.dim) +
                                                   " vs text classifier dim " + std::to_string(text_weights.dim));
  }
  if (!rows_unit_norm(support)) throw Error(ErrorKind::unnormalized_input, "support rows are not unit norm");
  if (!rows_unit_norm(text_weights)) throw Error(ErrorKind::unnormalized_input, "text classifier rows are not unit norm");

  const std::size_t classes = text_weights.rows;
  CacheAdapter adapter;
  adapter.keys = support.to_matrix();
  adapter.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(support.rows), static_cast<Eigen::Index>(classes));
  for (std::size_t r = 0; r < support.rows; ++r) {
    const auto label = support.labels[r];
    if (label >= classes) {
      throw Error(ErrorKind::label_out_of_range, "support row " + std::to_string(r) + " has label " +
                                                     std::to_string(label) + " with " + std::to_string(classes) +
                                                     " classes");
    }
    adapter.values(static_cast<Eigen::Index>(r), label) = 1.0;
  }
  adapter.text_weights = text_weights.to_matrix();
  adapter.key_labels = support.labels;
  adapter.key_origin = support.origin;
  adapter.beta = beta;
  adapter.a = a;
  return adapter;
}

Eigen::MatrixXd phi(const Eigen::MatrixXd& x, double beta) {
  return x.unaryExpr([beta](double v) { return std::exp(-beta * (1.0 - std::min(v, 1.0))); });
}

std::size_t count_clamped(const Eigen::MatrixXd& x) {
  return static_cast<std::size_t>((x.array() > 1.0).count());
}

Eigen::MatrixXd mmd_embedding(const Eigen::MatrixXd& f, const CacheAdapter& adapter) {
  check_query(f, adapter);
  return phi(f * adapter.keys.transpose(), adapter.beta) * adapter.values;
}

Eigen::MatrixXd cache_logits(const Eigen::MatrixXd& f, const CacheAdapter& adapter) {
  return adapter.a * mmd_embedding(f, adapter);
}

Eigen::MatrixXd full_logits(const Eigen::MatrixXd& f, const CacheAdapter& adapter) {
  return cache_logits(f, adapter) + f * adapter.text_weights.transpose();
}

std::vector<std::uint32_t> argmax_rows(const Eigen::MatrixXd& scores) {
  std::vector<std::uint32_t> out(static_cast<std::size_t>(scores.rows()), 0);
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(r, c) > scores(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(best);
  }
  return out;
}

void save_checkpoint(const CacheAdapter& adapter, const CheckpointMeta& meta, const std::filesystem::path& stem) {
  FeatureMatrix keys = FeatureMatrix::from_matrix(adapter.keys);
  keys.labels = adapter.key_labels;
  keys.origin = adapter.key_origin;
  auto capf = stem;
  capf += ".capf";
  write_feature_file(keys, capf);

  nlohmann::ordered_json j;
  j["beta"] = meta.beta;
  j["a"] = meta.a;
  j["class_count"] = meta.class_count;
  j["manifest_hash"] = meta.manifest_hash;
  j["classes"] = meta.classes;
  auto sidecar = stem;
  sidecar += ".json";
  std::ofstream out(sidecar, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io_failure, "cannot open " + sidecar.string() + " for writing");
  out << j.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& stem, const FeatureMatrix& text_weights) {
  auto sidecar = stem;
  sidecar += ".json";
  std::ifstream in(sidecar);
  if (!in) throw Error(ErrorKind::io_failure, "cannot open " + sidecar.string());
  LoadedCheckpoint cp;
  try {
    nlohmann::json j;
    in >> j;
    cp.meta.beta = j.at("beta").get<double>();
    cp.meta.a = j.at("a").get<double>();
    cp.meta.class_count = j.at("class_count").get<std::size_t>();
    cp.meta.manifest_hash = j.value("manifest_hash", std::string{});
    cp.meta.classes = j.value("classes", std::vector<std::uint32_t>{});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema_violation, sidecar.string() + ": " + e.what());
  }
  if (text_weights.rows != cp.meta.class_count) {
    throw Error(ErrorKind::dimension_mismatch, "checkpoint has " + std::to_string(cp.meta.class_count) +
                                                   " classes, text classifier has " + std::to_string(text_weights.rows));
  }
  auto capf = stem;
  capf += ".capf";
  const FeatureMatrix keys = read_feature_file(capf, text_weights.dim);
  // Trained keys need not be unit norm, so build the cache by hand.
  CacheAdapter& adapter = cp.adapter;
  adapter.keys = keys.to_matrix();
  adapter.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(keys.rows), static_cast<Eigen::Index>(text_weights.rows));
  for (std::size_t r = 0; r < keys.rows; ++r) {
    if (keys.labels[r] >= text_weights.rows) {
      throw Error(ErrorKind::label_out_of_range, "checkpoint key " + std::to_string(r) + " has label " +
                                                     std::to_string(keys.labels[r]));
    }
    adapter.values(static_cast<Eigen::Index>(r), keys.labels[r]) = 1.0;
  }
  adapter.text_weights = text_weights.to_matrix();
  adapter.key_labels = keys.labels;
  adapter.key_origin = keys.origin;
  adapter.beta = cp.meta.beta;
  adapter.a = cp.meta.a;
  return cp;
}

}  // namespace cap2aug

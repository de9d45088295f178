#include <cmath>
#include <random>

#include "cap2aug/error.hpp"
#include "cap2aug/feature_store.hpp"

namespace cap2aug {

namespace {

std::vector<double> gaussian_vector(std::size_t dim, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(dim);
  for (auto& x : v) x = normal(rng);
  return v;
}

void normalize_in_place(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  for (auto& x : v) x /= norm;
}

// Draws `count` rows around `center` (plus `offset`), each renormalized.
void draw_rows(FeatureMatrix& out, std::size_t& row, std::size_t count, const std::vector<double>& center,
               const std::vector<double>& offset, double noise, std::uint32_t label, Origin origin,
               std::mt19937_64& rng) {
  const std::size_t dim = center.size();
  const double per_coord = noise / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < count; ++i, ++row) {
    auto v = gaussian_vector(dim, per_coord, rng);
    for (std::size_t c = 0; c < dim; ++c) v[c] += center[c] + (offset.empty() ? 0.0 : offset[c]);
    normalize_in_place(v);
    for (std::size_t c = 0; c < dim; ++c) out.at(row, c) = static_cast<float>(v[c]);
    out.labels[row] = label;
    out.origin[row] = origin;
  }
}

}  // namespace

std::vector<double> random_shift(std::size_t dim, double norm, std::uint64_t seed) {
  if (dim == 0) throw Error(ErrorKind::invalid_argument, "dim must be positive");
  if (norm == 0.0) return std::vector<double>(dim, 0.0);
  std::mt19937_64 rng(seed ^ 0x5eed5eed5eed5eedull);
  auto v = gaussian_vector(dim, 1.0, rng);
  normalize_in_place(v);
  for (auto& x : v) x *= norm;
  return v;
}

SynthClusterData synth_cluster_dataset(const SynthClusterParams& p) {
  if (p.dim < 2) throw Error(ErrorKind::invalid_argument, "dim must be >= 2");
  if (p.n_way < 2) throw Error(ErrorKind::invalid_argument, "n_way must be >= 2");
  if (!(p.noise >= 0.0) || !std::isfinite(p.noise)) throw Error(ErrorKind::invalid_argument, "noise must be >= 0");
  if (!p.domain_shift.empty() && p.domain_shift.size() != p.dim) {
    throw Error(ErrorKind::dimension_mismatch, "domain_shift has " + std::to_string(p.domain_shift.size()) +
                                                   " entries, dim is " + std::to_string(p.dim));
  }

  std::mt19937_64 rng(p.seed);
  std::vector<std::vector<double>> means(p.n_way);
  for (auto& mu : means) {
    mu = gaussian_vector(p.dim, 1.0, rng);
    normalize_in_place(mu);
  }

  SynthClusterData out;
  out.train_real = FeatureMatrix(p.n_way * p.k_shot, p.dim);
  out.train_synthetic = FeatureMatrix(p.n_way * p.k_synth, p.dim);
  out.test = FeatureMatrix(p.n_way * p.n_test, p.dim);
  out.text_weights = FeatureMatrix(p.n_way, p.dim);

  std::size_t real_row = 0, synth_row = 0, test_row = 0;
  for (std::size_t c = 0; c < p.n_way; ++c) {
    const auto label = static_cast<std::uint32_t>(c);
    draw_rows(out.train_real, real_row, p.k_shot, means[c], {}, p.noise, label, Origin::real, rng);
    draw_rows(out.train_synthetic, synth_row, p.k_synth, means[c], p.domain_shift, p.noise, label,
              Origin::synthetic, rng);
    draw_rows(out.test, test_row, p.n_test, means[c], {}, p.noise, label, Origin::real, rng);
    for (std::size_t d = 0; d < p.dim; ++d) out.text_weights.at(c, d) = static_cast<float>(means[c][d]);
    out.text_weights.labels[c] = label;
  }

  auto& m = out.manifest;
  for (std::size_t c = 0; c < p.n_way; ++c) m.classes.push_back("class_" + std::to_string(c));
  m.text_classifier = "text_classifier.capf";
  m.splits[kTrainSplit] = {{"train_real.capf"}, {"train_synthetic.capf"}};
  m.splits[kTestSplit] = {{"test.capf"}};
  m.synthetic_per_class = static_cast<int>(p.k_synth);
  return out;
}

std::filesystem::path write_synth_cluster_dataset(const SynthClusterData& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io_failure, "cannot create " + dir.string() + ": " + ec.message());
  write_feature_file(data.text_weights, dir / data.manifest.text_classifier);
  write_feature_file(data.train_real, dir / "train_real.capf");
  write_feature_file(data.train_synthetic, dir / "train_synthetic.capf");
  write_feature_file(data.test, dir / "test.capf");
  const auto path = dir / "manifest.json";
  write_manifest(data.manifest, path);
  return path;
}

}  // namespace cap2aug

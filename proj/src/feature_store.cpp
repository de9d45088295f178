#include "cap2aug/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cap2aug/error.hpp"

namespace cap2aug {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::io_failure: return "io-failure";
    case ErrorKind::bad_magic: return "bad-magic";
    case ErrorKind::truncated_payload: return "truncated-payload";
    case ErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ErrorKind::non_finite_value: return "non-finite-value";
    case ErrorKind::label_out_of_range: return "label-out-of-range";
    case ErrorKind::zero_row: return "zero-row";
    case ErrorKind::unnormalized_input: return "unnormalized-input";
    case ErrorKind::insufficient_shots: return "insufficient-shots";
    case ErrorKind::empty_input: return "empty-input";
    case ErrorKind::empty_synthetic_with_positive_alpha: return "empty-synthetic-with-positive-alpha";
    case ErrorKind::schema_violation: return "schema-violation";
  }
  return "unknown";
}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t dim)
    : rows(rows), dim(dim), data(rows * dim, 0.0f), labels(rows, 0), origin(rows, Origin::real) {}

Eigen::MatrixXd FeatureMatrix::to_matrix() const {
  Eigen::MatrixXd m(rows, dim);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < dim; ++c) m(r, c) = static_cast<double>(at(r, c));
  return m;
}

FeatureMatrix FeatureMatrix::from_matrix(const Eigen::MatrixXd& m) {
  FeatureMatrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.dim; ++c) out.at(r, c) = static_cast<float>(m(r, c));
  return out;
}

FeatureMatrix FeatureMatrix::select_rows(const std::vector<std::size_t>& indices) const {
  FeatureMatrix out(indices.size(), dim);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= rows) throw Error(ErrorKind::invalid_argument, "row index " + std::to_string(src) + " out of range");
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(src * dim), dim,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
    out.labels[i] = labels[src];
    out.origin[i] = origin[src];
  }
  return out;
}

void FeatureMatrix::validate() const {
  if (data.size() != rows * dim || labels.size() != rows || origin.size() != rows) {
    throw Error(ErrorKind::dimension_mismatch, "array lengths disagree with rows=" + std::to_string(rows) +
                                                   " dim=" + std::to_string(dim));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw Error(ErrorKind::non_finite_value, "row " + std::to_string(i / dim) + " column " +
                                                   std::to_string(i % dim) + " is not finite");
    }
  }
}

FeatureMatrix concat_rows(const FeatureMatrix& top, const FeatureMatrix& bottom) {
  if (top.rows == 0) return bottom;
  if (bottom.rows == 0) return top;
  if (top.dim != bottom.dim) {
    throw Error(ErrorKind::dimension_mismatch,
                "cannot stack dim " + std::to_string(top.dim) + " onto dim " + std::to_string(bottom.dim));
  }
  FeatureMatrix out = top;
  out.rows += bottom.rows;
  out.data.insert(out.data.end(), bottom.data.begin(), bottom.data.end());
  out.labels.insert(out.labels.end(), bottom.labels.begin(), bottom.labels.end());
  out.origin.insert(out.origin.end(), bottom.origin.begin(), bottom.origin.end());
  return out;
}

// --- CAPF encoding ---------------------------------------------------------

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'A', 'P', 'F'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io_failure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> encode_feature_bytes(const FeatureMatrix& m) {
  m.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kFeatureHeaderBytes + m.rows * (m.dim * 4 + 5));
  for (std::uint8_t b : kMagic) out.push_back(b);
  put_u32(out, kFeatureFileVersion);
  put_u32(out, static_cast<std::uint32_t>(m.rows));
  put_u32(out, static_cast<std::uint32_t>(m.dim));
  for (float v : m.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  for (std::uint32_t label : m.labels) put_u32(out, label);
  for (Origin o : m.origin) out.push_back(static_cast<std::uint8_t>(o));
  return out;
}

FeatureMatrix decode_feature_bytes(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw Error(ErrorKind::bad_magic, "expected \"CAPF\" at byte offset 0");
  }
  if (bytes.size() < kFeatureHeaderBytes) {
    throw Error(ErrorKind::truncated_payload, "header ends at byte offset " + std::to_string(bytes.size()) +
                                                  ", need " + std::to_string(kFeatureHeaderBytes));
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFeatureFileVersion) {
    throw Error(ErrorKind::schema_violation, "unsupported version " + std::to_string(version) + " at byte offset 4");
  }
  const std::size_t rows = get_u32(bytes, 8);
  const std::size_t dim = get_u32(bytes, 12);
  const std::size_t payload = rows * dim * 4;
  const std::size_t expected = kFeatureHeaderBytes + payload + rows * 4 + rows;
  if (bytes.size() < kFeatureHeaderBytes + payload) {
    throw Error(ErrorKind::truncated_payload, "payload ends at byte offset " + std::to_string(bytes.size()) +
                                                  ", header implies " + std::to_string(kFeatureHeaderBytes + payload));
  }
  if (bytes.size() < expected) {
    throw Error(ErrorKind::truncated_payload, "label/origin sidecar ends at byte offset " +
                                                  std::to_string(bytes.size()) + ", header implies " +
                                                  std::to_string(expected));
  }
  if (bytes.size() > expected) {
    throw Error(ErrorKind::dimension_mismatch, "trailing data at byte offset " + std::to_string(expected) +
                                                   " (rows=" + std::to_string(rows) + " dim=" + std::to_string(dim) + ")");
  }

  FeatureMatrix m(rows, dim);
  std::size_t offset = kFeatureHeaderBytes;
  for (std::size_t i = 0; i < rows * dim; ++i, offset += 4) {
    const float v = std::bit_cast<float>(get_u32(bytes, offset));
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::non_finite_value,
                  "row " + std::to_string(i / dim) + " at byte offset " + std::to_string(offset));
    }
    m.data[i] = v;
  }
  for (std::size_t r = 0; r < rows; ++r, offset += 4) m.labels[r] = get_u32(bytes, offset);
  for (std::size_t r = 0; r < rows; ++r, ++offset) {
    const std::uint8_t o = bytes[offset];
    if (o > 1) {
      throw Error(ErrorKind::schema_violation,
                  "origin byte " + std::to_string(o) + " at byte offset " + std::to_string(offset));
    }
    m.origin[r] = static_cast<Origin>(o);
  }
  return m;
}

FeatureMatrix read_feature_file(const std::filesystem::path& path) {
  try {
    return decode_feature_bytes(read_all(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::io_failure) throw;
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

FeatureMatrix read_feature_file(const std::filesystem::path& path, std::size_t expected_dim) {
  FeatureMatrix m = read_feature_file(path);
  if (m.dim != expected_dim) {
    throw Error(ErrorKind::dimension_mismatch, path.string() + ": dim " + std::to_string(m.dim) +
                                                   " at byte offset 12, expected " + std::to_string(expected_dim));
  }
  return m;
}

void write_feature_file(const FeatureMatrix& m, const std::filesystem::path& path) {
  const auto bytes = encode_feature_bytes(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io_failure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io_failure, "short write to " + path.string());
}

// --- normalization ----------------------------------------------------------

FeatureMatrix l2_normalize(const FeatureMatrix& m) {
  FeatureMatrix out = m;
  for (std::size_t r = 0; r < m.rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < m.dim; ++c) sq += static_cast<double>(m.at(r, c)) * m.at(r, c);
    const double norm = std::sqrt(sq);
    if (norm < kMinRowNorm) {
      throw Error(ErrorKind::zero_row, "row " + std::to_string(r) + " has norm " + std::to_string(norm));
    }
    for (std::size_t c = 0; c < m.dim; ++c) out.at(r, c) = static_cast<float>(m.at(r, c) / norm);
  }
  return out;
}

bool rows_unit_norm(const FeatureMatrix& m, double tolerance) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < m.dim; ++c) sq += static_cast<double>(m.at(r, c)) * m.at(r, c);
    if (std::abs(std::sqrt(sq) - 1.0) > tolerance) return false;
  }
  return true;
}

// --- manifest ---------------------------------------------------------------

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_failure, "cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema_violation, path.string() + ": " + e.what());
  }

  DatasetManifest m;
  m.base_dir = path.parent_path();
  try {
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.text_classifier = j.at("text_classifier").get<std::string>();
    for (const auto& [name, entries] : j.at("splits").items()) {
      auto& split = m.splits[name];
      for (const auto& entry : entries) split.push_back({entry.at("file").get<std::string>()});
    }
    m.synthetic_per_class = j.value("synthetic_per_class", 0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema_violation, path.string() + ": " + e.what());
  }
  if (m.classes.empty()) throw Error(ErrorKind::schema_violation, path.string() + ": no classes");
  if (m.synthetic_per_class < 0) throw Error(ErrorKind::schema_violation, path.string() + ": negative synthetic_per_class");
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["classes"] = manifest.classes;
  j["text_classifier"] = manifest.text_classifier;
  nlohmann::ordered_json splits = nlohmann::ordered_json::object();
  for (const auto& [name, entries] : manifest.splits) {
    auto list = nlohmann::ordered_json::array();
    for (const auto& e : entries) list.push_back({{"file", e.file}});
    splits[name] = list;
  }
  j["splits"] = splits;
  j["synthetic_per_class"] = manifest.synthetic_per_class;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io_failure, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::io_failure, "short write to " + path.string());
}

// --- dataset ----------------------------------------------------------------

namespace {

void check_labels(const FeatureMatrix& m, std::size_t class_count, const std::string& where) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    if (m.labels[r] >= class_count) {
      throw Error(ErrorKind::label_out_of_range, where + ": row " + std::to_string(r) + " has label " +
                                                     std::to_string(m.labels[r]) + " but only " +
                                                     std::to_string(class_count) + " classes");
    }
  }
}

FeatureMatrix load_split(const DatasetManifest& manifest, const std::string& name, std::size_t dim) {
  FeatureMatrix out(0, dim);
  auto it = manifest.splits.find(name);
  if (it == manifest.splits.end()) return out;
  for (const auto& entry : it->second) {
    FeatureMatrix part = read_feature_file(manifest.resolve(entry.file), dim);
    check_labels(part, manifest.classes.size(), entry.file);
    out = concat_rows(out, part);
  }
  return out;
}

std::vector<std::size_t> count_by_class(const FeatureMatrix& m, std::size_t classes, Origin origin) {
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t r = 0; r < m.rows; ++r)
    if (m.origin[r] == origin) ++counts[m.labels[r]];
  return counts;
}

}  // namespace

std::vector<std::size_t> Dataset::shots_available() const {
  return count_by_class(train, class_count(), Origin::real);
}

std::vector<std::size_t> Dataset::synthetic_available() const {
  return count_by_class(train, class_count(), Origin::synthetic);
}

Dataset load_dataset(const DatasetManifest& manifest) {
  Dataset d;
  d.manifest = manifest;
  FeatureMatrix text = read_feature_file(manifest.resolve(manifest.text_classifier));
  if (text.rows != manifest.classes.size()) {
    throw Error(ErrorKind::dimension_mismatch, "text classifier has " + std::to_string(text.rows) + " rows, manifest declares " +
                                                   std::to_string(manifest.classes.size()) + " classes");
  }
  for (std::size_t r = 0; r < text.rows; ++r) {
    if (text.labels[r] != r) {
      throw Error(ErrorKind::schema_violation, "text classifier row " + std::to_string(r) + " has label " +
                                                   std::to_string(text.labels[r]));
    }
  }
  d.text_weights = l2_normalize(text);
  d.train = l2_normalize(load_split(manifest, kTrainSplit, text.dim));
  d.test = l2_normalize(load_split(manifest, kTestSplit, text.dim));
  if (d.train.rows == 0) throw Error(ErrorKind::empty_input, "manifest has no train rows");
  return d;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  return load_dataset(read_manifest(manifest_path));
}

// --- episodes ---------------------------------------------------------------

namespace {

enum class Stream : std::uint64_t { classes = 1, real = 2, synthetic = 3 };

std::mt19937_64 stream_rng(std::uint64_t seed, Stream stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

}  // namespace

Episode sample_episode(const Dataset& data, std::size_t n_way, std::size_t k_shot, std::uint64_t seed,
                       std::size_t k_synth) {
  const std::size_t class_count = data.class_count();
  if (k_shot < kMinShots) {
    throw Error(ErrorKind::invalid_argument,
                "k_shot=" + std::to_string(k_shot) + " but at least 2 shots are needed per class");
  }
  if (n_way == 0 || n_way > class_count) {
    throw Error(ErrorKind::invalid_argument,
                "n_way=" + std::to_string(n_way) + " with " + std::to_string(class_count) + " classes");
  }

  std::vector<std::uint32_t> classes(class_count);
  std::iota(classes.begin(), classes.end(), 0u);
  if (n_way < class_count) {
    auto rng = stream_rng(seed, Stream::classes, 0);
    std::shuffle(classes.begin(), classes.end(), rng);
    classes.resize(n_way);
    std::sort(classes.begin(), classes.end());
  }

  std::vector<std::vector<std::size_t>> real_rows(class_count), synth_rows(class_count);
  for (std::size_t r = 0; r < data.train.rows; ++r) {
    auto& bucket = data.train.origin[r] == Origin::real ? real_rows : synth_rows;
    bucket[data.train.labels[r]].push_back(r);
  }

  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  ep.seed = seed;
  ep.classes = classes;

  std::vector<std::uint32_t> local(class_count, UINT32_MAX);
  for (std::size_t i = 0; i < classes.size(); ++i) local[classes[i]] = static_cast<std::uint32_t>(i);

  for (std::uint32_t c : classes) {
    auto& reals = real_rows[c];
    if (reals.size() < k_shot) {
      throw Error(ErrorKind::insufficient_shots, "class '" + data.manifest.classes[c] + "' has " +
                                                     std::to_string(reals.size()) + " real rows, need " +
                                                     std::to_string(k_shot));
    }
    auto real_rng = stream_rng(seed, Stream::real, c);
    std::shuffle(reals.begin(), reals.end(), real_rng);
    ep.support_real_rows.insert(ep.support_real_rows.end(), reals.begin(),
                                reals.begin() + static_cast<std::ptrdiff_t>(k_shot));

    auto& synths = synth_rows[c];
    std::size_t take = synths.size();
    if (k_synth != kAllSynthetic) {
      if (k_synth > synths.size()) {
        throw Error(ErrorKind::insufficient_shots, "class '" + data.manifest.classes[c] + "' has " +
                                                       std::to_string(synths.size()) + " synthetic rows, need " +
                                                       std::to_string(k_synth));
      }
      take = k_synth;
    }
    auto synth_rng = stream_rng(seed, Stream::synthetic, c);
    std::shuffle(synths.begin(), synths.end(), synth_rng);
    ep.support_synthetic_rows.insert(ep.support_synthetic_rows.end(), synths.begin(),
                                     synths.begin() + static_cast<std::ptrdiff_t>(take));
  }

  auto relabel = [&](FeatureMatrix m) {
    for (auto& l : m.labels) l = local[l];
    return m;
  };
  ep.support_real = relabel(data.train.select_rows(ep.support_real_rows));
  ep.support_synthetic = relabel(data.train.select_rows(ep.support_synthetic_rows));

  std::vector<std::size_t> query_rows;
  for (std::size_t r = 0; r < data.test.rows; ++r)
    if (local[data.test.labels[r]] != UINT32_MAX) query_rows.push_back(r);
  ep.query = relabel(data.test.select_rows(query_rows));
  if (data.test.rows == 0) ep.query = FeatureMatrix(0, data.train.dim);

  std::vector<std::size_t> text_rows(classes.begin(), classes.end());
  ep.text_weights = relabel(data.text_weights.select_rows(text_rows));
  return ep;
}

// --- hashing ----------------------------------------------------------------

std::uint64_t fnv1a_hash(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string file_hash_hex(const std::filesystem::path& path) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << fnv1a_hash(read_all(path));
  return os.str();
}

}  // namespace cap2aug

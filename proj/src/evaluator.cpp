#include "cap2aug/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "cap2aug/error.hpp"

namespace cap2aug::eval {

EvalReport report_from_predictions(const std::vector<std::uint32_t>& truth, const std::vector<std::uint32_t>& predicted,
                                   std::size_t class_count) {
  if (truth.size() != predicted.size()) {
    throw Error(ErrorKind::dimension_mismatch, "label and prediction counts differ");
  }
  EvalReport r;
  r.confusion.assign(class_count, std::vector<std::size_t>(class_count, 0));
  r.per_class_count.assign(class_count, 0);
  r.per_class_acc.assign(class_count, 0.0);
  r.predictions = predicted;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= class_count || predicted[i] >= class_count) {
      throw Error(ErrorKind::label_out_of_range, "row " + std::to_string(i) + " label outside " +
                                                     std::to_string(class_count) + " classes");
    }
    ++r.confusion[truth[i]][predicted[i]];
    ++r.per_class_count[truth[i]];
    correct += truth[i] == predicted[i];
  }
  for (std::size_t c = 0; c < class_count; ++c) {
    if (r.per_class_count[c] > 0) {
      r.per_class_acc[c] = 100.0 * static_cast<double>(r.confusion[c][c]) / static_cast<double>(r.per_class_count[c]);
    }
  }
  r.overall_acc = truth.empty() ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(truth.size());
  return r;
}

EvalReport evaluate(const CacheAdapter& adapter, const FeatureMatrix& test) {
  if (test.dim != adapter.dim()) {
    throw Error(ErrorKind::dimension_mismatch, "test dim " + std::to_string(test.dim) + " vs adapter dim " +
                                                   std::to_string(adapter.dim()));
  }
  if (!rows_unit_norm(test)) throw Error(ErrorKind::unnormalized_input, "test rows are not unit norm");
  const auto predicted = argmax_rows(full_logits(test.to_matrix(), adapter));
  return report_from_predictions(test.labels, predicted, adapter.class_count());
}

GroupAccuracy group_accuracy(const std::vector<std::vector<std::size_t>>& confusion,
                             const std::vector<std::size_t>& class_train_counts) {
  if (confusion.size() != class_train_counts.size()) {
    throw Error(ErrorKind::dimension_mismatch, "confusion has " + std::to_string(confusion.size()) +
                                                   " classes, counts cover " +
                                                   std::to_string(class_train_counts.size()));
  }
  std::size_t hits[3] = {0, 0, 0}, rows[3] = {0, 0, 0};
  for (std::size_t c = 0; c < confusion.size(); ++c) {
    const std::size_t n = class_train_counts[c];
    const int group = n > kManyShotAbove ? 0 : (n >= kFewShotBelow ? 1 : 2);
    for (std::size_t v : confusion[c]) rows[group] += v;
    hits[group] += confusion[c][c];
  }
  auto pct = [&](int g) -> std::optional<double> {
    if (rows[g] == 0) return std::nullopt;
    return 100.0 * static_cast<double>(hits[g]) / static_cast<double>(rows[g]);
  };
  GroupAccuracy out;
  out.many = pct(0);
  out.medium = pct(1);
  out.few = pct(2);
  out.many_rows = rows[0];
  out.medium_rows = rows[1];
  out.few_rows = rows[2];
  return out;
}

std::string report_json(const EvalReport& report, const std::vector<std::string>& class_names) {
  nlohmann::ordered_json j;
  j["overall_acc"] = report.overall_acc;
  auto per_class = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < report.per_class_acc.size(); ++c) {
    per_class.push_back({{"class", c < class_names.size() ? class_names[c] : std::to_string(c)},
                         {"acc", report.per_class_acc[c]},
                         {"count", report.per_class_count[c]}});
  }
  j["per_class"] = per_class;
  j["confusion"] = report.confusion;
  if (report.group_acc) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
    j["group_acc"] = {{"many", opt(report.group_acc->many)},
                      {"medium", opt(report.group_acc->medium)},
                      {"few", opt(report.group_acc->few)}};
  }
  return j.dump(2) + "\n";
}

// --- sweeps ---

namespace {

struct CellJob {
  std::size_t row = 0, column = 0, seed_index = 0;
  std::size_t shots = 0;
  std::size_t synthetic = kAllSynthetic;
  double alpha = 0.0;
};

std::string shot_label(std::size_t k) { return std::to_string(k) + "-shot"; }

SweepTable run_jobs(SweepTable table, const std::vector<CellJob>& jobs, const Dataset& data,
                    const SweepOptions& options) {
  if (options.seeds.empty()) throw Error(ErrorKind::invalid_argument, "sweep needs at least one seed");
  options.config.validate();
  const std::size_t n_way = options.n_way == 0 ? data.class_count() : options.n_way;
  const std::size_t n_seeds = options.seeds.size();

  for (auto& row : table.cells) {
    for (auto& cell : row) {
      cell.per_seed.assign(n_seeds, 0.0);
      cell.support_rows.assign(n_seeds, {});
    }
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const CellJob& job = jobs[i];
      try {
        const std::uint64_t seed = options.seeds[job.seed_index];
        Episode ep = sample_episode(data, n_way, job.shots, seed, job.synthetic);
        train::TrainConfig config = options.config;
        config.alpha = job.alpha;
        config.seed = seed;
        const train::TrainRun run = train::train(ep, config);
        CellStats& cell = table.cells[job.row][job.column];
        cell.per_seed[job.seed_index] = evaluate(run.adapter, ep.query).overall_acc;
        auto& rows = cell.support_rows[job.seed_index];
        rows = ep.support_real_rows;
        rows.insert(rows.end(), ep.support_synthetic_rows.begin(), ep.support_synthetic_rows.end());
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(1, jobs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  for (auto& row : table.cells) {
    for (auto& cell : row) {
      double sum = 0.0;
      for (double v : cell.per_seed) sum += v;
      cell.mean = sum / static_cast<double>(n_seeds);
      double sq = 0.0;
      for (double v : cell.per_seed) sq += (v - cell.mean) * (v - cell.mean);
      cell.spread = std::sqrt(sq / static_cast<double>(n_seeds));
    }
  }
  return table;
}

SweepTable empty_table(std::string corner, std::vector<std::string> rows, std::vector<std::string> columns) {
  SweepTable t{std::move(corner), std::move(rows), std::move(columns), {}};
  t.cells.assign(t.row_labels.size(), std::vector<CellStats>(t.column_labels.size()));
  return t;
}

void require_nonempty(const char* what, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::invalid_argument, std::string(what) + " grid is empty");
}

}  // namespace

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

SweepTable shot_sweep(const Dataset& data, const std::vector<std::size_t>& shots, const SweepOptions& options) {
  require_nonempty("shots", shots.size());
  std::vector<std::string> rows;
  for (auto k : shots) rows.push_back(shot_label(k));
  SweepTable table = empty_table("shots", rows, {"accuracy"});
  std::vector<CellJob> jobs;
  for (std::size_t r = 0; r < shots.size(); ++r)
    for (std::size_t s = 0; s < options.seeds.size(); ++s)
      jobs.push_back({r, 0, s, shots[r], kAllSynthetic, options.config.alpha});
  return run_jobs(std::move(table), jobs, data, options);
}

SweepTable alpha_ablation(const Dataset& data, const std::vector<double>& alphas, const std::vector<std::size_t>& shots,
                          const SweepOptions& options) {
  require_nonempty("alpha", alphas.size());
  require_nonempty("shots", shots.size());
  std::vector<std::string> rows, columns;
  for (double a : alphas) rows.push_back(format_number(a));
  for (auto k : shots) columns.push_back(std::to_string(k));
  SweepTable table = empty_table("alpha", rows, columns);
  std::vector<CellJob> jobs;
  for (std::size_t r = 0; r < alphas.size(); ++r)
    for (std::size_t c = 0; c < shots.size(); ++c)
      for (std::size_t s = 0; s < options.seeds.size(); ++s) jobs.push_back({r, c, s, shots[c], kAllSynthetic, alphas[r]});
  return run_jobs(std::move(table), jobs, data, options);
}

SweepTable synth_count_ablation(const Dataset& data, const std::vector<std::size_t>& counts,
                                const std::vector<std::size_t>& shots, const SweepOptions& options) {
  require_nonempty("synthetic count", counts.size());
  require_nonempty("shots", shots.size());
  const auto available = data.synthetic_available();
  for (std::size_t k : counts) {
    for (std::size_t c = 0; c < available.size(); ++c) {
      if (k > available[c]) {
        throw Error(ErrorKind::insufficient_shots, "synthetic count " + std::to_string(k) + " exceeds the " +
                                                       std::to_string(available[c]) + " available for class '" +
                                                       data.manifest.classes[c] + "'");
      }
    }
  }
  std::vector<std::string> rows, columns;
  for (auto k : shots) rows.push_back(shot_label(k));
  for (auto k : counts) columns.push_back(std::to_string(k));
  SweepTable table = empty_table("K", rows, columns);
  std::vector<CellJob> jobs;
  for (std::size_t r = 0; r < shots.size(); ++r) {
    for (std::size_t c = 0; c < counts.size(); ++c) {
      const double alpha = counts[c] == 0 ? 0.0 : options.config.alpha;
      for (std::size_t s = 0; s < options.seeds.size(); ++s) jobs.push_back({r, c, s, shots[r], counts[c], alpha});
    }
  }
  return run_jobs(std::move(table), jobs, data, options);
}

std::string to_csv(const SweepTable& table) {
  std::ostringstream os;
  os << table.corner;
  for (const auto& c : table.column_labels) os << ',' << c;
  os << '\n';
  char buf[32];
  for (std::size_t r = 0; r < table.row_labels.size(); ++r) {
    os << table.row_labels[r];
    for (const auto& cell : table.cells[r]) {
      std::snprintf(buf, sizeof buf, "%.2f", cell.mean);
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::string to_text(const SweepTable& table) {
  const bool show_spread = !table.cells.empty() && !table.cells.front().empty() &&
                           table.cells.front().front().per_seed.size() > 1;
  std::vector<std::vector<std::string>> grid;
  grid.push_back({table.corner});
  for (const auto& c : table.column_labels) grid.back().push_back(c);
  char buf[64];
  for (std::size_t r = 0; r < table.row_labels.size(); ++r) {
    grid.push_back({table.row_labels[r]});
    for (const auto& cell : table.cells[r]) {
      if (show_spread) std::snprintf(buf, sizeof buf, "%.2f +/- %.2f", cell.mean, cell.spread);
      else std::snprintf(buf, sizeof buf, "%.2f", cell.mean);
      grid.back().push_back(buf);
    }
  }
  std::vector<std::size_t> width(grid.front().size(), 0);
  for (const auto& row : grid)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

  std::ostringstream os;
  auto rule = [&] {
    std::size_t total = 0;
    for (auto w : width) total += w + 2;
    os << std::string(total, '-') << '\n';
  };
  for (std::size_t r = 0; r < grid.size(); ++r) {
    for (std::size_t c = 0; c < grid[r].size(); ++c) {
      const auto& s = grid[r][c];
      const std::string pad(width[c] - s.size(), ' ');
      os << (c == 0 ? s + pad : pad + s) << "  ";
    }
    os << '\n';
    if (r == 0) rule();
  }
  return os.str();
}

FeatureMatrix embed_features(const CacheAdapter& adapter, const FeatureMatrix& data) {
  FeatureMatrix out = FeatureMatrix::from_matrix(mmd_embedding(data.to_matrix(), adapter));
  if (data.rows == 0) out = FeatureMatrix(0, adapter.class_count());
  out.labels = data.labels;
  out.origin = data.origin;
  return out;
}

FeatureMatrix export_embeddings(const CacheAdapter& adapter, const FeatureMatrix& data,
                                const std::filesystem::path& path) {
  FeatureMatrix out = embed_features(adapter, data);
  write_feature_file(out, path);
  return out;
}

}  // namespace cap2aug::eval

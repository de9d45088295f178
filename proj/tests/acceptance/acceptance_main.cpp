// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cap2aug/cli.hpp"
#include "cap2aug/error.hpp"
#include "cap2aug/evaluator.hpp"
#include "cap2aug/kernels_mmd.hpp"
#include "cap2aug/trainer.hpp"
#include "test_util.hpp"

using namespace cap2aug;
using cap2aug::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double time_limit_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (time_limit_s > 0 && secs >= time_limit_s) {
    o.pass = false;
    o.detail += "; over time limit";
  }
  char timing[64];
  std::snprintf(timing, sizeof timing, "%.2fs", secs);
  std::printf("%s  %s  (%s; %s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), timing);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Dataset oracle_dataset(std::uint64_t seed, std::size_t k_synth = 16) {
  SynthClusterParams p;  // 10-way, 16-shot, dim 64
  p.k_synth = k_synth;
  p.seed = seed;
  p.domain_shift = random_shift(p.dim, 0.8, seed);
  const auto data = synth_cluster_dataset(p);
  Dataset d;
  d.manifest = data.manifest;
  d.text_weights = data.text_weights;
  d.train = concat_rows(data.train_real, data.train_synthetic);
  d.test = data.test;
  return d;
}

Outcome mmd_oracle_equivalence() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> n(1, 20), d(1, 8);
  std::uniform_real_distribution<double> scale(0.1, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int dim = d(rng);
    const Eigen::MatrixXd zs = cap2aug::testing::random_matrix(rng, n(rng), dim, scale(rng));
    const Eigen::MatrixXd zt = cap2aug::testing::random_matrix(rng, n(rng), dim, scale(rng));
    const double a = mmd::mmd_biased(zs, zt, mmd::KernelSpec{}).value;
    const double b = mmd::mmd_oracle(mmd::to_rows(zs), mmd::to_rows(zt), mmd::KernelSpec{});
    worst = std::max(worst, std::abs(a - b));
  }
  return {worst < 1e-10, "1000 instances, max |diff| " + fmt("%.3g", worst) + " < 1e-10"};
}

Outcome mmd_coincidence() {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::MatrixXd z = cap2aug::testing::random_matrix(rng, 1 + i % 20, 1 + i % 8);
    worst = std::max(worst, std::abs(mmd::mmd_biased(z, z, mmd::KernelSpec{}).value));
  }
  Eigen::MatrixXd zs(1, 1), zt(1, 1);
  zs << 0.0;
  zt << 1.0;
  const double hand = mmd::mmd_biased(zs, zt, mmd::KernelSpec::single(1.0)).value;
  const double hand_err = std::abs(hand - (1.0 + 1.0 - 2.0 * std::exp(-0.5)));
  return {worst < 1e-12 && hand_err < 1e-12,
          "identical sets max |D| " + fmt("%.3g", worst) + ", hand case error " + fmt("%.3g", hand_err)};
}

Outcome gradient_suite() {
  double worst = 0.0;
  int instances = 0;
  bool all = true;
  for (double alpha : {0.0, 0.01, 0.1, 1.0}) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      train::TrainConfig c;
      c.alpha = alpha;
      const auto report = train::grad_check(train::make_gradcheck_instance(1000 + seed, c), 1e-5);
      worst = std::max(worst, report.max_rel_error);
      all &= report.passed && report.mmd_exercised == (alpha > 0.0);
      ++instances;
    }
  }
  return {all && worst < 1e-5,
          std::to_string(instances) + " instances over alpha {0,0.01,0.1,1}, max rel error " + fmt("%.3g", worst)};
}

Outcome alignment_efficacy() {
  int mmd_wins = 0, acc_wins = 0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset d = oracle_dataset(seed);
    const Episode ep = sample_episode(d, 10, 16, seed);
    train::TrainConfig c;
    c.seed = seed;
    c.alpha = 1.0;
    const train::TrainRun with = train::train(ep, c);
    c.alpha = 0.0;
    const train::TrainRun without = train::train(ep, c);
    const double mmd1 = *with.history.back().mmd_between_domains;
    const double mmd0 = *without.history.back().mmd_between_domains;
    const double acc1 = eval::evaluate(with.adapter, ep.query).overall_acc;
    const double acc0 = eval::evaluate(without.adapter, ep.query).overall_acc;
    mmd_wins += mmd1 < mmd0;
    acc_wins += acc1 >= acc0;
    per_seed += " [" + fmt("%.4g", mmd1) + " vs " + fmt("%.4g", mmd0) + ", " + fmt("%.1f", acc1) + "% vs " +
                fmt("%.1f", acc0) + "%]";
  }
  return {mmd_wins >= 4 && acc_wins >= 4, "MMD lower " + std::to_string(mmd_wins) + "/5, accuracy >= " +
                                              std::to_string(acc_wins) + "/5; alpha=1 vs 0:" + per_seed};
}

Outcome adapter_limits() {
  const Dataset d = oracle_dataset(3);
  const Episode ep = sample_episode(d, 10, 16, 3);
  const FeatureMatrix support = concat_rows(ep.support_real, ep.support_synthetic);

  const CacheAdapter zero = init_from_support(support, ep.text_weights, kDefaultBeta, 0.0);
  const Eigen::MatrixXd f = ep.query.to_matrix();
  const Eigen::MatrixXd zs = f * zero.text_weights.transpose();
  const bool zero_shot = full_logits(f, zero) == zs;

  train::TrainConfig c;
  c.epochs = 0;
  const train::TrainRun run = train::train(ep, c);
  const bool untouched = run.adapter.keys == support.to_matrix();

  const CacheAdapter sharp = init_from_support(support, ep.text_weights, 100.0, 1.0);
  const auto pred = argmax_rows(cache_logits(support.to_matrix(), sharp));
  std::size_t hits = 0;
  for (std::size_t r = 0; r < support.rows; ++r) hits += pred[r] == support.labels[r];
  const double recall = 100.0 * static_cast<double>(hits) / static_cast<double>(support.rows);

  return {zero_shot && untouched && hits == support.rows,
          std::string("a=0 zero-shot exact: ") + (zero_shot ? "yes" : "no") +
              ", epochs=0 keys identical: " + (untouched ? "yes" : "no") + ", beta=100 recall " +
              fmt("%.1f", recall) + "% of " + std::to_string(support.rows) + " rows"};
}

Outcome determinism() {
  TempDir dir;
  std::ostringstream sink;
  const std::string data = (dir / "data").string();
  if (cli::run({"synth-data", "--out", data, "--seed", "5"}, sink, sink) != cli::kOk) return {false, sink.str()};
  auto train_into = [&](const std::string& out) {
    return cli::run({"train", "--manifest", data + "/manifest.json", "--out", out, "--seed", "11", "--synthetic", "16",
                     "--epochs", "10"},
                    sink, sink);
  };
  if (train_into((dir / "a").string()) != cli::kOk || train_into((dir / "b").string()) != cli::kOk) {
    return {false, sink.str()};
  }
  bool same = true;
  std::string detail;
  for (const char* f : {"history.jsonl", "adapter.capf", "adapter.json"}) {
    const bool eq = slurp(dir / "a" / f) == slurp(dir / "b" / f) && !slurp(dir / "a" / f).empty();
    same &= eq;
    detail += std::string(f) + (eq ? " identical" : " DIFFERS") + "; ";
  }
  detail.resize(detail.size() - 2);
  return {same, detail};
}

Outcome format_round_trip() {
  TempDir dir;
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> rows(0, 50), dim(1, 64);
  int identical = 0;
  for (int i = 0; i < 100; ++i) {
    const FeatureMatrix m = cap2aug::testing::random_features(rng, rows(rng), dim(rng));
    write_feature_file(m, dir / "m.capf");
    identical += read_feature_file(dir / "m.capf") == m;
  }

  FeatureMatrix m(2, 3);
  auto bytes = encode_feature_bytes(m);
  auto expect = [](std::vector<std::uint8_t> b, ErrorKind kind, const std::string& needle) {
    try {
      decode_feature_bytes(b);
    } catch (const Error& e) {
      return e.kind() == kind && std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  auto bad_magic = bytes;
  bad_magic[1] = 'X';
  auto truncated = bytes;
  truncated.resize(16 + 20);
  const bool magic_ok = expect(bad_magic, ErrorKind::bad_magic, "byte offset 0");
  const bool trunc_ok = expect(truncated, ErrorKind::truncated_payload, "byte offset 36");
  return {identical == 100 && magic_ok && trunc_ok,
          std::to_string(identical) + "/100 round trips identical, bad magic rejected: " + (magic_ok ? "yes" : "no") +
              ", truncation rejected: " + (trunc_ok ? "yes" : "no")};
}

Outcome sweep_shapes() {
  SynthClusterParams p;
  p.n_way = 3;
  p.k_shot = 16;
  p.k_synth = 80;
  p.n_test = 5;
  p.dim = 8;
  p.domain_shift = random_shift(p.dim, 0.8, 0);
  const auto data = synth_cluster_dataset(p);
  Dataset d;
  d.manifest = data.manifest;
  d.text_weights = data.text_weights;
  d.train = concat_rows(data.train_real, data.train_synthetic);
  d.test = data.test;

  eval::SweepOptions o;
  o.config.epochs = 1;
  const auto alpha = eval::alpha_ablation(d, {0, 0.01, 0.1, 1}, {2, 4, 8, 16}, o);
  bool alpha_ok = alpha.cells.size() == 4 && alpha.row_labels == std::vector<std::string>{"0", "0.01", "0.1", "1"} &&
                  alpha.column_labels == std::vector<std::string>{"2", "4", "8", "16"};
  for (const auto& row : alpha.cells) alpha_ok &= row.size() == 4;

  const auto synth = eval::synth_count_ablation(d, {4, 16, 40, 80}, {16}, o);
  const bool synth_ok = synth.column_labels == std::vector<std::string>{"4", "16", "40", "80"} &&
                        synth.cells.size() == 1 && synth.cells[0].size() == 4;
  return {alpha_ok && synth_ok, std::string("alpha table ") + std::to_string(alpha.cells.size()) + "x" +
                                    std::to_string(alpha.cells.empty() ? 0 : alpha.cells[0].size()) +
                                    ", synthetic-count columns " + eval::to_csv(synth).substr(0, eval::to_csv(synth).find('\n'))};
}

}  // namespace

int main() {
  criterion("MMD oracle equivalence", 10.0, mmd_oracle_equivalence);
  criterion("MMD coincidence", 0.0, mmd_coincidence);
  criterion("Gradient suite", 30.0, gradient_suite);
  criterion("Alignment efficacy", 120.0, alignment_efficacy);
  criterion("Adapter limits", 0.0, adapter_limits);
  criterion("Determinism", 0.0, determinism);
  criterion("Format round-trip", 0.0, format_round_trip);
  criterion("Sweep shapes", 0.0, sweep_shapes);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

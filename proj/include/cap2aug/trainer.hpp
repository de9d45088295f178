#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cap2aug/cache_adapter.hpp"
#include "cap2aug/feature_store.hpp"
#include "cap2aug/kernels_mmd.hpp"

namespace cap2aug::train {

struct TrainConfig {
  double alpha = 1.0;  // weight of the alignment term
  double lr0 = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  double beta = kDefaultBeta;
  double a = kDefaultResidualRatio;
  mmd::KernelSpec kernel;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double eps = 1e-8;
  double eta_min = 0.0;

  void validate() const;
};

struct CrossEntropy {
  double loss = 0.0;
  Eigen::MatrixXd d_logits;
};

// Mean negative log-softmax of the labelled column; gradient (softmax - onehot) / rows.
CrossEntropy cross_entropy(const Eigen::MatrixXd& logits, const std::vector<std::uint32_t>& labels);

struct LossGrad {
  double loss = 0.0;
  double ce = 0.0;
  double mmd = 0.0;  // 0 and never evaluated when alpha == 0
  Eigen::MatrixXd d_keys;
};

// L = CE(full_logits(batch)) + alpha * MMD(embed(real_support), embed(synth_support)),
// differentiated with respect to the cache keys only.
LossGrad loss_and_grad(const CacheAdapter& adapter, const Eigen::MatrixXd& real_support,
                       const Eigen::MatrixXd& synth_support, const Eigen::MatrixXd& batch,
                       const std::vector<std::uint32_t>& batch_labels, const TrainConfig& config);

struct AdamWState {
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;
  std::uint64_t t = 0;
};

// Decoupled decay (params *= 1 - lr * wd) followed by a bias-corrected Adam step.
void adamw_step(AdamWState& state, Eigen::MatrixXd& params, const Eigen::MatrixXd& grads, double lr,
                const TrainConfig& config);

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double eta_min);

struct EpochRecord {
  std::size_t epoch = 0;
  double ce_loss = 0.0;
  double mmd_loss = 0.0;
  double total_loss = 0.0;
  double train_acc = 0.0;  // percent, full support set at epoch end
  std::optional<double> mmd_between_domains;
  double lr = 0.0;  // at the last step of the epoch
};

struct TrainRun {
  TrainConfig config;
  std::vector<EpochRecord> history;
  CacheAdapter initial;
  CacheAdapter adapter;
  double wall_time = 0.0;  // seconds; not part of any exported artifact
};

// Feature sets for one run. `cache_support` rows become the keys and supply
// the training batches; `mmd_real` / `mmd_synthetic` are the two domains the
// alignment term compares.
struct TrainInputs {
  FeatureMatrix cache_support;
  FeatureMatrix text_weights;
  Eigen::MatrixXd mmd_real;
  Eigen::MatrixXd mmd_synthetic;
};

TrainInputs inputs_from_episode(const Episode& episode);

// Called after every epoch (and once with epoch 0 before training).
using EpochCallback = std::function<void(std::size_t epoch, const CacheAdapter& adapter)>;

TrainRun train(const TrainInputs& inputs, const TrainConfig& config, const EpochCallback& on_epoch = {});
TrainRun train(const Episode& episode, const TrainConfig& config, const EpochCallback& on_epoch = {});

std::string history_jsonl(const std::vector<EpochRecord>& history);

// --- gradient verification ---

struct GradCheckInstance {
  CacheAdapter adapter;
  Eigen::MatrixXd real_support;
  Eigen::MatrixXd synth_support;
  Eigen::MatrixXd batch;
  std::vector<std::uint32_t> batch_labels;
  TrainConfig config;
};

struct GradCheckShape {
  std::size_t classes = 2;
  std::size_t keys_per_class = 2;  // half real, half synthetic
  std::size_t dim = 3;
  std::size_t batch = 5;
};

// Random instance with keys moved off their initialization so no affinity
// sits on the clamp at 1.
GradCheckInstance make_gradcheck_instance(std::uint64_t seed, const TrainConfig& config,
                                          const GradCheckShape& shape = {});

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_key = 0;
  std::size_t worst_coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
  bool mmd_exercised = false;
  bool passed = false;
};

inline constexpr double kFiniteDifferenceStep = 1e-5;
// Denominator floor for relative error so coordinates with vanishing
// gradients are compared on an absolute scale.
inline constexpr double kRelErrorFloor = 1e-8;

double relative_error(double analytic, double numeric);

using AnalyticGradient = std::function<Eigen::MatrixXd(const GradCheckInstance&)>;

// Central differences of the scalar loss against every key coordinate.
// `analytic` defaults to loss_and_grad's d_keys.
GradCheckReport grad_check(const GradCheckInstance& instance, double tolerance, const AnalyticGradient& analytic = {});

}  // namespace cap2aug::train

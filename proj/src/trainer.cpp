#include "cap2aug/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cap2aug/error.hpp"

namespace cap2aug::train {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::invalid_argument, what); };
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be a finite value >= 0");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) fail("learning rate must be positive");
  if (batch_size == 0) fail("batch size must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta)) fail("beta must be positive");
  if (!(a >= 0.0) || !std::isfinite(a)) fail("residual ratio must be >= 0");
  if (!(weight_decay >= 0.0)) fail("weight decay must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) fail("eps must be positive");
  if (!(eta_min >= 0.0)) fail("eta_min must be >= 0");
  kernel.validate();
}

CrossEntropy cross_entropy(const Eigen::MatrixXd& logits, const std::vector<std::uint32_t>& labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw Error(ErrorKind::dimension_mismatch, "logits have " + std::to_string(logits.rows()) + " rows, " +
                                                   std::to_string(labels.size()) + " labels");
  }
  CrossEntropy out{0.0, Eigen::MatrixXd(logits.rows(), logits.cols())};
  if (logits.rows() == 0) return out;
  const double inv_rows = 1.0 / static_cast<double>(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto label = labels[static_cast<std::size_t>(r)];
    if (label >= logits.cols()) {
      throw Error(ErrorKind::label_out_of_range, "row " + std::to_string(r) + " label " + std::to_string(label));
    }
    Eigen::Index arg = 0;
    const double top = logits.row(r).maxCoeff(&arg);
    const Eigen::RowVectorXd shifted = logits.row(r).array() - top;
    const Eigen::RowVectorXd ex = shifted.array().exp();
    // The max term contributes exactly 1; log1p keeps confident rows accurate.
    double rest = 0.0;
    for (Eigen::Index c = 0; c < ex.size(); ++c) rest += c == arg ? 0.0 : ex(c);
    const double sum = 1.0 + rest;
    out.loss += (std::log1p(rest) - shifted(label)) * inv_rows;
    out.d_logits.row(r) = ex / sum;
    out.d_logits(r, label) -= 1.0;
    out.d_logits.row(r) *= inv_rows;
  }
  return out;
}

namespace {

// d phi / d x where phi clamps inputs above 1; zero on the clamped side.
Eigen::MatrixXd phi_backward(const Eigen::MatrixXd& upstream, const Eigen::MatrixXd& affinity,
                             const Eigen::MatrixXd& pre, double beta) {
  return (upstream.array() * affinity.array() * beta * (pre.array() <= 1.0).cast<double>()).matrix();
}

// pre = x K^T and its affinities, shared by the forward and backward passes.
struct CacheForward {
  Eigen::MatrixXd pre;
  Eigen::MatrixXd aff;
};

CacheForward cache_forward(const Eigen::MatrixXd& x, const CacheAdapter& adapter) {
  CacheForward f;
  f.pre = x * adapter.keys.transpose();
  f.aff = phi(f.pre, adapter.beta);
  return f;
}

// Gradient wrt keys of a loss whose gradient wrt embed(x) = phi(x K^T) V is d_embed.
Eigen::MatrixXd embedding_backward(const Eigen::MatrixXd& x, const CacheForward& fwd, const Eigen::MatrixXd& d_embed,
                                   const CacheAdapter& adapter) {
  // V is one-hot, so d_embed V^T just picks each key's class column.
  Eigen::MatrixXd upstream(d_embed.rows(), adapter.values.rows());
  for (Eigen::Index m = 0; m < upstream.cols(); ++m) {
    upstream.col(m) = d_embed.col(adapter.key_labels[static_cast<std::size_t>(m)]);
  }
  return phi_backward(upstream, fwd.aff, fwd.pre, adapter.beta).transpose() * x;
}

}  // namespace

LossGrad loss_and_grad(const CacheAdapter& adapter, const Eigen::MatrixXd& real_support,
                       const Eigen::MatrixXd& synth_support, const Eigen::MatrixXd& batch,
                       const std::vector<std::uint32_t>& batch_labels, const TrainConfig& config) {
  if (batch.cols() != adapter.keys.cols()) {
    throw Error(ErrorKind::dimension_mismatch, "batch dim " + std::to_string(batch.cols()) + " vs key dim " +
                                                   std::to_string(adapter.keys.cols()));
  }
  LossGrad out;
  const CacheForward batch_fwd = cache_forward(batch, adapter);
  const Eigen::MatrixXd logits = adapter.a * (batch_fwd.aff * adapter.values) + batch * adapter.text_weights.transpose();
  const CrossEntropy ce = cross_entropy(logits, batch_labels);
  out.ce = ce.loss;
  // Only the cache branch depends on the keys.
  out.d_keys = embedding_backward(batch, batch_fwd, adapter.a * ce.d_logits, adapter);

  if (config.alpha > 0.0) {
    const CacheForward real_fwd = cache_forward(real_support, adapter);
    const CacheForward synth_fwd = cache_forward(synth_support, adapter);
    const Eigen::MatrixXd zs = real_fwd.aff * adapter.values;
    const Eigen::MatrixXd zt = synth_fwd.aff * adapter.values;
    const mmd::MmdGradient g = mmd::mmd_gradient(zs, zt, config.kernel);
    out.mmd = g.value;
    out.d_keys += config.alpha * (embedding_backward(real_support, real_fwd, g.d_zs, adapter) +
                                  embedding_backward(synth_support, synth_fwd, g.d_zt, adapter));
  }
  out.loss = out.ce + config.alpha * out.mmd;
  return out;
}

void adamw_step(AdamWState& state, Eigen::MatrixXd& params, const Eigen::MatrixXd& grads, double lr,
                const TrainConfig& config) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols()) {
    throw Error(ErrorKind::dimension_mismatch, "parameter and gradient shapes differ");
  }
  if (state.t == 0) {
    state.m = Eigen::MatrixXd::Zero(params.rows(), params.cols());
    state.v = Eigen::MatrixXd::Zero(params.rows(), params.cols());
  }
  ++state.t;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  params *= 1.0 - lr * config.weight_decay;
  state.m = b1 * state.m + (1.0 - b1) * grads;
  state.v = b2 * state.v + (1.0 - b2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.eps);
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double eta_min) {
  if (total_steps == 0) throw Error(ErrorKind::invalid_argument, "total_steps must be positive");
  if (step > total_steps) throw Error(ErrorKind::invalid_argument, "step beyond schedule");
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return eta_min + 0.5 * (lr0 - eta_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

TrainInputs inputs_from_episode(const Episode& episode) {
  TrainInputs in;
  in.cache_support = concat_rows(episode.support_real, episode.support_synthetic);
  in.text_weights = episode.text_weights;
  in.mmd_real = episode.support_real.to_matrix();
  in.mmd_synthetic = episode.support_synthetic.to_matrix();
  return in;
}

namespace {

double support_accuracy(const CacheAdapter& adapter, const Eigen::MatrixXd& features,
                        const std::vector<std::uint32_t>& labels) {
  const auto pred = argmax_rows(full_logits(features, adapter));
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return pred.empty() ? 0.0 : 100.0 * static_cast<double>(hit) / static_cast<double>(pred.size());
}

std::optional<double> domain_gap(const CacheAdapter& adapter, const TrainInputs& in, const TrainConfig& config) {
  if (in.mmd_real.rows() == 0 || in.mmd_synthetic.rows() == 0) return std::nullopt;
  return mmd::mmd_biased(mmd_embedding(in.mmd_real, adapter), mmd_embedding(in.mmd_synthetic, adapter),
                         config.kernel)
      .value;
}

}  // namespace

TrainRun train(const TrainInputs& in, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (in.cache_support.rows == 0) throw Error(ErrorKind::empty_input, "empty support set");
  if (config.alpha > 0.0 && (in.mmd_synthetic.rows() == 0 || in.mmd_real.rows() == 0)) {
    throw Error(ErrorKind::empty_synthetic_with_positive_alpha,
                "alpha=" + std::to_string(config.alpha) + " needs both real and synthetic support rows");
  }
  const auto started = std::chrono::steady_clock::now();

  TrainRun run;
  run.config = config;
  run.initial = init_from_support(in.cache_support, in.text_weights, config.beta, config.a);
  run.adapter = run.initial;
  if (on_epoch) on_epoch(0, run.adapter);

  const Eigen::MatrixXd support = in.cache_support.to_matrix();
  const std::vector<std::uint32_t>& labels = in.cache_support.labels;
  const std::size_t rows = in.cache_support.rows;
  const std::size_t steps_per_epoch = (rows + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = std::max<std::size_t>(1, config.epochs * steps_per_epoch);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(rows);
  AdamWState opt;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t begin = 0; begin < rows; begin += config.batch_size) {
      const std::size_t end = std::min(rows, begin + config.batch_size);
      Eigen::MatrixXd batch(static_cast<Eigen::Index>(end - begin), support.cols());
      std::vector<std::uint32_t> batch_labels(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        batch.row(static_cast<Eigen::Index>(i - begin)) = support.row(static_cast<Eigen::Index>(order[i]));
        batch_labels[i - begin] = labels[order[i]];
      }
      const LossGrad lg = loss_and_grad(run.adapter, in.mmd_real, in.mmd_synthetic, batch, batch_labels, config);
      rec.lr = cosine_lr(step, total_steps, config.lr0, config.eta_min);
      adamw_step(opt, run.adapter.keys, lg.d_keys, rec.lr, config);
      ++step;
      rec.ce_loss += lg.ce;
      rec.mmd_loss += lg.mmd;
    }
    rec.ce_loss /= static_cast<double>(steps_per_epoch);
    rec.mmd_loss /= static_cast<double>(steps_per_epoch);
    rec.total_loss = rec.ce_loss + config.alpha * rec.mmd_loss;
    rec.train_acc = support_accuracy(run.adapter, support, labels);
    rec.mmd_between_domains = domain_gap(run.adapter, in, config);
    run.history.push_back(rec);
    if (on_epoch) on_epoch(epoch, run.adapter);
  }

  run.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

TrainRun train(const Episode& episode, const TrainConfig& config, const EpochCallback& on_epoch) {
  return train(inputs_from_episode(episode), config, on_epoch);
}

std::string history_jsonl(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  for (const auto& r : history) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["ce_loss"] = r.ce_loss;
    j["mmd_loss"] = r.mmd_loss;
    j["total_loss"] = r.total_loss;
    j["train_acc"] = r.train_acc;
    j["mmd_between_domains"] = r.mmd_between_domains ? nlohmann::ordered_json(*r.mmd_between_domains) : nlohmann::ordered_json();
    j["lr"] = r.lr;
    os << j.dump() << '\n';
  }
  return os.str();
}

// --- gradient verification ---

GradCheckInstance make_gradcheck_instance(std::uint64_t seed, const TrainConfig& config,
                                          const GradCheckShape& shape) {
  if (shape.classes == 0 || shape.keys_per_class < 2 || shape.dim == 0 || shape.batch == 0) {
    throw Error(ErrorKind::invalid_argument, "gradient check shape needs >= 2 keys per class");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(shape.classes - 1));

  auto unit_row = [&](std::size_t dim) {
    Eigen::RowVectorXd v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = normal(rng);
    return Eigen::RowVectorXd(v / v.norm());
  };

  const std::size_t real_per_class = shape.keys_per_class / 2;
  const std::size_t synth_per_class = shape.keys_per_class - real_per_class;
  FeatureMatrix real(shape.classes * real_per_class, shape.dim);
  FeatureMatrix synth(shape.classes * synth_per_class, shape.dim);
  FeatureMatrix text(shape.classes, shape.dim);
  auto fill = [&](FeatureMatrix& m, std::size_t per_class, Origin origin) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      const Eigen::RowVectorXd v = unit_row(shape.dim);
      for (std::size_t c = 0; c < shape.dim; ++c) m.at(r, c) = static_cast<float>(v(static_cast<Eigen::Index>(c)));
      m.labels[r] = static_cast<std::uint32_t>(r / per_class);
      m.origin[r] = origin;
    }
  };
  fill(real, real_per_class, Origin::real);
  fill(synth, synth_per_class, Origin::synthetic);
  fill(text, 1, Origin::real);

  GradCheckInstance inst;
  inst.config = config;
  inst.adapter = init_from_support(concat_rows(real, synth), text, inst.config.beta, inst.config.a);
  // Shrink and jitter the keys so every |affinity| stays clear of the clamp.
  for (auto& x : inst.adapter.keys.reshaped()) x = 0.8 * x + 0.05 * normal(rng);
  inst.real_support = real.to_matrix();
  inst.synth_support = synth.to_matrix();
  inst.batch.resize(static_cast<Eigen::Index>(shape.batch), static_cast<Eigen::Index>(shape.dim));
  inst.batch_labels.resize(shape.batch);
  for (std::size_t i = 0; i < shape.batch; ++i) {
    inst.batch.row(static_cast<Eigen::Index>(i)) = unit_row(shape.dim);
    inst.batch_labels[i] = pick(rng);
  }
  return inst;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelErrorFloor});
}

GradCheckReport grad_check(const GradCheckInstance& instance, double tolerance, const AnalyticGradient& analytic) {
  auto loss_at = [&](const CacheAdapter& adapter) {
    return loss_and_grad(adapter, instance.real_support, instance.synth_support, instance.batch,
                         instance.batch_labels, instance.config)
        .loss;
  };
  const Eigen::MatrixXd grad =
      analytic ? analytic(instance)
               : loss_and_grad(instance.adapter, instance.real_support, instance.synth_support, instance.batch,
                               instance.batch_labels, instance.config)
                     .d_keys;

  GradCheckReport report;
  report.mmd_exercised = instance.config.alpha > 0.0;
  CacheAdapter probe = instance.adapter;
  for (Eigen::Index i = 0; i < probe.keys.rows(); ++i) {
    for (Eigen::Index j = 0; j < probe.keys.cols(); ++j) {
      const double saved = probe.keys(i, j);
      probe.keys(i, j) = saved + kFiniteDifferenceStep;
      const double up = loss_at(probe);
      probe.keys(i, j) = saved - kFiniteDifferenceStep;
      const double down = loss_at(probe);
      probe.keys(i, j) = saved;
      const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
      double err = relative_error(grad(i, j), numeric);
      if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
      ++report.coordinates;
      if (err > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = err;
        report.worst_key = static_cast<std::size_t>(i);
        report.worst_coord = static_cast<std::size_t>(j);
        report.analytic = grad(i, j);
        report.numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace cap2aug::train

#include "cap2aug/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <thread>

#include <CLI11.hpp>

#include "cap2aug/error.hpp"
#include "cap2aug/evaluator.hpp"
#include "cap2aug/feature_store.hpp"

namespace fs = std::filesystem;

namespace cap2aug::cli {

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  if (!kind.empty()) j["kind"] = kind;
  j["manifest"] = manifest;
  j["out"] = out;
  if (!checkpoint.empty()) j["checkpoint"] = checkpoint;
  j["seed"] = seed;
  j["repeats"] = repeats;
  j["ways"] = ways;
  j["shots"] = shots;
  j["synthetic"] = synthetic ? nlohmann::ordered_json(*synthetic) : nlohmann::ordered_json();
  j["grid"] = grid;
  j["export_embeddings"] = export_embeddings;
  j["alpha"] = train.alpha;
  j["lr"] = train.lr0;
  j["epochs"] = train.epochs;
  j["batch_size"] = train.batch_size;
  j["beta"] = train.beta;
  j["residual_ratio"] = train.a;
  j["kernel_bandwidths"] = train.kernel.bandwidths;
  j["kernel_weights"] = train.kernel.weights;
  j["weight_decay"] = train.weight_decay;
  j["adam_betas"] = {train.adam_beta1, train.adam_beta2};
  j["eps"] = train.eps;
  j["eta_min"] = train.eta_min;
  j["shift"] = shift;
  j["dim"] = dim;
  j["test_per_class"] = test_per_class;
  j["noise"] = noise;
  j["tolerance"] = tolerance;
  return j;
}

void RunConfig::merge_json(const nlohmann::json& j) {
  auto take = [&j](const char* key, auto& field) {
    if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  take("command", command);
  take("kind", kind);
  take("manifest", manifest);
  take("out", out);
  take("checkpoint", checkpoint);
  take("seed", seed);
  take("repeats", repeats);
  take("ways", ways);
  take("shots", shots);
  if (j.contains("synthetic")) {
    synthetic = j.at("synthetic").is_null() ? std::nullopt : std::optional(j.at("synthetic").get<std::size_t>());
  }
  take("grid", grid);
  take("export_embeddings", export_embeddings);
  take("alpha", train.alpha);
  take("lr", train.lr0);
  take("epochs", train.epochs);
  take("batch_size", train.batch_size);
  take("beta", train.beta);
  take("residual_ratio", train.a);
  take("kernel_bandwidths", train.kernel.bandwidths);
  take("kernel_weights", train.kernel.weights);
  take("weight_decay", train.weight_decay);
  if (j.contains("adam_betas")) {
    const auto betas = j.at("adam_betas").get<std::vector<double>>();
    if (betas.size() != 2) throw Error(ErrorKind::invalid_argument, "adam_betas needs two values");
    train.adam_beta1 = betas[0];
    train.adam_beta2 = betas[1];
  }
  take("eps", train.eps);
  take("eta_min", train.eta_min);
  take("shift", shift);
  take("dim", dim);
  take("test_per_class", test_per_class);
  take("noise", noise);
  take("tolerance", tolerance);
}

std::size_t thread_budget() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CAP2AUG_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) n = std::min(n, static_cast<std::size_t>(v));
  }
  return n;
}

namespace {

using Apply = std::function<void(RunConfig&)>;

// Flags are parsed into holders and applied after any --config file so that
// explicit flags win.
class FlagBinder {
 public:
  FlagBinder(CLI::App* app, std::vector<Apply>& appliers) : app_(app), appliers_(appliers) {}

  template <class T, class Set>
  CLI::Option* add(const std::string& name, const std::string& help, Set set) {
    auto holder = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(name, *holder, help);
    appliers_.push_back([opt, holder, set](RunConfig& c) {
      if (opt->count() > 0) set(c, *holder);
    });
    return opt;
  }

  CLI::Option* flag(const std::string& name, const std::string& help, bool RunConfig::*field) {
    auto holder = std::make_shared<bool>(false);
    CLI::Option* opt = app_->add_flag(name, *holder, help);
    appliers_.push_back([opt, holder, field](RunConfig& c) {
      if (opt->count() > 0) c.*field = *holder;
    });
    return opt;
  }

 private:
  CLI::App* app_;
  std::vector<Apply>& appliers_;
};

double parse_number(const std::string& text, const std::string& flag) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || used == 0) throw Error(ErrorKind::invalid_argument, flag + ": '" + text + "' is not a number");
  return v;
}

struct Invocation {
  std::string config_path;
  bool force = false;
};

void add_data_flags(FlagBinder& b, Invocation& inv, CLI::App* app) {
  app->add_option("--config", inv.config_path, "JSON run config (flags override it)");
  app->add_flag("--force", inv.force, "overwrite an existing output directory");
  b.add<std::string>("--manifest", "dataset manifest JSON", [](RunConfig& c, const std::string& v) { c.manifest = v; });
  b.add<std::string>("--out", "output directory", [](RunConfig& c, const std::string& v) { c.out = v; });
  b.add<std::uint64_t>("--seed", "seed for every random choice", [](RunConfig& c, std::uint64_t v) { c.seed = v; });
}

void add_train_flags(FlagBinder& b) {
  b.add<double>("--alpha", "alignment loss coefficient", [](RunConfig& c, double v) { c.train.alpha = v; });
  b.add<std::vector<std::size_t>>("--shots", "real shots per class (comma separated)",
                                  [](RunConfig& c, const std::vector<std::size_t>& v) { c.shots = v; })
      ->delimiter(',');
  b.add<std::size_t>("--ways", "classes per episode (0 = all)", [](RunConfig& c, std::size_t v) { c.ways = v; });
  b.add<std::size_t>("--synthetic", "synthetic rows per class", [](RunConfig& c, std::size_t v) { c.synthetic = v; });
  b.add<double>("--beta", "affinity sharpness", [](RunConfig& c, double v) { c.train.beta = v; });
  b.add<double>("--residual-ratio", "weight of the cache logits", [](RunConfig& c, double v) { c.train.a = v; });
  b.add<std::size_t>("--epochs", "training epochs", [](RunConfig& c, std::size_t v) { c.train.epochs = v; });
  b.add<double>("--lr", "initial learning rate", [](RunConfig& c, double v) { c.train.lr0 = v; });
  b.add<std::size_t>("--batch-size", "minibatch size", [](RunConfig& c, std::size_t v) { c.train.batch_size = v; });
  b.add<double>("--weight-decay", "AdamW decoupled weight decay",
                [](RunConfig& c, double v) { c.train.weight_decay = v; });
  b.add<std::size_t>("--repeats", "number of consecutive seeds to average over",
                     [](RunConfig& c, std::size_t v) { c.repeats = v; });
}

void prepare_out_dir(const std::string& dir, bool force) {
  if (dir.empty()) throw Error(ErrorKind::invalid_argument, "--out is required");
  const fs::path p(dir);
  if (fs::exists(p) && !fs::is_empty(p) && !force) {
    throw Error(ErrorKind::invalid_argument, "output directory " + dir + " is not empty; pass --force to overwrite");
  }
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorKind::io_failure, "cannot create " + dir + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io_failure, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorKind::io_failure, "short write to " + path.string());
}

void echo_config(const RunConfig& cfg) {
  write_text(fs::path(cfg.out) / "run_config.json", cfg.to_json().dump(2) + "\n");
}

std::vector<std::uint64_t> seed_list(const RunConfig& cfg) {
  if (cfg.repeats == 0) throw Error(ErrorKind::invalid_argument, "--repeats must be positive");
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < cfg.repeats; ++i) seeds.push_back(cfg.seed + i);
  return seeds;
}

std::size_t single_shot(const RunConfig& cfg) {
  if (cfg.shots.empty()) return 16;
  if (cfg.shots.size() > 1) throw Error(ErrorKind::invalid_argument, "train takes a single --shots value");
  return cfg.shots.front();
}

// Test rows of the given manifest classes, relabelled to adapter indices.
FeatureMatrix query_for(const Dataset& data, const std::vector<std::uint32_t>& classes) {
  std::vector<std::uint32_t> local(data.class_count(), UINT32_MAX);
  for (std::size_t i = 0; i < classes.size(); ++i) local.at(classes[i]) = static_cast<std::uint32_t>(i);
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < data.test.rows; ++r)
    if (local[data.test.labels[r]] != UINT32_MAX) rows.push_back(r);
  FeatureMatrix q = data.test.select_rows(rows);
  if (q.rows == 0) q = FeatureMatrix(0, data.train.dim);
  for (auto& l : q.labels) l = local[l];
  return q;
}

void attach_groups(eval::EvalReport& report, const Dataset& data, const std::vector<std::uint32_t>& classes) {
  const auto available = data.shots_available();
  std::vector<std::size_t> counts;
  for (auto c : classes) counts.push_back(available[c]);
  report.group_acc = eval::group_accuracy(report.confusion, counts);
}

std::vector<std::string> class_names(const Dataset& data, const std::vector<std::uint32_t>& classes) {
  std::vector<std::string> names;
  for (auto c : classes) names.push_back(data.manifest.classes[c]);
  return names;
}

int cmd_train(const RunConfig& cfg, bool force, std::ostream& out) {
  cfg.train.validate();
  const std::size_t shots = single_shot(cfg);
  if (cfg.manifest.empty()) throw Error(ErrorKind::invalid_argument, "--manifest is required");
  if (cfg.out.empty()) throw Error(ErrorKind::invalid_argument, "--out is required");
  const Dataset data = load_dataset(fs::path(cfg.manifest));
  const std::size_t ways = cfg.ways == 0 ? data.class_count() : cfg.ways;
  const Episode ep = sample_episode(data, ways, shots, cfg.seed, cfg.synthetic.value_or(kAllSynthetic));
  prepare_out_dir(cfg.out, force);
  echo_config(cfg);

  train::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const FeatureMatrix support = concat_rows(ep.support_real, ep.support_synthetic);
  const std::size_t mid = tc.epochs / 2;
  train::EpochCallback on_epoch;
  if (cfg.export_embeddings) {
    on_epoch = [&](std::size_t epoch, const CacheAdapter& adapter) {
      if (epoch == 0 || epoch == mid || epoch == tc.epochs) {
        eval::export_embeddings(adapter, support,
                                fs::path(cfg.out) / ("embeddings_epoch" + std::to_string(epoch) + ".capf"));
      }
    };
  }
  const train::TrainRun run = train::train(ep, tc, on_epoch);

  write_text(fs::path(cfg.out) / "history.jsonl", train::history_jsonl(run.history));
  CheckpointMeta meta{tc.beta, tc.a, ep.classes.size(), file_hash_hex(cfg.manifest), ep.classes};
  save_checkpoint(run.adapter, meta, fs::path(cfg.out) / "adapter");
  eval::EvalReport report = eval::evaluate(run.adapter, ep.query);
  attach_groups(report, data, ep.classes);
  write_text(fs::path(cfg.out) / "report.json", eval::report_json(report, class_names(data, ep.classes)));

  out << "trained " << ways << "-way " << shots << "-shot adapter (" << ep.support_synthetic.rows
      << " synthetic rows, alpha=" << tc.alpha << ", " << tc.epochs << " epochs): test accuracy "
      << report.overall_acc << "%\n";
  return kOk;
}

int cmd_evaluate(const RunConfig& cfg, bool force, std::ostream& out) {
  if (cfg.manifest.empty()) throw Error(ErrorKind::invalid_argument, "--manifest is required");
  if (cfg.checkpoint.empty()) throw Error(ErrorKind::invalid_argument, "--checkpoint is required");
  const Dataset data = load_dataset(fs::path(cfg.manifest));
  auto sidecar = fs::path(cfg.checkpoint);
  sidecar += ".json";
  std::vector<std::uint32_t> classes;
  {
    std::ifstream in(sidecar);
    if (!in) throw Error(ErrorKind::io_failure, "cannot open " + sidecar.string());
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::schema_violation, sidecar.string() + " is not JSON");
    classes = j.value("classes", std::vector<std::uint32_t>{});
  }
  if (classes.empty()) {
    for (std::uint32_t c = 0; c < data.class_count(); ++c) classes.push_back(c);
  }
  for (auto c : classes) {
    if (c >= data.class_count()) throw Error(ErrorKind::label_out_of_range, "checkpoint class index out of range");
  }
  std::vector<std::size_t> rows(classes.begin(), classes.end());
  FeatureMatrix text = data.text_weights.select_rows(rows);
  for (std::size_t i = 0; i < text.rows; ++i) text.labels[i] = static_cast<std::uint32_t>(i);
  const LoadedCheckpoint cp = load_checkpoint(fs::path(cfg.checkpoint), text);
  eval::EvalReport report = eval::evaluate(cp.adapter, query_for(data, classes));
  attach_groups(report, data, classes);
  if (!cfg.out.empty()) {
    prepare_out_dir(cfg.out, force);
    echo_config(cfg);
    write_text(fs::path(cfg.out) / "report.json", eval::report_json(report, class_names(data, classes)));
  }
  out << "test accuracy " << report.overall_acc << "%";
  const auto& g = *report.group_acc;
  auto show = [&](const char* name, const std::optional<double>& v) {
    out << "  " << name << "=" << (v ? eval::format_number(*v) : std::string("n/a"));
  };
  show("many", g.many);
  show("medium", g.medium);
  show("few", g.few);
  out << "\n";
  return kOk;
}

int cmd_ablate(const RunConfig& cfg, bool force, std::ostream& out) {
  cfg.train.validate();
  if (cfg.manifest.empty()) throw Error(ErrorKind::invalid_argument, "--manifest is required");
  const std::vector<std::size_t> shots = cfg.shots.empty() ? std::vector<std::size_t>{2, 4, 8, 16} : cfg.shots;
  if (!cfg.out.empty() && fs::exists(cfg.out) && !fs::is_empty(cfg.out) && !force) {
    throw Error(ErrorKind::invalid_argument, "output directory " + cfg.out + " is not empty; pass --force to overwrite");
  }
  std::vector<double> grid = cfg.grid;
  if (grid.empty()) {
    if (cfg.kind == "alpha") grid = {0.0, 0.01, 0.1, 1.0};
    else if (cfg.kind == "synth-count") grid = {4, 16, 40, 80};
  }

  eval::SweepOptions opts;
  opts.n_way = cfg.ways;
  opts.seeds = seed_list(cfg);
  opts.config = cfg.train;
  opts.threads = thread_budget();

  std::vector<std::size_t> counts;
  if (cfg.kind == "alpha") {
    for (double a : grid)
      if (!(a >= 0.0) || !std::isfinite(a)) throw Error(ErrorKind::invalid_argument, "alpha grid values must be >= 0");
  } else if (cfg.kind == "synth-count") {
    for (double v : grid) {
      if (!(v >= 0.0) || v != std::floor(v)) {
        throw Error(ErrorKind::invalid_argument, "synthetic counts must be non-negative integers");
      }
      counts.push_back(static_cast<std::size_t>(v));
    }
  } else if (cfg.kind != "shots") {
    throw Error(ErrorKind::invalid_argument, "unknown ablation '" + cfg.kind + "'");
  }
  if (cfg.kind != "shots" && grid.empty()) throw Error(ErrorKind::invalid_argument, "--grid is empty");

  const Dataset data = load_dataset(fs::path(cfg.manifest));
  eval::SweepTable table;
  if (cfg.kind == "alpha") table = eval::alpha_ablation(data, grid, shots, opts);
  else if (cfg.kind == "synth-count") table = eval::synth_count_ablation(data, counts, shots, opts);
  else table = eval::shot_sweep(data, shots, opts);

  const std::string text = eval::to_text(table);
  if (!cfg.out.empty()) {
    prepare_out_dir(cfg.out, force);
    echo_config(cfg);
    write_text(fs::path(cfg.out) / (cfg.kind + ".csv"), eval::to_csv(table));
    write_text(fs::path(cfg.out) / (cfg.kind + ".txt"), text);
  }
  out << text;
  return kOk;
}

int cmd_synth_data(const RunConfig& cfg, bool force, std::ostream& out) {
  SynthClusterParams p;
  p.n_way = cfg.ways == 0 ? 10 : cfg.ways;
  p.k_shot = cfg.shots.empty() ? 16 : cfg.shots.front();
  p.k_synth = cfg.synthetic.value_or(80);
  p.n_test = cfg.test_per_class;
  p.dim = cfg.dim;
  p.noise = cfg.noise;
  p.seed = cfg.seed;
  if (!(cfg.shift >= 0.0) || !std::isfinite(cfg.shift)) throw Error(ErrorKind::invalid_argument, "--shift must be >= 0");
  if (p.dim >= 1) p.domain_shift = random_shift(p.dim, cfg.shift, cfg.seed);
  const SynthClusterData data = synth_cluster_dataset(p);
  prepare_out_dir(cfg.out, force);
  echo_config(cfg);
  const auto manifest = write_synth_cluster_dataset(data, cfg.out);
  out << "wrote " << manifest.string() << " (" << p.n_way << " classes, " << p.k_shot << " real + " << p.k_synth
      << " synthetic rows per class, dim " << p.dim << ", shift " << cfg.shift << ")\n";
  return kOk;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  cfg.train.validate();
  if (!(cfg.tolerance > 0.0)) throw Error(ErrorKind::invalid_argument, "--tolerance must be positive");
  const auto instance = train::make_gradcheck_instance(cfg.seed, cfg.train);
  const auto report = train::grad_check(instance, cfg.tolerance);
  out << "checked " << report.coordinates << " key coordinates, max relative error " << report.max_rel_error
      << " (tolerance " << cfg.tolerance << ")\n";
  out << (report.mmd_exercised ? "alignment term: exercised (alpha=" + eval::format_number(cfg.train.alpha) + ")"
                               : std::string("alignment term: skipped (alpha=0)"))
      << "\n";
  if (!report.passed) {
    out << "FAILED at key " << report.worst_key << " coordinate " << report.worst_coord << ": analytic "
        << report.analytic << " vs numeric " << report.numeric << "\n";
    return kCheckFailed;
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cache-adapter training with real/synthetic feature alignment"};
  app.require_subcommand(1);
  std::vector<Apply> appliers;
  Invocation inv;

  auto* train_cmd = app.add_subcommand("train", "train an adapter on one episode and evaluate it");
  {
    FlagBinder b(train_cmd, appliers);
    add_data_flags(b, inv, train_cmd);
    add_train_flags(b);
    b.flag("--export-embeddings", "write support embeddings at the first, middle and last epoch",
           &RunConfig::export_embeddings);
  }
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a saved adapter on the manifest's test split");
  {
    FlagBinder b(eval_cmd, appliers);
    add_data_flags(b, inv, eval_cmd);
    b.add<std::string>("--checkpoint", "checkpoint stem (without .capf/.json)",
                       [](RunConfig& c, const std::string& v) { c.checkpoint = v; });
  }
  auto* ablate_cmd = app.add_subcommand("ablate", "sweep alpha, synthetic count or shots");
  {
    FlagBinder b(ablate_cmd, appliers);
    add_data_flags(b, inv, ablate_cmd);
    add_train_flags(b);
    b.add<std::string>("kind", "alpha | synth-count | shots", [](RunConfig& c, const std::string& v) { c.kind = v; });
    // Taken as strings so that an empty `--grid ""` is an error rather than {0}.
    b.add<std::vector<std::string>>("--grid", "sweep values (comma separated)",
                                    [](RunConfig& c, const std::vector<std::string>& v) {
                                      c.grid.clear();
                                      for (const auto& item : v) {
                                        if (item.empty()) throw Error(ErrorKind::invalid_argument, "--grid is empty");
                                        c.grid.push_back(parse_number(item, "--grid"));
                                      }
                                      if (c.grid.empty()) throw Error(ErrorKind::invalid_argument, "--grid is empty");
                                    })
        ->delimiter(',')
        ->allow_extra_args(false);
  }
  auto* synth_cmd = app.add_subcommand("synth-data", "write a clustered oracle dataset with a domain shift");
  {
    FlagBinder b(synth_cmd, appliers);
    add_data_flags(b, inv, synth_cmd);
    b.add<std::size_t>("--ways", "classes", [](RunConfig& c, std::size_t v) { c.ways = v; });
    b.add<std::vector<std::size_t>>("--shots", "real rows per class",
                                    [](RunConfig& c, const std::vector<std::size_t>& v) { c.shots = v; });
    b.add<std::size_t>("--synthetic", "synthetic rows per class", [](RunConfig& c, std::size_t v) { c.synthetic = v; });
    b.add<std::size_t>("--dim", "embedding dimension", [](RunConfig& c, std::size_t v) { c.dim = v; });
    b.add<std::size_t>("--test", "test rows per class", [](RunConfig& c, std::size_t v) { c.test_per_class = v; });
    b.add<double>("--noise", "expected norm of the per-row noise", [](RunConfig& c, double v) { c.noise = v; });
    b.add<double>("--shift", "norm of the synthetic domain offset", [](RunConfig& c, double v) { c.shift = v; });
  }
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the key gradients");
  {
    FlagBinder b(grad_cmd, appliers);
    grad_cmd->add_option("--config", inv.config_path, "JSON run config (flags override it)");
    b.add<std::uint64_t>("--seed", "instance seed", [](RunConfig& c, std::uint64_t v) { c.seed = v; });
    b.add<double>("--alpha", "alignment loss coefficient", [](RunConfig& c, double v) { c.train.alpha = v; });
    b.add<double>("--beta", "affinity sharpness", [](RunConfig& c, double v) { c.train.beta = v; });
    b.add<double>("--residual-ratio", "weight of the cache logits", [](RunConfig& c, double v) { c.train.a = v; });
    b.add<double>("--tolerance", "max allowed relative error", [](RunConfig& c, double v) { c.tolerance = v; });
  }

  std::vector<const char*> argv{"cap2aug"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  try {
    RunConfig cfg;
    if (!inv.config_path.empty()) {
      std::ifstream in(inv.config_path);
      if (!in) throw Error(ErrorKind::invalid_argument, "cannot open config " + inv.config_path);
      nlohmann::json j;
      try {
        in >> j;
        cfg.merge_json(j);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::invalid_argument, inv.config_path + ": " + e.what());
      }
    }
    for (const auto& apply : appliers) apply(cfg);
    cfg.command = chosen->get_name();

    if (chosen == train_cmd) return cmd_train(cfg, inv.force, out);
    if (chosen == eval_cmd) return cmd_evaluate(cfg, inv.force, out);
    if (chosen == ablate_cmd) return cmd_ablate(cfg, inv.force, out);
    if (chosen == synth_cmd) return cmd_synth_data(cfg, inv.force, out);
    return cmd_gradcheck(cfg, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::invalid_argument ? kConfigError : kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
}

}  // namespace cap2aug::cli

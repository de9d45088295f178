#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cap2aug/trainer.hpp"

namespace cap2aug::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kDataError = 2, kCheckFailed = 3 };

// Everything a command needs; echoed into the output directory so a run can
// be replayed with `--config <out>/run_config.json`.
struct RunConfig {
  std::string command;
  std::string kind;  // ablate: alpha | synth-count | shots
  std::string manifest;
  std::string out;
  std::string checkpoint;
  std::uint64_t seed = 0;
  std::size_t repeats = 1;
  std::size_t ways = 0;  // 0 = all classes
  std::vector<std::size_t> shots;
  std::optional<std::size_t> synthetic;  // synthetic rows per class kept in the cache
  std::vector<double> grid;
  bool export_embeddings = false;

  train::TrainConfig train;

  // synth-data
  double shift = 0.8;
  std::size_t dim = 64;
  std::size_t test_per_class = 50;
  double noise = 3.0;

  // gradcheck
  double tolerance = 1e-5;

  nlohmann::ordered_json to_json() const;
  // Overlays the keys present in `j` onto this config.
  void merge_json(const nlohmann::json& j);
};

std::size_t thread_budget();

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cap2aug::cli

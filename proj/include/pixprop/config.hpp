#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pixprop/convnet.hpp"
#include "pixprop/evalkit.hpp"
#include "pixprop/pipeline.hpp"
#include "pixprop/synthdata.hpp"
#include "pixprop/training.hpp"

namespace pixprop {

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  int workers = 1;

  DatasetConfig dataset;  // training split; its seed is derived from `seed`
  int test_scenes = 200;

  std::vector<LayerSpec> trunk = default_trunk();
  double input_shift = 0.5;

  TrainConfig training;  // schedule learning rates apply to the localizers
  double confidence_trunk_lr = 0.001;
  double confidence_head_lr = 0.001;
  std::int64_t area_threshold = 0;  // 0: round(0.0076 w h)
  int balance_samples = kDefaultBalanceSamples;

  PipelineConfig pipeline;
  EvalGrids eval;

  void validate() const;

  DatasetConfig train_split() const;
  DatasetConfig test_split() const;
  std::int64_t effective_area_threshold() const;
  NetworkSpec network_spec(NetworkRole role) const;
  TrainConfig train_config(NetworkRole role) const;

  // Canonical JSON text; identical configs give identical bytes.
  std::string to_json() const;
  std::string hash() const;
};

// Defaults, then the file (if any), then each "dotted.path=value" override in
// order, then the explicit seed/output/workers flags. Values are parsed as
// JSON and fall back to plain strings. Unknown keys, bad types and a missing
// seed raise ConfigError.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          std::span<const std::string> overrides,
                          std::optional<std::uint64_t> seed = std::nullopt,
                          std::optional<std::string> output_dir = std::nullopt,
                          std::optional<int> workers = std::nullopt);

RunConfig parse_run_config(const std::string& json_text);

}  // namespace pixprop

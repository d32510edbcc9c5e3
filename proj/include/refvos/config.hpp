// SPDX-License-Identifier: Apache-2.0
//
// Flat "section.key = value" run configuration. Blank lines and lines
// starting with '#' are ignored; unknown or repeated keys are errors.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "refvos/model.hpp"
#include "refvos/synthetic.hpp"
#include "refvos/training.hpp"

namespace refvos {

struct DataConfig {
  std::string root;  // dataset directory; empty means generate synthetically
  int clips = 4;
  SyntheticSpec synthetic;  // seed is derived from train.seed
};

struct EvalConfig {
  double tolerance_px = -1.0;  // negative: ceil(0.8% of the diagonal)
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;

  void validate() const;
  // Synthetic spec with the seed derived from train.seed.
  SyntheticSpec synthetic_spec() const;
};

RunConfig parse_config(const std::string& text);
std::string serialize_config(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

// The "model." section alone, used inside checkpoints.
std::string serialize_model_config(const ModelConfig& cfg);
ModelConfig parse_model_config(const std::string& text);

// Replaces train.seed with $REFVOS_SEED when set. Throws ConfigError when the
// variable is not an unsigned integer.
void apply_seed_override(RunConfig& cfg);

}  // namespace refvos

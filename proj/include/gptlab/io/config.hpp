#pragma once

// Experiment configuration, an INI file:
//
//   [run]       seed, folds
//   [backbone]  kind, feature_width, width, heads, layers, ffn_multiplier,
//               readout, aggregation, rwpe_steps, max_degree, norm_eps
//   [pretrain]  generator | dataset, graphs, min_nodes, max_nodes, holdout,
//               plus the optimizer keys below
//   [task]      generator | dataset, graphs, min_nodes, max_nodes
//   [tune]      mode, prefix_length, layers, token, prompt_init_scale,
//               head_hidden, loss, metric, plus the optimizer keys below
//   [ablate]    axis, depth, lengths, components
//
// Optimizer keys: epochs, warmup_epochs, lr, decay, weight_decay, beta1,
// beta2, eps, batch_size, clip_norm. Under [tune], lr and weight_decay take
// comma separated grids. Unknown sections and keys are rejected.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gptlab/graph/generators.hpp"
#include "gptlab/models/backbone.hpp"
#include "gptlab/prompt/prompt.hpp"
#include "gptlab/train/trainer.hpp"

namespace gptlab::io {

struct DataSpec {
  std::string generator;           // empty when `dataset` is used
  std::filesystem::path dataset;   // graph file
  std::size_t graphs = 0;
  graph::GeneratorOptions options;
};

enum class AblationAxis { kDepth, kLength, kComponent };

AblationAxis parse_axis(const std::string& text);
std::string axis_name(AblationAxis axis);

struct AblationSpec {
  AblationAxis axis = AblationAxis::kComponent;
  std::vector<prompt::LayerInterval> depth;
  std::vector<std::size_t> lengths;
  std::vector<prompt::TuningMode> components{prompt::TuningMode::kLightweight,
                                             prompt::TuningMode::kPrefixOnly,
                                             prompt::TuningMode::kDeepGpt};
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t folds = 5;
  models::BackboneConfig backbone;

  DataSpec pretrain_data;
  train::TrainOptions pretrain;
  double holdout = 0.1;

  DataSpec task;
  train::TuningSpec tuning;
  std::vector<double> lr_grid;
  std::vector<double> weight_decay_grid;

  AblationSpec ablation;

  // Cross-field checks. Throws ConfigError.
  void validate() const;
};

// `base_dir` resolves relative dataset paths.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace gptlab::io

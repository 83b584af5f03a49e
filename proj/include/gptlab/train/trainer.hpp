#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gptlab/graph/batch.hpp"
#include "gptlab/graph/graph_io.hpp"
#include "gptlab/models/backbone.hpp"
#include "gptlab/prompt/freeze.hpp"
#include "gptlab/prompt/prompt.hpp"
#include "gptlab/train/metrics.hpp"
#include "gptlab/train/optimizer.hpp"
#include "gptlab/train/schedule.hpp"

namespace gptlab::train {

enum class Loss { kBce, kMse };

Loss parse_loss(const std::string& text);
std::string loss_name(Loss loss);

struct TrainOptions {
  Schedule schedule;
  AdamWOptions adamw;
  std::size_t batch_size = 32;
  double clip_norm = 5.0;
  Loss loss = Loss::kBce;
  Metric metric = Metric::kAuroc;

  void validate() const;
};

struct Model {
  models::BackboneConfig backbone;
  models::HeadConfig head;
  prompt::PromptConfig prompt;
  models::ParameterSet params;
};

struct RunRecord {
  std::vector<double> train_loss;
  std::vector<double> eval_metric;    // NaN when there is no eval set
  std::vector<double> epoch_seconds;  // wall clock, not deterministic
  std::size_t best_epoch = 0;         // 0-based
  double final_metric = 0.0;

  std::size_t epochs() const { return train_loss.size(); }
  std::size_t epochs_to_best() const { return best_epoch + 1; }
};

std::vector<graph::EncodedGraph> encode_all(std::span<const graph::GraphSample> samples,
                                            const graph::EncodingOptions& options);

// Inference over `data` in fixed-size chunks, input order preserved.
Tensor predict_samples(const Model& model, std::span<const graph::EncodedGraph> data,
                       std::size_t batch_size);
Tensor graph_embeddings(const Model& model, std::span<const graph::EncodedGraph> data,
                        std::size_t batch_size);

// Trains the parameters `mode` marks trainable, in place. Deterministic for a
// given seed.
RunRecord fit(Model& model, prompt::TuningMode mode, std::span<const graph::EncodedGraph> train,
              std::span<const graph::EncodedGraph> eval, const TrainOptions& options,
              std::uint64_t seed);

double evaluate_model(const Model& model, std::span<const graph::EncodedGraph> data,
                      const TrainOptions& options);

struct TuningSpec {
  prompt::TuningMode mode = prompt::TuningMode::kDeepGpt;
  std::size_t prefix_length = 10;
  prompt::LayerInterval layers{0, 0};
  prompt::TokenPlacement token = prompt::TokenPlacement::kProjected;
  double prompt_init_scale = 0.1;
  models::HeadConfig head;
  TrainOptions train;
};

// The prompt parameters implied by the mode: prefix_only and deepgpt use the
// prefix settings (deepgpt adds the graph token), virtual_node uses
// prefix_length virtual nodes, ft and lightweight use none.
prompt::PromptConfig prompt_config_for(const TuningSpec& spec,
                                       const models::BackboneConfig& backbone);

// Backbone parameters plus a fresh head and prompt drawn from `seed`.
Model make_model(const models::BackboneConfig& backbone_config,
                 const models::ParameterSet& backbone, const TuningSpec& spec,
                 std::size_t outputs, std::uint64_t seed);

// Adds virtual prompt nodes when the mode asks for them.
std::vector<graph::GraphSample> prepare_samples(std::span<const graph::GraphSample> samples,
                                                const prompt::PromptConfig& config);

struct FoldResult {
  RunRecord record;
  models::ParameterSet tuned;  // prompt.* and head.*, plus backbone.* for ft
  std::vector<std::size_t> eval_indices;
};

struct CvResult {
  std::vector<FoldResult> folds;
  prompt::ParamCounts counts;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation across folds
};

CvResult cross_validate(const models::BackboneConfig& backbone_config,
                        const models::ParameterSet& backbone, const TuningSpec& spec,
                        const graph::GraphDataset& dataset, std::size_t folds, std::uint64_t seed,
                        std::size_t parallel);

struct PretrainResult {
  models::ParameterSet backbone;  // backbone.* only
  RunRecord record;
};

// Full training of a fresh backbone plus a temporary regression head. The
// last holdout_fraction of a seeded shuffle is held out for the eval metric.
PretrainResult pretrain(const models::BackboneConfig& config, const graph::GraphDataset& data,
                        const TrainOptions& options, double holdout_fraction, std::uint64_t seed);

}  // namespace gptlab::train

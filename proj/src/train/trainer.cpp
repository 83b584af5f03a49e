#include "gptlab/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "gptlab/core/errors.hpp"
#include "gptlab/core/parallel.hpp"
#include "gptlab/graph/folds.hpp"

namespace gptlab::train {

Loss parse_loss(const std::string& text) {
  if (text == "bce") return Loss::kBce;
  if (text == "mse") return Loss::kMse;
  throw ConfigError("unknown loss '" + text + "' (expected bce or mse)");
}

std::string loss_name(Loss loss) { return loss == Loss::kBce ? "bce" : "mse"; }

void TrainOptions::validate() const {
  schedule.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (adamw.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
}

std::vector<graph::EncodedGraph> encode_all(std::span<const graph::GraphSample> samples,
                                            const graph::EncodingOptions& options) {
  std::vector<graph::EncodedGraph> out;
  out.reserve(samples.size());
  for (const auto& g : samples) out.push_back(graph::encode(g, options));
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<const graph::EncodedGraph*> pointers(std::span<const graph::EncodedGraph> data,
                                                 std::size_t begin, std::size_t end) {
  std::vector<const graph::EncodedGraph*> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(&data[i]);
  return out;
}

bool never(const std::string&) { return false; }

// Runs `forward` on fixed chunks of `data` and stacks the resulting rows.
template <typename Forward>
Tensor stacked(std::span<const graph::EncodedGraph> data, std::size_t batch_size,
               std::size_t width, Forward forward) {
  Tensor out({data.size(), width});
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    const auto ptrs = pointers(data, begin, end);
    const graph::BatchedGraph batch = graph::batch(ptrs);
    Tape tape;
    const Tensor rows = forward(tape, batch).value();
    std::copy(rows.data().begin(), rows.data().end(), out.raw() + begin * width);
  }
  return out;
}

void stack_labels(std::span<const graph::EncodedGraph> data, std::size_t width, Tensor& labels,
                  std::vector<std::uint8_t>& mask) {
  labels = Tensor({data.size(), width});
  mask.assign(data.size() * width, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& y = data[i].sample.label;
    if (y.size() != width) {
      throw ContractError(fmt::format("sample label arity {} does not match head outputs {}",
                                      y.size(), width));
    }
    for (std::size_t t = 0; t < width; ++t) {
      if (std::isnan(y[t])) continue;
      labels.at(i, t) = y[t];
      mask[i * width + t] = 1;
    }
  }
}

Var loss_of(const Var& out, const Tensor& labels, std::span<const std::uint8_t> mask, Loss loss) {
  if (loss == Loss::kBce) return ops::bce_with_logits(out, labels, mask);
  if (std::find(mask.begin(), mask.end(), 0) != mask.end()) {
    throw ContractError("mse loss does not support missing labels");
  }
  return ops::mse(out, labels);
}

}  // namespace

Tensor predict_samples(const Model& model, std::span<const graph::EncodedGraph> data,
                       std::size_t batch_size) {
  return stacked(data, batch_size, model.head.outputs,
                 [&](Tape& tape, const graph::BatchedGraph& batch) {
                   const models::Bound bound(tape, model.params, never);
                   prompt::PromptHooks hooks(model.prompt, bound);
                   return models::predict(batch, bound, model.backbone, model.head,
                                          model.prompt.empty() ? nullptr : &hooks);
                 });
}

Tensor graph_embeddings(const Model& model, std::span<const graph::EncodedGraph> data,
                        std::size_t batch_size) {
  return stacked(data, batch_size, model.backbone.width,
                 [&](Tape& tape, const graph::BatchedGraph& batch) {
                   const models::Bound bound(tape, model.params, never);
                   prompt::PromptHooks hooks(model.prompt, bound);
                   return models::backbone_forward(batch, bound, model.backbone,
                                                   model.prompt.empty() ? nullptr : &hooks);
                 });
}

double evaluate_model(const Model& model, std::span<const graph::EncodedGraph> data,
                      const TrainOptions& options) {
  Tensor labels;
  std::vector<std::uint8_t> mask;
  stack_labels(data, model.head.outputs, labels, mask);
  return evaluate(options.metric, predict_samples(model, data, options.batch_size), labels, mask);
}

RunRecord fit(Model& model, prompt::TuningMode mode, std::span<const graph::EncodedGraph> train,
              std::span<const graph::EncodedGraph> eval, const TrainOptions& options,
              std::uint64_t seed) {
  options.validate();
  if (train.empty()) throw ContractError("fit: empty training set");
  const std::size_t t = model.head.outputs;
  Tensor train_labels, eval_labels;
  std::vector<std::uint8_t> train_mask, eval_mask;
  stack_labels(train, t, train_labels, train_mask);
  stack_labels(eval, t, eval_labels, eval_mask);

  const prompt::FreezeRegistry registry(mode, model.params);
  AdamW optimizer(options.adamw, registry.trainable_names(), model.params);
  Rng rng(seed);

  // With a frozen backbone and no prompts the graph embeddings never change,
  // so they are computed once and only the head runs per step.
  const bool cached = mode == prompt::TuningMode::kLightweight && model.prompt.empty();
  Tensor train_emb, eval_emb;
  if (cached) {
    train_emb = graph_embeddings(model, train, options.batch_size);
    if (!eval.empty()) eval_emb = graph_embeddings(model, eval, options.batch_size);
  }
  const std::size_t width = model.backbone.width;

  const std::size_t n = train.size(), bs = options.batch_size;
  const std::size_t steps = (n + bs - 1) / bs;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  RunRecord record;
  const bool higher = higher_is_better(options.metric);
  double best = 0.0;
  for (std::size_t epoch = 0; epoch < options.schedule.total_epochs; ++epoch) {
    const auto start = Clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t begin = s * bs, end = std::min(n, begin + bs);
      const std::size_t count = end - begin;
      Tensor labels({count, t});
      std::vector<std::uint8_t> mask(count * t);
      for (std::size_t r = 0; r < count; ++r) {
        const std::size_t i = order[begin + r];
        for (std::size_t c = 0; c < t; ++c) {
          labels.at(r, c) = train_labels.at(i, c);
          mask[r * t + c] = train_mask[i * t + c];
        }
      }
      Tape tape;
      Var out;
      if (cached) {
        Tensor emb({count, width});
        for (std::size_t r = 0; r < count; ++r) {
          const auto src = train_emb.row(order[begin + r]);
          std::copy(src.begin(), src.end(), emb.raw() + r * width);
        }
        const models::Bound bound(tape, model.params.with_prefix("head."), registry.predicate());
        out = models::head_forward(tape.constant(std::move(emb)), bound, model.head);
      } else {
        std::vector<const graph::EncodedGraph*> ptrs;
        for (std::size_t r = begin; r < end; ++r) ptrs.push_back(&train[order[r]]);
        const graph::BatchedGraph batch = graph::batch(ptrs);
        const models::Bound bound(tape, model.params, registry.predicate());
        prompt::PromptHooks hooks(model.prompt, bound);
        out = models::predict(batch, bound, model.backbone, model.head,
                              model.prompt.empty() ? nullptr : &hooks);
      }
      const Var loss = loss_of(out, labels, mask, options.loss);
      Gradients grads = std::move(tape.backward(loss).named());
      clip_global_norm(grads, options.clip_norm);
      const double progress = static_cast<double>(epoch) +
                              static_cast<double>(s) / static_cast<double>(steps);
      optimizer.step(model.params, grads, lr_at(progress, options.schedule));
      loss_sum += loss.value().item() * static_cast<double>(count);
    }
    record.train_loss.push_back(loss_sum / static_cast<double>(n));

    double metric = std::numeric_limits<double>::quiet_NaN();
    if (!eval.empty()) {
      Tensor preds;
      if (cached) {
        Tape tape;
        const models::Bound bound(tape, model.params.with_prefix("head."), never);
        preds = models::head_forward(tape.constant(eval_emb), bound, model.head).value();
      } else {
        preds = predict_samples(model, eval, options.batch_size);
      }
      metric = evaluate(options.metric, preds, eval_labels, eval_mask);
      if (epoch == 0 || (higher ? metric > best : metric < best)) {
        best = metric;
        record.best_epoch = epoch;
      }
    }
    record.eval_metric.push_back(metric);
    record.epoch_seconds.push_back(
        std::chrono::duration<double>(Clock::now() - start).count());
  }
  record.final_metric = record.eval_metric.back();
  return record;
}

prompt::PromptConfig prompt_config_for(const TuningSpec& spec,
                                       const models::BackboneConfig& backbone) {
  using prompt::TuningMode;
  prompt::PromptConfig c;
  switch (spec.mode) {
    case TuningMode::kFull:
    case TuningMode::kLightweight:
      break;
    case TuningMode::kDeepGpt:
      c.graph_token = spec.token == prompt::TokenPlacement::kNone
                          ? prompt::TokenPlacement::kProjected
                          : spec.token;
      [[fallthrough]];
    case TuningMode::kPrefixOnly:
      if (spec.prefix_length == 0) throw ConfigError("prefix modes need prefix_length > 0");
      c.prefix_length = spec.prefix_length;
      c.prompted_layers = spec.layers.layers();
      break;
    case TuningMode::kVirtualNode:
      if (spec.prefix_length == 0) throw ConfigError("virtual_node mode needs prefix_length > 0");
      c.virtual_nodes = spec.prefix_length;
      break;
  }
  c.validate(backbone);
  return c;
}

Model make_model(const models::BackboneConfig& backbone_config,
                 const models::ParameterSet& backbone, const TuningSpec& spec,
                 std::size_t outputs, std::uint64_t seed) {
  Model m;
  m.backbone = backbone_config;
  m.head = spec.head;
  m.head.outputs = outputs;
  m.prompt = prompt_config_for(spec, backbone_config);
  m.params = backbone;
  Rng head_rng(derive_seed(seed, "head"));
  models::init_head(m.params, backbone_config.width, m.head, head_rng);
  Rng prompt_rng(derive_seed(seed, "prompt"));
  prompt::init_prompt(m.params, m.prompt, backbone_config, spec.prompt_init_scale, prompt_rng);
  return m;
}

std::vector<graph::GraphSample> prepare_samples(std::span<const graph::GraphSample> samples,
                                                const prompt::PromptConfig& config) {
  std::vector<graph::GraphSample> out;
  out.reserve(samples.size());
  for (const auto& g : samples) out.push_back(prompt::add_virtual_nodes(g, config.virtual_nodes));
  return out;
}

namespace {

std::vector<graph::EncodedGraph> select(const std::vector<graph::EncodedGraph>& all,
                                        const std::vector<std::size_t>& indices) {
  std::vector<graph::EncodedGraph> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(all[i]);
  return out;
}

}  // namespace

CvResult cross_validate(const models::BackboneConfig& backbone_config,
                        const models::ParameterSet& backbone, const TuningSpec& spec,
                        const graph::GraphDataset& dataset, std::size_t folds, std::uint64_t seed,
                        std::size_t parallel) {
  spec.train.validate();
  if (dataset.feature_width != backbone_config.feature_width) {
    throw ContractError(fmt::format("dataset feature width {} does not match backbone input {}",
                                    dataset.feature_width, backbone_config.feature_width));
  }
  if (spec.train.loss == Loss::kMse && spec.train.metric != Metric::kRmse) {
    throw ConfigError("mse loss pairs with the rmse metric");
  }
  const prompt::PromptConfig prompt_config = prompt_config_for(spec, backbone_config);
  const auto samples = prepare_samples(dataset.samples, prompt_config);
  const auto encoded = encode_all(samples, backbone_config.encodings);
  const graph::DatasetSplit split = graph::make_folds(samples.size(), folds, derive_seed(seed, "folds"));

  CvResult result;
  result.folds.resize(folds);
  parallel_for(folds, worker_count(parallel), [&](std::size_t k) {
    Model model = make_model(backbone_config, backbone, spec, dataset.label_width,
                             derive_seed(seed, "fold-init", k));
    const auto train = select(encoded, split.train_indices(k));
    const auto eval = select(encoded, split.eval_indices(k));
    FoldResult& fr = result.folds[k];
    fr.record = fit(model, spec.mode, train, eval, spec.train, derive_seed(seed, "fold-train", k));
    fr.eval_indices = split.eval_indices(k);
    const prompt::FreezeRegistry registry(spec.mode, model.params);
    for (const auto& [name, value] : model.params) {
      if (spec.mode == prompt::TuningMode::kFull || name.rfind("backbone.", 0) != 0) {
        fr.tuned.add(name, value);
      }
    }
    if (k == 0) result.counts = prompt::count_params(registry);
  });

  double sum = 0.0;
  for (const auto& f : result.folds) sum += f.record.final_metric;
  result.mean = sum / static_cast<double>(folds);
  double sq = 0.0;
  for (const auto& f : result.folds) {
    const double d = f.record.final_metric - result.mean;
    sq += d * d;
  }
  result.stddev = folds > 1 ? std::sqrt(sq / static_cast<double>(folds - 1)) : 0.0;
  return result;
}

PretrainResult pretrain(const models::BackboneConfig& config, const graph::GraphDataset& data,
                        const TrainOptions& options, double holdout_fraction, std::uint64_t seed) {
  config.validate();
  options.validate();
  if (data.samples.size() < 2) throw ContractError("pretrain needs at least two graphs");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout fraction must lie in (0, 1)");
  }
  Model model;
  model.backbone = config;
  model.head.outputs = data.label_width;
  Rng init_rng(derive_seed(seed, "backbone-init"));
  models::init_backbone(model.params, config, init_rng);
  models::init_head(model.params, config.width, model.head, init_rng);

  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(seed, "holdout"));
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto held = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(order.size()))));
  const auto encoded = encode_all(data.samples, config.encodings);
  std::vector<graph::EncodedGraph> train, eval;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < order.size() - held ? train : eval).push_back(encoded[order[i]]);
  }

  PretrainResult result;
  result.record = fit(model, prompt::TuningMode::kFull, train, eval, options,
                      derive_seed(seed, "pretrain"));
  result.backbone = model.params.with_prefix("backbone.");
  return result;
}

}  // namespace gptlab::train

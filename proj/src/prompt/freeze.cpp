#include "gptlab/prompt/freeze.hpp"

#include <algorithm>

#include "gptlab/core/errors.hpp"

namespace gptlab::prompt {

namespace {

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

TuningMode parse_mode(const std::string& text) {
  if (text == "ft") return TuningMode::kFull;
  if (text == "lightweight") return TuningMode::kLightweight;
  if (text == "prefix_only") return TuningMode::kPrefixOnly;
  if (text == "deepgpt") return TuningMode::kDeepGpt;
  if (text == "virtual_node") return TuningMode::kVirtualNode;
  throw ConfigError("unknown tuning mode '" + text +
                    "' (expected ft, lightweight, prefix_only, deepgpt or virtual_node)");
}

std::string mode_name(TuningMode mode) {
  switch (mode) {
    case TuningMode::kFull: return "ft";
    case TuningMode::kLightweight: return "lightweight";
    case TuningMode::kPrefixOnly: return "prefix_only";
    case TuningMode::kDeepGpt: return "deepgpt";
    case TuningMode::kVirtualNode: return "virtual_node";
  }
  return "ft";
}

bool mode_trains(TuningMode mode, const std::string& name) {
  if (starts_with(name, "head.")) return true;
  switch (mode) {
    case TuningMode::kFull: return starts_with(name, "backbone.");
    case TuningMode::kLightweight: return false;
    case TuningMode::kPrefixOnly: return starts_with(name, "prompt.prefix.");
    case TuningMode::kDeepGpt:
      return starts_with(name, "prompt.prefix.") || name == "prompt.token";
    case TuningMode::kVirtualNode: return name == "prompt.virtual";
  }
  return false;
}

FreezeRegistry::FreezeRegistry(TuningMode mode, const models::ParameterSet& params)
    : mode_(mode) {
  for (const auto& [name, value] : params) {
    sizes_[name] = value.numel();
    (mode_trains(mode, name) ? trainable_ : frozen_).push_back(name);
  }
}

FreezeRegistry::FreezeRegistry(TuningMode mode, const models::ShapeMap& shapes) : mode_(mode) {
  for (const auto& [name, shape] : shapes) {
    sizes_[name] = shape_numel(shape);
    (mode_trains(mode, name) ? trainable_ : frozen_).push_back(name);
  }
}

bool FreezeRegistry::trainable(const std::string& name) const {
  if (!sizes_.count(name)) throw ContractError("parameter '" + name + "' is not registered");
  return std::binary_search(trainable_.begin(), trainable_.end(), name);
}

models::TrainablePredicate FreezeRegistry::predicate() const {
  return [this](const std::string& name) { return trainable(name); };
}

std::size_t FreezeRegistry::frozen_count() const {
  std::size_t n = 0;
  for (const auto& name : frozen_) n += sizes_.at(name);
  return n;
}

std::size_t FreezeRegistry::trainable_count() const {
  std::size_t n = 0;
  for (const auto& name : trainable_) n += sizes_.at(name);
  return n;
}

ParamCounts count_params(const FreezeRegistry& registry) {
  ParamCounts c;
  c.frozen = registry.frozen_count();
  c.trainable = registry.trainable_count();
  const std::size_t total = c.frozen + c.trainable;
  c.ratio = total == 0 ? 0.0 : static_cast<double>(c.trainable) / static_cast<double>(total);
  return c;
}

}  // namespace gptlab::prompt

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "gptlab/models/parameters.hpp"

namespace gptlab::prompt {

enum class TuningMode { kFull, kLightweight, kPrefixOnly, kDeepGpt, kVirtualNode };

TuningMode parse_mode(const std::string& text);
std::string mode_name(TuningMode mode);

// Whether `mode` trains the parameter called `name`. The head is trained in
// every mode.
bool mode_trains(TuningMode mode, const std::string& name);

// Total, disjoint split of a parameter set into frozen and trainable names.
class FreezeRegistry {
 public:
  FreezeRegistry(TuningMode mode, const models::ParameterSet& params);
  FreezeRegistry(TuningMode mode, const models::ShapeMap& shapes);

  TuningMode mode() const { return mode_; }
  bool trainable(const std::string& name) const;
  const std::vector<std::string>& frozen_names() const { return frozen_; }
  const std::vector<std::string>& trainable_names() const { return trainable_; }
  models::TrainablePredicate predicate() const;

  std::size_t frozen_count() const;
  std::size_t trainable_count() const;

 private:
  TuningMode mode_;
  std::map<std::string, std::size_t> sizes_;
  std::vector<std::string> frozen_;
  std::vector<std::string> trainable_;
};

struct ParamCounts {
  std::size_t frozen = 0;
  std::size_t trainable = 0;
  double ratio = 0.0;  // trainable / (frozen + trainable)
};

ParamCounts count_params(const FreezeRegistry& registry);

}  // namespace gptlab::prompt

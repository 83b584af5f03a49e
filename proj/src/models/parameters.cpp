#include "gptlab/models/parameters.hpp"

#include "gptlab/core/errors.hpp"

namespace gptlab::models {

void ParameterSet::add(const std::string& name, Tensor value) {
  if (!params_.emplace(name, std::move(value)).second) {
    throw ContractError("duplicate parameter '" + name + "'");
  }
}

void ParameterSet::set(const std::string& name, Tensor value) {
  Tensor& slot = at(name);
  if (slot.shape() != value.shape()) {
    throw ShapeError("parameter '" + name + "' has shape " + shape_string(slot.shape()) +
                     ", got " + shape_string(value.shape()));
  }
  slot = std::move(value);
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

ShapeMap ParameterSet::shapes() const {
  ShapeMap out;
  for (const auto& [name, t] : params_) out[name] = t.shape();
  return out;
}

ParameterSet ParameterSet::with_prefix(const std::string& prefix) const {
  ParameterSet out;
  for (const auto& [name, t] : params_)
    if (name.compare(0, prefix.size(), prefix) == 0) out.params_.emplace(name, t);
  return out;
}

void ParameterSet::merge(const ParameterSet& other) {
  for (const auto& [name, t] : other.params_) params_[name] = t;
}

Bound::Bound(Tape& tape, const ParameterSet& params, const TrainablePredicate& trainable)
    : tape_(&tape) {
  for (const auto& [name, value] : params) {
    vars_.emplace(name, trainable(name) ? tape.variable(value, name) : tape.constant(value));
  }
}

const Var& Bound::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractError("parameter '" + name + "' is not bound");
  return it->second;
}

Tensor random_normal(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace gptlab::models

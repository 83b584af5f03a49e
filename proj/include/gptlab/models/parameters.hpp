#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gptlab/core/random.hpp"
#include "gptlab/core/tape.hpp"
#include "gptlab/core/tensor.hpp"

namespace gptlab::models {

// Parameter names with their shapes, without any storage.
using ShapeMap = std::map<std::string, Shape>;

// Named, ordered collection of parameter tensors.
class ParameterSet {
 public:
  void add(const std::string& name, Tensor value);
  void set(const std::string& name, Tensor value);  // same shape required
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  void erase(const std::string& name) { params_.erase(name); }

  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  // Entries whose name starts with `prefix`.
  ParameterSet with_prefix(const std::string& prefix) const;
  // Copies every entry of `other`, replacing existing ones of the same name.
  void merge(const ParameterSet& other);

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  ShapeMap shapes() const;
  bool operator==(const ParameterSet&) const = default;

 private:
  std::map<std::string, Tensor> params_;
};

using TrainablePredicate = std::function<bool(const std::string&)>;

// A ParameterSet placed on a tape: trainable entries become named variables,
// the rest constants.
class Bound {
 public:
  Bound(Tape& tape, const ParameterSet& params, const TrainablePredicate& trainable);

  const Var& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_;
  std::map<std::string, Var> vars_;
};

Tensor random_normal(Shape shape, double stddev, Rng& rng);

}  // namespace gptlab::models

#pragma once

// Define-by-run reverse-mode differentiation.
//
// A Tape owns every value produced during one forward pass. Operations append
// a node holding the output value, the handles of their inputs, and a
// backward closure. backward() walks the nodes in reverse insertion order,
// which is a valid reverse topological order since inputs always precede the
// nodes that consume them.

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gptlab/core/tensor.hpp"

namespace gptlab {

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// What a backward closure sees. input_grads[i] is null when input i does not
// require a gradient; otherwise closures must accumulate (+=) into it.
struct BackwardContext {
  const Tensor& grad_output;
  const Tensor& output;
  std::span<const Tensor* const> inputs;
  std::span<Tensor* const> input_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

class GradientMap {
 public:
  bool contains(const std::string& name) const { return named_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  const Tensor* find(const Var& v) const;
  const Tensor& of(const Var& v) const;

  std::vector<std::string> names() const;
  std::size_t size() const { return named_.size(); }

  std::map<std::string, Tensor>& named() { return named_; }
  const std::map<std::string, Tensor>& named() const { return named_; }

 private:
  friend class Tape;
  std::map<std::string, Tensor> named_;
  std::map<std::size_t, Tensor> by_node_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never receives a gradient.
  Var constant(Tensor value);
  // Leaf that receives a gradient. Named leaves are reported by name in the
  // gradient map; names must be unique per tape.
  Var variable(Tensor value, std::string name = {});

  // Appends an operation output. The node requires a gradient iff any input
  // does; otherwise the backward closure is dropped.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  // Every requires_grad leaf gets an entry, zero if the loss does not depend
  // on it. May be called repeatedly; each call is independent.
  GradientMap backward(const Var& loss) const;

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const std::vector<std::size_t>& inputs_of(std::size_t id) const {
    return nodes_.at(id).inputs;
  }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::string name;
    bool requires_grad = false;
    bool leaf = false;
  };

  std::deque<Node> nodes_;
  std::map<std::string, std::size_t> names_;
};

}  // namespace gptlab

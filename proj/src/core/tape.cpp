#include "gptlab/core/tape.hpp"

#include <optional>

#include "gptlab/core/errors.hpp"

namespace gptlab {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const {
  if (tape_ == nullptr) throw ContractError("use of an unbound Var");
  return tape_->requires_grad(id_);
}

const Tensor& GradientMap::at(const std::string& name) const {
  auto it = named_.find(name);
  if (it == named_.end()) throw ContractError("no gradient for '" + name + "'");
  return it->second;
}

const Tensor* GradientMap::find(const Var& v) const {
  auto it = by_node_.find(v.id());
  return it == by_node_.end() ? nullptr : &it->second;
}

const Tensor& GradientMap::of(const Var& v) const {
  const Tensor* g = find(v);
  if (g == nullptr) throw ContractError("no gradient recorded for this value");
  return *g;
}

std::vector<std::string> GradientMap::names() const {
  std::vector<std::string> out;
  out.reserve(named_.size());
  for (const auto& [name, _] : named_) out.push_back(name);
  return out;
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.leaf = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value, std::string name) {
  if (!name.empty()) {
    if (names_.count(name) != 0) {
      throw ContractError("duplicate variable name '" + name + "' on tape");
    }
    names_[name] = nodes_.size();
  }
  Node node;
  node.value = std::move(value);
  node.name = std::move(name);
  node.leaf = true;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.tape() != this) throw ContractError("operation mixes values from different tapes");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

GradientMap Tape::backward(const Var& loss) const {
  if (loss.tape() != this) throw ContractError("backward: loss is not on this tape");
  const Tensor& loss_value = nodes_[loss.id()].value;
  if (loss_value.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_string(loss_value.shape()));
  }

  std::vector<std::optional<Tensor>> grads(loss.id() + 1);
  if (nodes_[loss.id()].requires_grad) {
    grads[loss.id()] = Tensor::filled(loss_value.shape(), 1.0);
  }

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (node.leaf || !node.requires_grad || !grads[id].has_value()) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t in : node.inputs) {
      in_values.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (!grads[in].has_value()) grads[in] = Tensor::zeros(nodes_[in].value.shape());
        in_grads.push_back(&*grads[in]);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    node.backward(BackwardContext{*grads[id], node.value, in_values, in_grads});
    // Interior gradients are no longer needed once propagated.
    grads[id].reset();
  }

  GradientMap out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (!node.leaf || !node.requires_grad) continue;
    Tensor g = (id < grads.size() && grads[id].has_value())
                   ? std::move(*grads[id])
                   : Tensor::zeros(node.value.shape());
    if (!node.name.empty()) out.named_[node.name] = g;
    out.by_node_[id] = std::move(g);
  }
  return out;
}

}  // namespace gptlab

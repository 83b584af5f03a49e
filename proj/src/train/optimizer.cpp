#include "gptlab/train/optimizer.hpp"

#include <cmath>

#include "gptlab/core/errors.hpp"

namespace gptlab::train {

AdamW::AdamW(const AdamWOptions& options, const std::vector<std::string>& trainable,
             const models::ParameterSet& params)
    : options_(options) {
  for (const auto& name : trainable) {
    const Shape& shape = params.at(name).shape();
    state_.emplace(name, Moments{Tensor(shape), Tensor(shape)});
  }
}

void AdamW::step(models::ParameterSet& params, const Gradients& grads, double lr) {
  if (grads.size() != state_.size()) {
    throw ContractError("AdamW: gradients cover " + std::to_string(grads.size()) +
                        " parameters, optimizer tracks " + std::to_string(state_.size()));
  }
  for (const auto& [name, g] : grads) {
    if (!state_.count(name)) throw ContractError("AdamW: unexpected gradient '" + name + "'");
  }
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double decay = 1.0 - lr * options_.weight_decay;
  for (auto& [name, st] : state_) {
    const Tensor& g = grads.at(name);
    Tensor& p = params.at(name);
    if (g.shape() != p.shape()) throw ShapeError("AdamW: gradient shape mismatch for " + name);
    double* w = p.raw();
    double* m = st.m.raw();
    double* v = st.v.raw();
    const double* gr = g.data().data();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      w[i] *= decay;
      m[i] = b1 * m[i] + (1.0 - b1) * gr[i];
      v[i] = b2 * v[i] + (1.0 - b2) * gr[i] * gr[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

double global_norm(const Gradients& grads) {
  double sq = 0.0;
  for (const auto& [_, g] : grads)
    for (double x : g.data()) sq += x * x;
  return std::sqrt(sq);
}

double clip_global_norm(Gradients& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip_global_norm: max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [_, g] : grads)
      for (double& x : g.data()) x *= factor;
  }
  return norm;
}

}  // namespace gptlab::train

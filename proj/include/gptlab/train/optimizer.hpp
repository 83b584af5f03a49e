#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "gptlab/models/parameters.hpp"

namespace gptlab::train {

using Gradients = std::map<std::string, Tensor>;

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// AdamW with bias correction and decoupled weight decay. Moments exist only
// for the parameters named at construction.
class AdamW {
 public:
  AdamW(const AdamWOptions& options, const std::vector<std::string>& trainable,
        const models::ParameterSet& params);

  // `grads` must name exactly the trainable set (ContractError otherwise).
  void step(models::ParameterSet& params, const Gradients& grads, double lr);

  std::size_t steps() const { return steps_; }
  const Tensor& first_moment(const std::string& name) const { return state_.at(name).m; }
  const Tensor& second_moment(const std::string& name) const { return state_.at(name).v; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  AdamWOptions options_;
  std::map<std::string, Moments> state_;
  std::size_t steps_ = 0;
};

double global_norm(const Gradients& grads);
// Rescales every gradient by max_norm / norm when the global norm exceeds
// max_norm. Returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

}  // namespace gptlab::train

#pragma once

#include <cstddef>
#include <string>

namespace gptlab::train {

enum class Decay { kCosine, kLinear };

Decay parse_decay(const std::string& text);
std::string decay_name(Decay decay);

struct Schedule {
  double base_lr = 1e-3;
  std::size_t warmup_epochs = 0;
  std::size_t total_epochs = 100;
  Decay decay = Decay::kCosine;

  void validate() const;  // ConfigError
};

// Learning rate at a (possibly fractional) epoch in [0, total_epochs).
double lr_at(double epoch, const Schedule& schedule);

}  // namespace gptlab::train

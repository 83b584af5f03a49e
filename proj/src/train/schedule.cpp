#include "gptlab/train/schedule.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "gptlab/core/errors.hpp"

namespace gptlab::train {

Decay parse_decay(const std::string& text) {
  if (text == "cosine") return Decay::kCosine;
  if (text == "linear") return Decay::kLinear;
  throw ConfigError("unknown decay '" + text + "' (expected cosine or linear)");
}

std::string decay_name(Decay decay) { return decay == Decay::kCosine ? "cosine" : "linear"; }

void Schedule::validate() const {
  if (total_epochs == 0) throw ConfigError("epochs must be positive");
  if (warmup_epochs >= total_epochs) {
    throw ConfigError(fmt::format("warmup_epochs {} must be below epochs {}", warmup_epochs,
                                  total_epochs));
  }
  if (!(base_lr > 0.0)) throw ConfigError("learning rate must be positive");
}

double lr_at(double epoch, const Schedule& s) {
  if (!(epoch >= 0.0) || epoch >= static_cast<double>(s.total_epochs)) {
    throw ContractError(fmt::format("lr_at: epoch {} outside [0, {})", epoch, s.total_epochs));
  }
  const double warmup = static_cast<double>(s.warmup_epochs);
  if (epoch < warmup) return s.base_lr * epoch / warmup;
  const double progress = (epoch - warmup) / (static_cast<double>(s.total_epochs) - warmup);
  if (s.decay == Decay::kCosine) {
    return s.base_lr * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
  }
  return s.base_lr * (1.0 - progress);
}

}  // namespace gptlab::train

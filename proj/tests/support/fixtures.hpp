#pragma once

#include <string>
#include <vector>

#include "gptlab/graph/generators.hpp"
#include "gptlab/models/backbone.hpp"
#include "gptlab/prompt/prompt.hpp"
#include "support/random.hpp"

namespace gptlab::testing {

inline bool frozen_all(const std::string&) { return false; }
inline bool train_all(const std::string&) { return true; }

inline models::BackboneConfig tiny_transformer(std::size_t width = 8, std::size_t layers = 3) {
  models::BackboneConfig c;
  c.feature_width = 3;
  c.width = width;
  c.heads = 2;
  c.layers = layers;
  c.encodings = {4, 4};
  return c;
}

// Backbone and head with randomised biases and norm gains, so no parameter
// sits at a symmetric starting value.
inline models::ParameterSet random_model(const models::BackboneConfig& c, std::uint64_t seed,
                                         std::size_t outputs = 1) {
  models::ParameterSet p;
  Rng rng(seed);
  models::init_backbone(p, c, rng);
  models::init_head(p, c.width, {outputs, false}, rng);
  for (const auto& name : p.names()) {
    if (name.find("bias") == std::string::npos && name.find("gain") == std::string::npos &&
        name.find(".b") == std::string::npos) {
      continue;
    }
    Tensor& t = p.at(name);
    const Tensor r = uniform(t.shape(), rng, -0.5, 0.5);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] += r[i];
  }
  return p;
}

inline std::vector<graph::GraphSample> small_graphs(std::size_t count, std::size_t width,
                                                    std::uint64_t seed, std::size_t lo = 4,
                                                    std::size_t hi = 9) {
  graph::GeneratorOptions go;
  go.feature_width = width;
  go.min_nodes = lo;
  go.max_nodes = hi;
  return graph::gen_pretext(count, go, seed);
}

}  // namespace gptlab::testing

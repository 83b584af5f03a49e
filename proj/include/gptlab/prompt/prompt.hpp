#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gptlab/core/random.hpp"
#include "gptlab/graph/graph.hpp"
#include "gptlab/models/backbone.hpp"

namespace gptlab::prompt {

enum class TokenPlacement {
  kNone,
  kProjected,  // width d, added after the input projection (default)
  kRaw,        // raw feature width, added before the projection
};

TokenPlacement parse_placement(const std::string& text);
std::string placement_name(TokenPlacement placement);

// Inclusive contiguous layer range.
struct LayerInterval {
  std::size_t first = 0;
  std::size_t last = 0;

  std::vector<std::size_t> layers() const;
  std::string to_string() const;  // "a-b"
};

// Accepts "a-b" or a single index "a".
LayerInterval parse_interval(const std::string& text);

// Shape of the prompt parameters. The tensors themselves live in a
// ParameterSet under prompt.token, prompt.prefix.<layer> and prompt.virtual.
struct PromptConfig {
  TokenPlacement graph_token = TokenPlacement::kNone;
  std::size_t prefix_length = 0;
  std::vector<std::size_t> prompted_layers;  // sorted, unique
  std::size_t virtual_nodes = 0;

  // Throws ConfigError when inconsistent with the backbone.
  void validate(const models::BackboneConfig& backbone) const;
  bool empty() const {
    return graph_token == TokenPlacement::kNone && prompted_layers.empty() && virtual_nodes == 0;
  }
  bool prompts_layer(std::size_t layer) const;
};

inline constexpr const char* kTokenName = "prompt.token";
inline constexpr const char* kVirtualName = "prompt.virtual";
std::string prefix_name(std::size_t layer);

// Adds the prompt.* entries described by `config`, drawn from N(0, scale).
void init_prompt(models::ParameterSet& params, const PromptConfig& config,
                 const models::BackboneConfig& backbone, double scale, Rng& rng);

models::ShapeMap prompt_shapes(const PromptConfig& config, const models::BackboneConfig& backbone);

// x + p on rows whose mask entry is set.
Var apply_graph_prompt(const Var& x, const Var& p, std::span<const std::uint8_t> node_mask);

// Inserts `slots` leading rows into every batch block. The new rows are zero,
// join the attention set of their sample in both directions and are never read
// out.
Var extend_sequence(const Var& h, std::size_t slots, models::SequenceState& state);

// Overwrites the prefix slots of every block with the rows of `prefix`.
Var inject_prefix(const Var& h, const Var& prefix, std::size_t layer, const PromptConfig& config,
                  const models::SequenceState& state);

// Appends `count` prompt nodes with zero features, each joined to every
// original node. Their embeddings are supplied by PromptHooks.
graph::GraphSample add_virtual_nodes(const graph::GraphSample& g, std::size_t count);

// Applies graph token, prefix and virtual-node prompts during a forward pass.
class PromptHooks : public models::ForwardHooks {
 public:
  PromptHooks(const PromptConfig& config, const models::Bound& params);

  Var on_raw_features(const Var& x, const models::SequenceState& state) override;
  Var on_projected(const Var& h, models::SequenceState& state) override;
  Var before_layer(std::size_t layer, const Var& h, models::SequenceState& state) override;

 private:
  const PromptConfig& config_;
  const models::Bound& params_;
};

}  // namespace gptlab::prompt

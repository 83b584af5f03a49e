#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gptlab/core/ops.hpp"
#include "gptlab/core/random.hpp"
#include "gptlab/graph/batch.hpp"
#include "gptlab/models/parameters.hpp"

namespace gptlab::models {

enum class BackboneKind { kTransformer, kMpgnn };
enum class Readout { kSum, kMean };

BackboneKind parse_backbone_kind(const std::string& text);
std::string backbone_kind_name(BackboneKind kind);
Readout parse_readout(const std::string& text);
std::string readout_name(Readout mode);
ops::Aggregation parse_aggregation(const std::string& text);
std::string aggregation_name(ops::Aggregation mode);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::kTransformer;
  std::size_t feature_width = 4;  // raw node feature width
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t layers = 6;
  std::size_t ffn_multiplier = 4;
  Readout readout = Readout::kMean;
  ops::Aggregation aggregation = ops::Aggregation::kSum;
  graph::EncodingOptions encodings{};
  double norm_eps = 1e-5;

  // Throws ConfigError.
  void validate() const;
  std::size_t head_width() const { return width / heads; }
  // Rows of the input projection: raw features followed by RWPE columns.
  std::size_t input_width() const { return feature_width + encodings.rwpe_steps; }
  // Canonical text of everything that determines parameter shapes.
  std::string canonical() const;
  std::uint64_t fingerprint() const;
};

struct HeadConfig {
  std::size_t outputs = 1;
  bool hidden_layer = false;
};

// Adds backbone.* entries.
void init_backbone(ParameterSet& params, const BackboneConfig& config, Rng& rng);
// Adds head.* entries for a head reading width-wide graph embeddings.
void init_head(ParameterSet& params, std::size_t width, const HeadConfig& config, Rng& rng);

// The names and shapes init_backbone / init_head would create.
ShapeMap backbone_shapes(const BackboneConfig& config);
ShapeMap head_shapes(std::size_t width, const HeadConfig& config);

std::string layer_prefix(std::size_t layer);

// Row layout of the node sequence as it flows through the layers. Rows are
// batch blocks of seq_len; a block starts with `prefix_slots` prompt slots
// followed by the sample's nodes and then padding.
struct SequenceState {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::size_t prefix_slots = 0;
  std::shared_ptr<ops::AttentionLayout> layout;
  ops::IndexGroups readout_groups;     // per sample: rows of original nodes
  ops::IndexGroups neighborhoods;      // per row: itself and its neighbors
  std::vector<std::uint8_t> original;  // per row: original (non-prompt) node
  std::vector<std::size_t> original_counts;
  std::vector<std::size_t> prompt_nodes;

  std::size_t node_row(std::size_t b, std::size_t i) const {
    return b * seq_len + prefix_slots + i;
  }
};

SequenceState initial_state(const graph::BatchedGraph& batch);

// Extension points used by prompting schemes.
class ForwardHooks {
 public:
  virtual ~ForwardHooks() = default;
  // Raw node features [B*N x feature_width] before projection.
  virtual Var on_raw_features(const Var& x, const SequenceState&) { return x; }
  // Node embeddings right after the input projection and encodings.
  virtual Var on_projected(const Var& h, SequenceState&) { return h; }
  // Input to layer `layer`; may reshape the sequence through the state.
  virtual Var before_layer(std::size_t /*layer*/, const Var& h, SequenceState&) { return h; }
};

Var transformer_layer(const Var& x, const SequenceState& state, const Bound& params,
                      const std::string& prefix, const BackboneConfig& config);
Var mpgnn_layer(const Var& h, const ops::IndexGroups& neighborhoods, const Bound& params,
                const std::string& prefix, ops::Aggregation mode);

// Groups row indices of each batch block whose mask entry is set.
ops::IndexGroups readout_groups(std::span<const std::uint8_t> row_mask, std::size_t batch,
                                std::size_t seq_len);
Var readout(const Var& h, const ops::IndexGroups& groups, Readout mode);

// Graph embeddings [B x width].
Var backbone_forward(const graph::BatchedGraph& batch, const Bound& params,
                     const BackboneConfig& config, ForwardHooks* hooks = nullptr);
// Head outputs [B x outputs] (logits or regression values).
Var head_forward(const Var& embeddings, const Bound& params, const HeadConfig& config);

Var predict(const graph::BatchedGraph& batch, const Bound& params, const BackboneConfig& config,
            const HeadConfig& head, ForwardHooks* hooks = nullptr);

}  // namespace gptlab::models

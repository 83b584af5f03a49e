#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gptlab/core/tensor.hpp"
#include "gptlab/graph/graph.hpp"

namespace gptlab::graph {

struct EncodingOptions {
  std::size_t rwpe_steps = 8;
  std::size_t max_degree = 8;
};

// A sample with its structural encodings, computed once from the original
// graph (prompt nodes, if any, get zero encodings and degree 0).
struct EncodedGraph {
  GraphSample sample;
  Tensor positional;                // [num_nodes x rwpe_steps]
  std::vector<std::size_t> degree;  // clamped
};

EncodedGraph encode(const GraphSample& g, const EncodingOptions& options);

// Zero-padded batch. Position (b, i) lives at flat row b * max_nodes + i.
struct BatchedGraph {
  std::size_t batch_size = 0;
  std::size_t max_nodes = 0;
  std::size_t feature_width = 0;
  std::size_t label_width = 0;

  Tensor features;    // [B x N x feature_width]
  Tensor positional;  // [B x N x rwpe_steps]
  std::vector<std::size_t> degree;           // [B*N], 0 on padding
  std::vector<std::uint8_t> node_mask;       // [B*N] real positions
  std::vector<std::uint8_t> readout_mask;    // [B*N] original nodes only
  std::vector<std::uint8_t> attn_mask;       // [B*N*N] outer AND of node_mask
  std::vector<std::vector<std::vector<std::size_t>>> adjacency;  // local indices
  std::vector<std::size_t> node_counts;      // n_b, prompt nodes included
  std::vector<std::size_t> prompt_nodes;     // per sample
  Tensor labels;                             // [B x label_width], NaN -> 0
  std::vector<std::uint8_t> label_mask;      // [B*label_width], 0 where missing

  std::size_t row(std::size_t b, std::size_t i) const { return b * max_nodes + i; }
};

// All samples must share feature width and label arity (ContractError).
// Output order follows input order.
BatchedGraph batch(std::span<const EncodedGraph* const> graphs);
BatchedGraph batch(std::span<const GraphSample> graphs, const EncodingOptions& options);

}  // namespace gptlab::graph

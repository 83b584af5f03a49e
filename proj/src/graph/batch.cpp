#include "gptlab/graph/batch.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gptlab/core/errors.hpp"
#include "gptlab/graph/encodings.hpp"

namespace gptlab::graph {

EncodedGraph encode(const GraphSample& g, const EncodingOptions& options) {
  g.validate();
  EncodedGraph out;
  out.sample = g;
  const GraphSample base = g.original();
  out.positional = Tensor({g.num_nodes, options.rwpe_steps});
  out.degree.assign(g.num_nodes, 0);
  // Zero steps or zero max degree disables the corresponding encoding.
  if (options.rwpe_steps > 0) {
    const Tensor pe = rwpe(base, options.rwpe_steps);
    std::copy(pe.data().begin(), pe.data().end(), out.positional.raw());
  }
  if (options.max_degree > 0) {
    const std::vector<std::size_t> deg = degree_encoding(base, options.max_degree);
    std::copy(deg.begin(), deg.end(), out.degree.begin());
  }
  return out;
}

BatchedGraph batch(std::span<const EncodedGraph* const> graphs) {
  BatchedGraph out;
  out.batch_size = graphs.size();
  if (graphs.empty()) return out;
  const GraphSample& first = graphs.front()->sample;
  out.feature_width = first.feature_width();
  out.label_width = first.label.size();
  const std::size_t steps = graphs.front()->positional.cols();
  for (const EncodedGraph* eg : graphs) {
    const GraphSample& g = eg->sample;
    if (g.feature_width() != out.feature_width) {
      throw ContractError("batch: feature width " + std::to_string(g.feature_width()) +
                          " differs from " + std::to_string(out.feature_width));
    }
    if (g.label.size() != out.label_width) {
      throw ContractError("batch: label arity " + std::to_string(g.label.size()) +
                          " differs from " + std::to_string(out.label_width));
    }
    if (eg->positional.cols() != steps) throw ContractError("batch: encoding width differs");
    out.max_nodes = std::max(out.max_nodes, g.num_nodes);
  }

  const std::size_t B = out.batch_size, N = out.max_nodes, w = out.feature_width;
  out.features = Tensor({B, N, w});
  out.positional = Tensor({B, N, steps});
  out.degree.assign(B * N, 0);
  out.node_mask.assign(B * N, 0);
  out.readout_mask.assign(B * N, 0);
  out.attn_mask.assign(B * N * N, 0);
  out.labels = Tensor({B, out.label_width});
  out.label_mask.assign(B * out.label_width, 0);

  for (std::size_t b = 0; b < B; ++b) {
    const EncodedGraph& eg = *graphs[b];
    const GraphSample& g = eg.sample;
    const std::size_t n = g.num_nodes;
    std::copy(g.features.data().begin(), g.features.data().end(),
              out.features.raw() + b * N * w);
    std::copy(eg.positional.data().begin(), eg.positional.data().end(),
              out.positional.raw() + b * N * steps);
    for (std::size_t i = 0; i < n; ++i) {
      out.degree[b * N + i] = eg.degree[i];
      out.node_mask[b * N + i] = 1;
      out.readout_mask[b * N + i] = i < g.original_nodes() ? 1 : 0;
      for (std::size_t j = 0; j < n; ++j) out.attn_mask[(b * N + i) * N + j] = 1;
    }
    out.adjacency.push_back(g.neighbors());
    out.node_counts.push_back(n);
    out.prompt_nodes.push_back(g.prompt_nodes);
    for (std::size_t t = 0; t < out.label_width; ++t) {
      const double y = g.label[t];
      const bool present = !std::isnan(y);
      out.labels.at(b, t) = present ? y : 0.0;
      out.label_mask[b * out.label_width + t] = present ? 1 : 0;
    }
  }
  return out;
}

BatchedGraph batch(std::span<const GraphSample> graphs, const EncodingOptions& options) {
  std::vector<EncodedGraph> encoded;
  encoded.reserve(graphs.size());
  for (const GraphSample& g : graphs) encoded.push_back(encode(g, options));
  std::vector<const EncodedGraph*> ptrs;
  for (const EncodedGraph& e : encoded) ptrs.push_back(&e);
  return batch(ptrs);
}

}  // namespace gptlab::graph

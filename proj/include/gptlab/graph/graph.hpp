#pragma once

#include <cstddef>
#include <vector>

#include "gptlab/core/tensor.hpp"

namespace gptlab::graph {

struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  bool operator==(const Edge&) const = default;
};

// Undirected graph with per-node features and an optional label vector.
// Missing entries of a multi-task label are NaN.
//
// Trailing `prompt_nodes` nodes, when non-zero, are virtual prompt nodes added
// by prompt::add_virtual_nodes; they are not part of the original graph.
struct GraphSample {
  std::size_t num_nodes = 0;
  Tensor features;  // [num_nodes x width]
  std::vector<Edge> edges;
  std::vector<double> label;
  std::size_t prompt_nodes = 0;

  std::size_t feature_width() const { return features.rank() == 2 ? features.cols() : 0; }
  std::size_t original_nodes() const { return num_nodes - prompt_nodes; }

  // Endpoints in range, no self-loops, no duplicate undirected edges, feature
  // rows == num_nodes. Throws ValidationError.
  void validate() const;

  // Sorted adjacency lists.
  std::vector<std::vector<std::size_t>> neighbors() const;

  // The graph restricted to its original nodes (drops prompt nodes).
  GraphSample original() const;

  bool operator==(const GraphSample&) const = default;
};

std::vector<std::size_t> degrees(const GraphSample& g);

// Motif statistics used as labels by the generators.
std::size_t count_triangles(const GraphSample& g);
bool has_cycle_of_length(const GraphSample& g, std::size_t length);
std::size_t count_components(const GraphSample& g);

// Relabels node i as perm[i].
GraphSample permute_nodes(const GraphSample& g, const std::vector<std::size_t>& perm);

}  // namespace gptlab::graph

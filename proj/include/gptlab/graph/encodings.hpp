#pragma once

#include <cstddef>
#include <vector>

#include "gptlab/core/tensor.hpp"
#include "gptlab/graph/graph.hpp"

namespace gptlab::graph {

// Random-walk positional encoding: entry (i, s-1) is the probability that a
// uniform random walk from node i is back at i after s steps, s = 1..steps.
// Isolated nodes get a zero row.
Tensor rwpe(const GraphSample& g, std::size_t steps);

// Node degrees clamped to max_degree; indexes the backbone's degree table.
std::vector<std::size_t> degree_encoding(const GraphSample& g, std::size_t max_degree);

}  // namespace gptlab::graph

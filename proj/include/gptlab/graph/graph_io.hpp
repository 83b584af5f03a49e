#pragma once

// Text graph format:
//
//   GPTGRAPH v1 d=<feature width> t=<label width>
//   g <n> <m>
//   <n lines of d decimals>
//   <m lines "e <i> <j>">
//   y <t decimals>
//
// Decimals are written with 17 significant digits so a write/read round
// trip is bit-exact. Missing label entries are written as "nan".

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "gptlab/graph/graph.hpp"

namespace gptlab::graph {

struct GraphDataset {
  std::size_t feature_width = 0;
  std::size_t label_width = 0;
  std::vector<GraphSample> samples;
};

// Malformed text -> ParseError carrying the line number; out-of-range or
// duplicate edges -> ValidationError naming the line.
GraphDataset read_graphs(std::istream& in);
void write_graphs(std::ostream& out, const GraphDataset& dataset);

GraphDataset read_graph_file(const std::filesystem::path& path);
void write_graph_file(const std::filesystem::path& path, const GraphDataset& dataset);

// Infers widths from the first sample (0/0 for an empty list).
GraphDataset make_dataset(std::vector<GraphSample> samples);

}  // namespace gptlab::graph

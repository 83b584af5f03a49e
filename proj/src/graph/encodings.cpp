#include "gptlab/graph/encodings.hpp"

#include <algorithm>

#include "gptlab/core/errors.hpp"

namespace gptlab::graph {

Tensor rwpe(const GraphSample& g, std::size_t steps) {
  if (steps == 0) throw ContractError("rwpe: steps must be at least 1");
  const std::size_t n = g.num_nodes;
  const auto adj = g.neighbors();
  Tensor out({n, steps});
  std::vector<double> mass(n), next(n);
  for (std::size_t start = 0; start < n; ++start) {
    if (adj[start].empty()) continue;
    std::fill(mass.begin(), mass.end(), 0.0);
    mass[start] = 1.0;
    for (std::size_t s = 0; s < steps; ++s) {
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t u = 0; u < n; ++u) {
        if (mass[u] == 0.0) continue;
        const double share = mass[u] / static_cast<double>(adj[u].size());
        for (std::size_t v : adj[u]) next[v] += share;
      }
      mass.swap(next);
      out.at(start, s) = mass[start];
    }
  }
  return out;
}

std::vector<std::size_t> degree_encoding(const GraphSample& g, std::size_t max_degree) {
  if (max_degree == 0) throw ContractError("degree_encoding: max_degree must be at least 1");
  std::vector<std::size_t> deg = degrees(g);
  for (auto& d : deg) d = std::min(d, max_degree);
  return deg;
}

}  // namespace gptlab::graph

#include "gptlab/graph/graph.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <utility>

#include "gptlab/core/errors.hpp"

namespace gptlab::graph {

void GraphSample::validate() const {
  if (features.rank() != 2 || features.rows() != num_nodes) {
    throw ValidationError("feature matrix " + shape_string(features.shape()) +
                          " does not have " + std::to_string(num_nodes) + " rows");
  }
  if (prompt_nodes > num_nodes) throw ValidationError("more prompt nodes than nodes");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const Edge& e : edges) {
    if (e.u >= num_nodes || e.v >= num_nodes) {
      throw ValidationError("edge " + std::to_string(e.u) + " " + std::to_string(e.v) +
                            " out of range for " + std::to_string(num_nodes) + " nodes");
    }
    if (e.u == e.v) throw ValidationError("self-loop on node " + std::to_string(e.u));
    if (!seen.insert(std::minmax(e.u, e.v)).second) {
      throw ValidationError("duplicate edge " + std::to_string(e.u) + " " + std::to_string(e.v));
    }
  }
}

std::vector<std::vector<std::size_t>> GraphSample::neighbors() const {
  std::vector<std::vector<std::size_t>> adj(num_nodes);
  for (const Edge& e : edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());
  return adj;
}

GraphSample GraphSample::original() const {
  if (prompt_nodes == 0) return *this;
  const std::size_t n = original_nodes();
  GraphSample g;
  g.num_nodes = n;
  const std::size_t w = feature_width();
  std::vector<double> feats(features.data().begin(), features.data().begin() + n * w);
  g.features = Tensor({n, w}, std::move(feats));
  for (const Edge& e : edges)
    if (e.u < n && e.v < n) g.edges.push_back(e);
  g.label = label;
  return g;
}

std::vector<std::size_t> degrees(const GraphSample& g) {
  std::vector<std::size_t> deg(g.num_nodes, 0);
  for (const Edge& e : g.edges) {
    ++deg[e.u];
    ++deg[e.v];
  }
  return deg;
}

std::size_t count_triangles(const GraphSample& g) {
  const auto adj = g.neighbors();
  std::size_t count = 0;
  for (std::size_t a = 0; a < g.num_nodes; ++a) {
    for (std::size_t b : adj[a]) {
      if (b <= a) continue;
      for (std::size_t c : adj[b]) {
        if (c <= b) continue;
        if (std::binary_search(adj[a].begin(), adj[a].end(), c)) ++count;
      }
    }
  }
  return count;
}

namespace {

// Depth-first extension of a simple path that starts at its minimum vertex.
bool extend_path(const std::vector<std::vector<std::size_t>>& adj, std::size_t start,
                 std::size_t current, std::size_t depth, std::size_t length,
                 std::vector<std::uint8_t>& on_path) {
  for (std::size_t next : adj[current]) {
    if (depth == length && next == start) return true;
    if (depth == length || next <= start || on_path[next]) continue;
    on_path[next] = 1;
    const bool found = extend_path(adj, start, next, depth + 1, length, on_path);
    on_path[next] = 0;
    if (found) return true;
  }
  return false;
}

}  // namespace

bool has_cycle_of_length(const GraphSample& g, std::size_t length) {
  if (length < 3) return false;
  const auto adj = g.neighbors();
  std::vector<std::uint8_t> on_path(g.num_nodes, 0);
  for (std::size_t s = 0; s < g.num_nodes; ++s) {
    on_path[s] = 1;
    const bool found = extend_path(adj, s, s, 1, length, on_path);
    on_path[s] = 0;
    if (found) return true;
  }
  return false;
}

std::size_t count_components(const GraphSample& g) {
  std::vector<std::size_t> parent(g.num_nodes);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t components = g.num_nodes;
  for (const Edge& e : g.edges) {
    const std::size_t a = find(e.u), b = find(e.v);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return components;
}

GraphSample permute_nodes(const GraphSample& g, const std::vector<std::size_t>& perm) {
  if (perm.size() != g.num_nodes) throw ValidationError("permutation size mismatch");
  GraphSample out = g;
  const std::size_t w = g.feature_width();
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    std::copy_n(g.features.raw() + i * w, w, out.features.raw() + perm[i] * w);
  }
  for (Edge& e : out.edges) e = Edge{perm[e.u], perm[e.v]};
  return out;
}

}  // namespace gptlab::graph

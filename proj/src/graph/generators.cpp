#include "gptlab/graph/generators.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <utility>

#include "gptlab/core/errors.hpp"
#include "gptlab/core/random.hpp"

namespace gptlab::graph {
namespace {

constexpr std::size_t kMaxAttempts = 100000;

using EdgeSet = std::set<std::pair<std::size_t, std::size_t>>;

void check_options(const GeneratorOptions& o) {
  if (o.min_nodes < 4 || o.max_nodes > 64 || o.min_nodes > o.max_nodes) {
    throw ContractError("generator size range must lie within [4, 64]");
  }
  if (o.feature_width == 0) throw ContractError("generator feature width must be positive");
}

std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool connect(EdgeSet& edges, std::size_t a, std::size_t b) {
  if (a == b) return false;
  return edges.insert(std::minmax(a, b)).second;
}

void random_tree(EdgeSet& edges, const std::vector<std::size_t>& nodes, Rng& rng) {
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    connect(edges, nodes[i], nodes[uniform_index(rng, 0, i - 1)]);
  }
}

// Shuffles node ids and attaches uniform features in [-1, 1].
GraphSample finish(std::size_t n, const EdgeSet& edges, std::size_t width, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  GraphSample g;
  g.num_nodes = n;
  g.features = Tensor({n, width});
  std::uniform_real_distribution<double> feature(-1.0, 1.0);
  for (double& v : g.features.data()) v = feature(rng);
  for (const auto& [a, b] : edges) g.edges.push_back(Edge{perm[a], perm[b]});
  std::sort(g.edges.begin(), g.edges.end(), [](const Edge& x, const Edge& y) {
    return std::minmax(x.u, x.v) < std::minmax(y.u, y.v);
  });
  return g;
}

std::vector<std::size_t> iota_nodes(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

void add_random_edges(EdgeSet& edges, std::size_t n, std::size_t count, Rng& rng) {
  for (std::size_t added = 0, guard = 0; added < count && guard < 1000; ++guard) {
    if (connect(edges, uniform_index(rng, 0, n - 1), uniform_index(rng, 0, n - 1))) ++added;
  }
}

void plant_cycle(EdgeSet& edges, std::size_t n, std::size_t length, Rng& rng) {
  std::vector<std::size_t> nodes = iota_nodes(n);
  std::shuffle(nodes.begin(), nodes.end(), rng);
  for (std::size_t i = 0; i < length; ++i) connect(edges, nodes[i], nodes[(i + 1) % length]);
}

GraphSample motif_sample(bool positive, const GeneratorOptions& o, Rng& rng) {
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::size_t n = uniform_index(rng, o.min_nodes, o.max_nodes);
    EdgeSet edges;
    random_tree(edges, iota_nodes(n), rng);
    add_random_edges(edges, n, uniform_index(rng, 1, 3), rng);
    GraphSample g = finish(n, edges, o.feature_width, rng);
    const bool has = has_cycle_of_length(g, 4);
    if (has == positive) {
      g.label = {positive ? 1.0 : 0.0};
      return g;
    }
  }
  throw ContractError("motif-presence generator did not converge");
}

GraphSample community_sample(const GeneratorOptions& o, Rng& rng) {
  const std::size_t max_communities = std::min<std::size_t>(4, o.max_nodes / 3);
  const std::size_t c = uniform_index(rng, 1, max_communities);
  const std::size_t n = uniform_index(rng, std::max(o.min_nodes, 3 * c), o.max_nodes);
  // Sizes: 3 each, remainder spread at random.
  std::vector<std::size_t> sizes(c, 3);
  for (std::size_t extra = n - 3 * c; extra > 0; --extra) ++sizes[uniform_index(rng, 0, c - 1)];
  EdgeSet edges;
  std::size_t offset = 0;
  std::bernoulli_distribution dense(0.5);
  for (std::size_t size : sizes) {
    std::vector<std::size_t> members(size);
    std::iota(members.begin(), members.end(), offset);
    random_tree(edges, members, rng);
    for (std::size_t a = 0; a < size; ++a)
      for (std::size_t b = a + 1; b < size; ++b)
        if (dense(rng)) connect(edges, members[a], members[b]);
    offset += size;
  }
  GraphSample g = finish(n, edges, o.feature_width, rng);
  g.label = {static_cast<double>(c)};
  return g;
}

GraphSample multi_motif_sample(unsigned pattern, const GeneratorOptions& o, Rng& rng) {
  const bool want[3] = {(pattern & 1u) != 0, (pattern & 2u) != 0, (pattern & 4u) != 0};
  const std::size_t lo = std::max<std::size_t>(o.min_nodes, 6);
  if (lo > o.max_nodes) throw ContractError("multi-motif needs graphs of at least 6 nodes");
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::size_t n = uniform_index(rng, lo, o.max_nodes);
    EdgeSet edges;
    random_tree(edges, iota_nodes(n), rng);
    for (std::size_t k = 0; k < 3; ++k)
      if (want[k]) plant_cycle(edges, n, k + 3, rng);
    GraphSample g = finish(n, edges, o.feature_width, rng);
    bool ok = true;
    for (std::size_t k = 0; k < 3 && ok; ++k) ok = has_cycle_of_length(g, k + 3) == want[k];
    if (ok) {
      g.label = {want[0] ? 1.0 : 0.0, want[1] ? 1.0 : 0.0, want[2] ? 1.0 : 0.0};
      return g;
    }
  }
  throw ContractError("multi-motif generator did not converge");
}

}  // namespace

std::vector<GraphSample> gen_pretext(std::size_t count, const GeneratorOptions& options,
                                     std::uint64_t seed) {
  check_options(options);
  Rng rng(seed);
  std::vector<GraphSample> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t n = uniform_index(rng, options.min_nodes, options.max_nodes);
    const double mean_degree = std::uniform_real_distribution<double>(1.5, 5.0)(rng);
    std::bernoulli_distribution edge(std::min(1.0, mean_degree / static_cast<double>(n - 1)));
    EdgeSet edges;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (edge(rng)) connect(edges, a, b);
    GraphSample g = finish(n, edges, options.feature_width, rng);
    g.label = {static_cast<double>(count_triangles(g)) / static_cast<double>(n)};
    out.push_back(std::move(g));
  }
  return out;
}

Task parse_task(std::string_view name) {
  if (name == "motif_presence") return Task::kMotifPresence;
  if (name == "community_count") return Task::kCommunityCount;
  if (name == "multi_motif") return Task::kMultiMotif;
  throw ConfigError("unknown task '" + std::string(name) +
                    "' (expected motif_presence, community_count or multi_motif)");
}

std::string task_name(Task task) {
  switch (task) {
    case Task::kMotifPresence:
      return "motif_presence";
    case Task::kCommunityCount:
      return "community_count";
    case Task::kMultiMotif:
      return "multi_motif";
  }
  return "unknown";
}

TaskKind task_kind(Task task) {
  return task == Task::kCommunityCount ? TaskKind::kRegression : TaskKind::kClassification;
}

std::size_t task_label_width(Task task) { return task == Task::kMultiMotif ? 3 : 1; }

std::vector<GraphSample> gen_downstream(std::size_t count, Task task,
                                        const GeneratorOptions& options, std::uint64_t seed) {
  check_options(options);
  Rng rng(seed);
  std::vector<GraphSample> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    switch (task) {
      case Task::kMotifPresence:
        out.push_back(motif_sample(s % 2 == 1, options, rng));
        break;
      case Task::kCommunityCount:
        out.push_back(community_sample(options, rng));
        break;
      case Task::kMultiMotif:
        out.push_back(multi_motif_sample(static_cast<unsigned>(s % 8), options, rng));
        break;
    }
  }
  return out;
}

}  // namespace gptlab::graph

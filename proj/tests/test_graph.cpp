#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "gptlab/core/errors.hpp"
#include "gptlab/graph/batch.hpp"
#include "gptlab/graph/encodings.hpp"
#include "gptlab/graph/folds.hpp"
#include "gptlab/graph/generators.hpp"
#include "gptlab/graph/graph_io.hpp"
#include "support/random.hpp"

namespace gptlab::graph {
namespace {

GraphSample make_graph(std::size_t n, std::vector<Edge> edges, std::size_t width = 2) {
  GraphSample g;
  g.num_nodes = n;
  g.features = Tensor({n, width});
  for (std::size_t i = 0; i < g.features.numel(); ++i) g.features[i] = 0.1 * static_cast<double>(i);
  g.edges = std::move(edges);
  g.label = {1.0};
  return g;
}

GraphSample complete(std::size_t n) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) e.push_back({i, j});
  return make_graph(n, e);
}

std::vector<std::vector<bool>> adjacency_matrix(const GraphSample& g) {
  std::vector<std::vector<bool>> a(g.num_nodes, std::vector<bool>(g.num_nodes, false));
  for (const Edge& e : g.edges) a[e.u][e.v] = a[e.v][e.u] = true;
  return a;
}

// Brute force over ordered tuples of distinct nodes.
bool brute_cycle(const GraphSample& g, std::size_t len) {
  const auto a = adjacency_matrix(g);
  const std::size_t n = g.num_nodes;
  std::vector<std::size_t> t(len);
  std::function<bool(std::size_t)> rec = [&](std::size_t depth) {
    if (depth == len) return static_cast<bool>(a[t[len - 1]][t[0]]);
    for (std::size_t v = 0; v < n; ++v) {
      if (std::find(t.begin(), t.begin() + depth, v) != t.begin() + depth) continue;
      if (depth > 0 && !a[t[depth - 1]][v]) continue;
      t[depth] = v;
      if (rec(depth + 1)) return true;
    }
    return false;
  };
  return rec(0);
}

std::size_t brute_triangles(const GraphSample& g) {
  const auto a = adjacency_matrix(g);
  std::size_t c = 0;
  for (std::size_t i = 0; i < g.num_nodes; ++i)
    for (std::size_t j = i + 1; j < g.num_nodes; ++j)
      for (std::size_t k = j + 1; k < g.num_nodes; ++k) c += a[i][j] && a[j][k] && a[i][k];
  return c;
}

TEST(GraphSample, ValidationRules) {
  EXPECT_NO_THROW(make_graph(3, {{0, 1}, {1, 2}}).validate());
  EXPECT_THROW(make_graph(3, {{0, 3}}).validate(), ValidationError);
  EXPECT_THROW(make_graph(3, {{1, 1}}).validate(), ValidationError);
  EXPECT_THROW(make_graph(3, {{0, 1}, {1, 0}}).validate(), ValidationError);
  GraphSample bad = make_graph(3, {});
  bad.features = Tensor({2, 2});
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Rwpe, Examples) {
  const Tensor k3 = rwpe(complete(3), 2);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(k3.at(i, 0), 0.0);
    EXPECT_DOUBLE_EQ(k3.at(i, 1), 0.5);
  }
  const Tensor edge = rwpe(make_graph(2, {{0, 1}}), 2);
  EXPECT_EQ(edge, Tensor::matrix({{0, 1}, {0, 1}}));
  const Tensor iso = rwpe(make_graph(3, {{0, 1}}), 4);
  for (std::size_t s = 0; s < 4; ++s) EXPECT_EQ(iso.at(2, s), 0.0);
}

TEST(Rwpe, MatchesDenseMatrixPowers) {
  const GraphSample g = make_graph(5, {{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 4}});
  const auto a = adjacency_matrix(g);
  const std::size_t n = 5, k = 5;
  std::vector<std::vector<double>> p(n, std::vector<double>(n)), m(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0;
    for (std::size_t j = 0; j < n; ++j) deg += a[i][j];
    for (std::size_t j = 0; j < n; ++j) p[i][j] = a[i][j] ? 1.0 / deg : 0.0;
  }
  m = p;
  const Tensor pe = rwpe(g, k);
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(pe.at(i, s), m[i][i], 1e-14);
    auto next = m;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        next[i][j] = 0;
        for (std::size_t l = 0; l < n; ++l) next[i][j] += m[i][l] * p[l][j];
      }
    m = next;
  }
}

TEST(Rwpe, PermutationEquivariant) {
  const auto samples = gen_pretext(5, {}, 3);
  Rng rng(4);
  for (const auto& g : samples) {
    std::vector<std::size_t> perm(g.num_nodes);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Tensor a = rwpe(g, 6), b = rwpe(permute_nodes(g, perm), 6);
    for (std::size_t i = 0; i < g.num_nodes; ++i)
      for (std::size_t s = 0; s < 6; ++s) EXPECT_NEAR(a.at(i, s), b.at(perm[i], s), 1e-15);
  }
}

TEST(DegreeEncoding, Examples) {
  EXPECT_EQ(degree_encoding(complete(3), 8), (std::vector<std::size_t>{2, 2, 2}));
  EXPECT_EQ(degree_encoding(make_graph(3, {{0, 1}, {1, 2}}), 8),
            (std::vector<std::size_t>{1, 2, 1}));
  std::vector<Edge> star;
  for (std::size_t i = 1; i <= 20; ++i) star.push_back({0, i});
  EXPECT_EQ(degree_encoding(make_graph(21, star), 8)[0], 8u);
  EXPECT_THROW(degree_encoding(complete(3), 0), ContractError);
}

TEST(Batch, MasksAndPadding) {
  const std::vector<GraphSample> gs = {make_graph(3, {{0, 1}}), make_graph(5, {{3, 4}})};
  const BatchedGraph b = batch(gs, {});
  EXPECT_EQ(b.max_nodes, 5u);
  for (std::size_t s = 0; s < 2; ++s) {
    const auto begin = b.node_mask.begin() + static_cast<long>(s * 5);
    EXPECT_EQ(std::count(begin, begin + 5, 1), static_cast<long>(gs[s].num_nodes));
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        EXPECT_EQ(b.attn_mask[(s * 5 + i) * 5 + j], b.node_mask[s * 5 + i] && b.node_mask[s * 5 + j]);
  }
  EXPECT_EQ(b.features[0], gs[0].features[0]);
  EXPECT_EQ(b.features[(0 * 5 + 4) * 2], 0.0);  // padding row
  EXPECT_EQ(b.features[(1 * 5 + 4) * 2 + 1], gs[1].features.at(4, 1));

  const BatchedGraph one = batch(std::vector<GraphSample>{gs[1]}, {});
  EXPECT_EQ(one.max_nodes, 5u);
  EXPECT_TRUE(std::all_of(one.node_mask.begin(), one.node_mask.end(), [](auto m) { return m; }));
}

TEST(Batch, HeterogeneousWidthRejected) {
  const std::vector<GraphSample> gs = {make_graph(3, {}, 2), make_graph(3, {}, 3)};
  EXPECT_THROW(batch(gs, {}), ContractError);
}

TEST(Batch, MissingLabelsMasked) {
  GraphSample g = make_graph(2, {{0, 1}});
  g.label = {1.0, std::nan("")};
  const BatchedGraph b = batch(std::vector<GraphSample>{g}, {});
  EXPECT_EQ(b.label_mask, (std::vector<std::uint8_t>{1, 0}));
  EXPECT_EQ(b.labels.at(0, 1), 0.0);
}

TEST(Generators, PretextLabelsAreTriangleDensity) {
  EXPECT_EQ(count_triangles(complete(4)), 4u);
  const auto samples = gen_pretext(40, {}, 11);
  for (const auto& g : samples) {
    g.validate();
    EXPECT_GE(g.num_nodes, 8u);
    EXPECT_LE(g.num_nodes, 16u);
    EXPECT_DOUBLE_EQ(g.label[0], static_cast<double>(brute_triangles(g)) / g.num_nodes);
  }
  EXPECT_EQ(samples, gen_pretext(40, {}, 11));
  EXPECT_NE(samples, gen_pretext(40, {}, 12));
}

TEST(Generators, TreeHasNoMotifs) {
  const GraphSample tree = make_graph(5, {{0, 1}, {0, 2}, {2, 3}, {2, 4}});
  EXPECT_EQ(count_triangles(tree), 0u);
  EXPECT_FALSE(has_cycle_of_length(tree, 4));
  const GraphSample square = make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  EXPECT_TRUE(has_cycle_of_length(square, 4));
  EXPECT_FALSE(has_cycle_of_length(square, 3));
}

TEST(Generators, MotifPresenceBalancedAndVerified) {
  const auto samples = gen_downstream(200, Task::kMotifPresence, {}, 5);
  double positives = 0;
  for (const auto& g : samples) {
    g.validate();
    ASSERT_EQ(g.label.size(), 1u);
    EXPECT_EQ(g.label[0], brute_cycle(g, 4) ? 1.0 : 0.0);
    positives += g.label[0];
  }
  EXPECT_NEAR(positives / 200.0, 0.5, 0.05);
}

TEST(Generators, CommunityCountMatchesComponents) {
  for (const auto& g : gen_downstream(60, Task::kCommunityCount, {}, 6)) {
    EXPECT_EQ(g.label[0], static_cast<double>(count_components(g)));
    EXPECT_GE(g.label[0], 1.0);
    EXPECT_LE(g.label[0], 4.0);
  }
}

TEST(Generators, MultiMotifBalancedAndVerified) {
  const auto samples = gen_downstream(48, Task::kMultiMotif, {}, 7);
  std::vector<double> pos(3, 0.0);
  for (const auto& g : samples) {
    ASSERT_EQ(g.label.size(), 3u);
    for (std::size_t t = 0; t < 3; ++t) {
      EXPECT_EQ(g.label[t], brute_cycle(g, t + 3) ? 1.0 : 0.0) << "task " << t;
      pos[t] += g.label[t];
    }
  }
  for (double p : pos) EXPECT_NEAR(p / 48.0, 0.5, 0.05);
}

TEST(Generators, UnknownTaskAndBadRange) {
  EXPECT_THROW(parse_task("shortest_path"), ConfigError);
  GeneratorOptions o;
  o.min_nodes = 2;
  EXPECT_THROW(gen_pretext(1, o, 0), ContractError);
}

TEST(GraphIo, RoundTripIsExact) {
  auto samples = gen_pretext(10, {}, 21);
  samples[3].label[0] = std::nan("");
  const GraphDataset ds = make_dataset(samples);
  std::stringstream buf;
  write_graphs(buf, ds);
  const GraphDataset back = read_graphs(buf);
  ASSERT_EQ(back.samples.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(back.samples[i].features, samples[i].features);
    EXPECT_EQ(back.samples[i].edges, samples[i].edges);
    if (i == 3) {
      EXPECT_TRUE(std::isnan(back.samples[i].label[0]));
    } else {
      EXPECT_EQ(back.samples[i].label, samples[i].label);
    }
  }
}

TEST(GraphIo, HeaderOnlyIsEmpty) {
  std::stringstream in("GPTGRAPH v1 d=3 t=1\n");
  const GraphDataset ds = read_graphs(in);
  EXPECT_TRUE(ds.samples.empty());
  EXPECT_EQ(ds.feature_width, 3u);
}

TEST(GraphIo, OutOfRangeEdgeNamesLine) {
  std::stringstream in(
      "GPTGRAPH v1 d=1 t=1\n"
      "g 6 1\n0\n0\n0\n0\n0\n0\n"
      "e 5 9\n"
      "y 1\n");
  try {
    read_graphs(in);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 9"), std::string::npos) << e.what();
  }
}

TEST(GraphIo, MalformedLineNamesLine) {
  std::stringstream in("GPTGRAPH v1 d=2 t=1\ng 1 0\n0.5 abc\ny 1\n");
  try {
    read_graphs(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::stringstream bad_header("GRAPHS v2\n");
  EXPECT_THROW(read_graphs(bad_header), ParseError);
}

TEST(Folds, DisjointCoveringBalanced) {
  for (std::size_t count : {10u, 23u, 1000u}) {
    const DatasetSplit s = make_folds(count, 5, 77);
    std::vector<std::size_t> seen(count, 0);
    std::size_t lo = count, hi = 0;
    for (std::size_t f = 0; f < 5; ++f) {
      const auto ev = s.eval_indices(f);
      const auto tr = s.train_indices(f);
      EXPECT_EQ(ev.size() + tr.size(), count);
      for (std::size_t i : ev) ++seen[i];
      lo = std::min(lo, ev.size());
      hi = std::max(hi, ev.size());
    }
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](std::size_t c) { return c == 1; }));
    EXPECT_LE(hi - lo, 1u);
  }
  EXPECT_EQ(make_folds(50, 5, 1).fold_of, make_folds(50, 5, 1).fold_of);
  EXPECT_THROW(make_folds(3, 5, 1), ContractError);
}

}  // namespace
}  // namespace gptlab::graph

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "gptlab/core/errors.hpp"
#include "gptlab/core/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/random.hpp"

namespace gptlab {
namespace {

using testing::check_gradients;
using testing::Inputs;
using testing::uniform;
using testing::Vars;

constexpr double kFdTolerance = 1e-4;

// Reduces any tensor to a scalar through a fixed random weighting so every
// output entry contributes a distinct gradient.
Var weighted_sum(Tape& tape, const Var& x, std::uint64_t seed = 99) {
  Rng rng(seed);
  return ops::sum(ops::mul(x, tape.constant(uniform(x.shape(), rng))));
}

void expect_fd(const Inputs& inputs, const testing::LossFn& fn) {
  const auto report = check_gradients(inputs, fn);
  EXPECT_LE(report.max_rel_error, kFdTolerance) << "worst entry " << report.worst;
  EXPECT_GT(report.checked, 0u);
}

TEST(Tensor, ShapeAndAccess) {
  Tensor t({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  t.at(1, 2) = 5.0;
  EXPECT_EQ(t[5], 5.0);
  EXPECT_THROW(Tensor::vector({1, 2}).rows(), ShapeError);
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
  EXPECT_EQ(t.reshaped({3, 2}).at(2, 1), 5.0);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
}

TEST(Matmul, IdentityAndHandProduct) {
  Tape tape;
  const Var id = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  const Var m = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(ops::matmul(id, m).value(), m.value());
  const Var r = ops::matmul(tape.constant(Tensor::matrix({{1, 2}})),
                            tape.constant(Tensor::matrix({{3}, {4}})));
  EXPECT_EQ(r.value().item(), 11.0);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  Tape tape;
  const Var a = tape.constant(Tensor({2, 3}));
  const Var b = tape.constant(Tensor({2, 3}));
  try {
    ops::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, SumGradientIsRowSumsOfB) {
  Rng rng(1);
  const Tensor a = uniform({3, 4}, rng), b = uniform({4, 2}, rng);
  Tape tape;
  const Var va = tape.variable(a, "a");
  const Var vb = tape.constant(b);
  const GradientMap g = tape.backward(ops::sum(ops::matmul(va, vb)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k)
      EXPECT_DOUBLE_EQ(g.at("a").at(i, k), b.at(k, 0) + b.at(k, 1));
  expect_fd({{"a", a}, {"b", b}}, [](Tape& t, const Vars& v) {
    return weighted_sum(t, ops::matmul(v.at("a"), v.at("b")));
  });
}

TEST(Backward, SumAndQuadratic) {
  Rng rng(2);
  const Tensor x = uniform({2, 3}, rng);
  Tape tape;
  const Var vx = tape.variable(x, "x");
  const GradientMap g1 = tape.backward(ops::sum(vx));
  EXPECT_EQ(g1.at("x"), Tensor::filled({2, 3}, 1.0));
  const Var half = ops::scale(ops::sum(ops::mul(vx, vx)), 0.5);
  const GradientMap g2 = tape.backward(half);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(g2.at("x")[i], x[i]);
}

TEST(Backward, NonScalarLossRejected) {
  Tape tape;
  const Var x = tape.variable(Tensor({2}), "x");
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Backward, ConstantsAbsentAndUnreachedLeavesZero) {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({1, 2}), "x");
  const Var unused = tape.variable(Tensor::vector({3}), "unused");
  const Var c = tape.constant(Tensor::vector({4, 5}));
  const GradientMap g = tape.backward(ops::sum(ops::mul(x, c)));
  EXPECT_EQ(g.size(), 2u);
  EXPECT_EQ(g.at("x"), Tensor::vector({4, 5}));
  EXPECT_EQ(g.at("unused"), Tensor::vector({0}));
  EXPECT_EQ(g.find(c), nullptr);
  (void)unused;
}

TEST(Backward, RepeatedPassesIdentical) {
  Rng rng(3);
  Tape tape;
  const Var x = tape.variable(uniform({3, 3}, rng), "x");
  const Var loss = ops::sum(ops::gelu(ops::matmul(x, x)));
  const GradientMap a = tape.backward(loss);
  const GradientMap b = tape.backward(loss);
  EXPECT_EQ(a.named(), b.named());
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({3}), "x");
  const Var y = ops::add(x, x);
  const GradientMap g = tape.backward(ops::sum(ops::mul(y, x)));  // 2x^2
  EXPECT_DOUBLE_EQ(g.at("x")[0], 12.0);
}

TEST(Tape, DuplicateNamesRejected) {
  Tape tape;
  tape.variable(Tensor::vector({1}), "w");
  EXPECT_THROW(tape.variable(Tensor::vector({1}), "w"), ContractError);
}

TEST(Softmax, Examples) {
  Tape tape;
  const ops::Mask all(3, 1);
  const Var u = ops::softmax_masked(tape.constant(Tensor::matrix({{0, 0, 0}})), all);
  for (double v : u.value().data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);

  const ops::Mask one = {1, 0};
  const Var s = ops::softmax_masked(tape.constant(Tensor::matrix({{0.7, 50.0}})), one);
  EXPECT_EQ(s.value()[0], 1.0);
  EXPECT_EQ(s.value()[1], 0.0);

  const Var r = ops::softmax_masked(tape.constant(Tensor::matrix({{1, 2, 3}})), all);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(r.value()[i], std::exp(i + 1.0) / z, 1e-12);
}

TEST(Softmax, FullyMaskedRowRejected) {
  Tape tape;
  const ops::Mask mask = {1, 1, 0, 0};
  EXPECT_THROW(ops::softmax_masked(tape.constant(Tensor({2, 2})), mask), ContractError);
}

TEST(Softmax, FiniteDifferences) {
  Rng rng(4);
  const ops::Mask mask = {1, 0, 1, 1, 1, 1, 0, 0, 1};
  expect_fd({{"s", uniform({3, 3}, rng)}}, [&](Tape& t, const Vars& v) {
    return weighted_sum(t, ops::softmax_masked(v.at("s"), mask));
  });
}

TEST(LayerNorm, Examples) {
  Tape tape;
  const Var gain = tape.constant(Tensor::filled({2}, 1.0));
  const Var bias = tape.constant(Tensor::zeros({2}));
  const Var c = ops::layer_norm(tape.constant(Tensor::matrix({{3, 3}})), gain, bias, 1e-5);
  EXPECT_EQ(c.value(), Tensor::matrix({{0, 0}}));
  const Var s = ops::layer_norm(tape.constant(Tensor::matrix({{1, -1}})), gain, bias, 1e-14);
  EXPECT_NEAR(s.value()[0], 1.0, 1e-12);
  EXPECT_NEAR(s.value()[1], -1.0, 1e-12);
}

TEST(LayerNorm, FiniteDifferences) {
  Rng rng(5);
  expect_fd({{"x", uniform({3, 5}, rng)}, {"g", uniform({5}, rng)}, {"b", uniform({5}, rng)}},
            [](Tape& t, const Vars& v) {
              return weighted_sum(t, ops::layer_norm(v.at("x"), v.at("g"), v.at("b"), 1e-5));
            });
}

TEST(Elementwise, FiniteDifferences) {
  Rng rng(6);
  const Inputs in{{"a", uniform({2, 3}, rng)}, {"b", uniform({2, 3}, rng)},
                  {"r", uniform({3}, rng)}};
  expect_fd(in, [](Tape& t, const Vars& v) {
    const Var a = v.at("a"), b = v.at("b");
    Var x = ops::add(ops::mul(a, b), ops::sub(a, ops::scale(b, 0.3)));
    x = ops::add_row(x, v.at("r"));
    return weighted_sum(t, ops::gelu(x));
  });
  const ops::Mask rows = {0, 1};
  expect_fd(in, [&](Tape& t, const Vars& v) {
    return weighted_sum(t, ops::add_row_masked(v.at("a"), v.at("r"), rows));
  });
}

TEST(AddRowMasked, PaddingUntouched) {
  Tape tape;
  const ops::Mask rows = {1, 0};
  const Var x = ops::add_row_masked(tape.constant(Tensor::matrix({{1, 1}, {2, 2}})),
                                    tape.constant(Tensor::vector({10, 20})), rows);
  EXPECT_EQ(x.value(), Tensor::matrix({{11, 21}, {2, 2}}));
}

TEST(Gelu, MatchesErfDefinition) {
  Tape tape;
  const Var g = ops::gelu(tape.constant(Tensor::vector({-2.0, 0.0, 0.5, 3.0})));
  for (std::size_t i = 0; i < 4; ++i) {
    const double x = std::vector<double>{-2.0, 0.0, 0.5, 3.0}[i];
    EXPECT_NEAR(g.value()[i], 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))), 1e-15);
  }
}

TEST(Structure, FiniteDifferences) {
  Rng rng(7);
  const Inputs in{{"a", uniform({2, 3}, rng)}, {"b", uniform({3, 3}, rng)}};
  expect_fd(in, [](Tape& t, const Vars& v) {
    const std::vector<Var> parts = {v.at("a"), v.at("b")};
    const Var cat = ops::concat_rows(parts);
    const Var sl = ops::slice_rows(cat, 1, 3);
    return ops::add(weighted_sum(t, ops::transpose(sl)),
                    weighted_sum(t, ops::reshape(cat, {3, 5}), 7));
  });
}

TEST(Reductions, FiniteDifferences) {
  Rng rng(8);
  const Inputs in{{"x", uniform({4, 3}, rng)}};
  const ops::Mask rows = {1, 0, 1, 1};
  expect_fd(in, [&](Tape& t, const Vars& v) {
    const Var x = v.at("x");
    return ops::add(ops::add(ops::mean(x), weighted_sum(t, ops::masked_mean_rows(x, rows))),
                    ops::add(weighted_sum(t, ops::pool_rows(x, {{0, 2}, {1}}, ops::Pool::kSum)),
                             weighted_sum(t, ops::pool_rows(x, {{3, 1, 0}}, ops::Pool::kMean))));
  });
  Tape tape;
  const Var m = ops::masked_mean_rows(tape.constant(Tensor::matrix({{1, 0}, {9, 9}, {0, 1}})),
                                      ops::Mask{1, 0, 1});
  EXPECT_EQ(m.value(), Tensor::vector({0.5, 0.5}));
  EXPECT_THROW(ops::pool_rows(tape.constant(Tensor({2, 2})), {{}}, ops::Pool::kSum),
               ContractError);
}

TEST(RowMovement, FiniteDifferences) {
  Rng rng(9);
  const Inputs in{{"table", uniform({4, 3}, rng)}, {"src", uniform({2, 3}, rng)}};
  const std::vector<std::size_t> idx = {2, 0, 2, 3};
  const std::vector<ops::RowCopy> copies = {{1, 0}, {3, 1}};
  expect_fd(in, [&](Tape& t, const Vars& v) {
    const Var g = ops::gather_rows(v.at("table"), idx);
    return weighted_sum(t, ops::scatter_rows(g, v.at("src"), copies));
  });
}

TEST(ScatterRows, ReplacesRowsAndRejectsDuplicates) {
  Tape tape;
  const Var base = tape.constant(Tensor::matrix({{1, 1}, {2, 2}, {3, 3}}));
  const Var src = tape.constant(Tensor::matrix({{7, 8}}));
  const std::vector<ops::RowCopy> copies = {{1, 0}};
  EXPECT_EQ(ops::scatter_rows(base, src, copies).value(),
            Tensor::matrix({{1, 1}, {7, 8}, {3, 3}}));
  const std::vector<ops::RowCopy> dup = {{1, 0}, {1, 0}};
  EXPECT_THROW(ops::scatter_rows(base, src, dup), ContractError);
}

TEST(NeighborAggregate, ModesAndGradients) {
  Rng rng(10);
  const ops::IndexGroups nb = {{0, 1}, {1, 0, 2}, {}, {3}};
  for (auto mode : {ops::Aggregation::kSum, ops::Aggregation::kMean, ops::Aggregation::kMax}) {
    expect_fd({{"x", uniform({4, 3}, rng)}}, [&](Tape& t, const Vars& v) {
      return weighted_sum(t, ops::neighbor_aggregate(v.at("x"), nb, mode));
    });
  }
  Tape tape;
  const Var x = tape.constant(Tensor::matrix({{1, 5}, {3, 2}, {0, 0}, {4, 4}}));
  EXPECT_EQ(ops::neighbor_aggregate(x, nb, ops::Aggregation::kMax).value(),
            Tensor::matrix({{3, 5}, {3, 5}, {0, 0}, {4, 4}}));
  EXPECT_EQ(ops::neighbor_aggregate(x, nb, ops::Aggregation::kMean).value().row(1)[0], 4.0 / 3.0);
}

TEST(Attention, PaddedBlocksFiniteDifferences) {
  Rng rng(11);
  auto layout = std::make_shared<ops::AttentionLayout>();
  layout->batch = 2;
  layout->seq_len = 3;
  layout->lengths = {3, 2};
  layout->mask.assign(18, 0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) layout->mask[i * 3 + j] = (i + j) % 3 != 1 ? 1 : 0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) layout->mask[9 + i * 3 + j] = 1;
  const Inputs in{{"q", uniform({6, 2}, rng)}, {"k", uniform({6, 2}, rng)},
                  {"v", uniform({6, 2}, rng)}};
  expect_fd(in, [&](Tape& t, const Vars& v) {
    return weighted_sum(t, ops::attention(v.at("q"), v.at("k"), v.at("v"), layout, 0.7));
  });
  Tape tape;
  const Var out = ops::attention(tape.constant(in.at("q")), tape.constant(in.at("k")),
                                 tape.constant(in.at("v")), layout, 0.7);
  EXPECT_EQ(out.value().at(5, 0), 0.0);  // padding row
}

TEST(Attention, SingleKeyReturnsItsValue) {
  Tape tape;
  auto layout = std::make_shared<ops::AttentionLayout>();
  layout->batch = 1;
  layout->seq_len = 1;
  layout->lengths = {1};
  layout->mask = {1};
  const Var v = tape.constant(Tensor::matrix({{0.25, -3.0}}));
  const Var out = ops::attention(tape.constant(Tensor::matrix({{5, 5}})),
                                 tape.constant(Tensor::matrix({{-1, 2}})), v, layout, 1.0);
  EXPECT_EQ(out.value(), v.value());
}

double naive_bce(double x, double y) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return -(y * std::log(s) + (1.0 - y) * std::log(1.0 - s));
}

TEST(Losses, BceExamplesAndOracle) {
  Tape tape;
  const ops::Mask m1 = {1};
  EXPECT_NEAR(ops::bce_with_logits(tape.constant(Tensor::matrix({{0}})), Tensor::matrix({{1}}), m1)
                  .value()
                  .item(),
              std::log(2.0), 1e-15);
  EXPECT_LT(ops::bce_with_logits(tape.constant(Tensor::matrix({{40}})), Tensor::matrix({{1}}), m1)
                .value()
                .item(),
            1e-15);

  Rng rng(12);
  const Tensor logits = uniform({6, 3}, rng, -4, 4);
  Tensor labels({6, 3});
  ops::Mask mask(18);
  std::bernoulli_distribution coin(0.5), keep(0.8);
  double total = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < 18; ++i) {
    labels[i] = coin(rng) ? 1.0 : 0.0;
    mask[i] = keep(rng) ? 1 : 0;
    if (mask[i]) {
      total += naive_bce(logits[i], labels[i]);
      ++used;
    }
  }
  EXPECT_NEAR(ops::bce_with_logits(tape.constant(logits), labels, mask).value().item(),
              total / used, 1e-10);
  expect_fd({{"z", logits}}, [&](Tape&, const Vars& v) {
    return ops::bce_with_logits(v.at("z"), labels, mask);
  });
  EXPECT_THROW(ops::bce_with_logits(tape.constant(logits), labels, ops::Mask(18, 0)), ContractError);
}

TEST(Losses, MseFiniteDifferences) {
  Rng rng(13);
  const Tensor target = uniform({4, 2}, rng);
  expect_fd({{"p", uniform({4, 2}, rng)}},
            [&](Tape&, const Vars& v) { return ops::mse(v.at("p"), target); });
}

// Every primitive on random inputs in [-1, 1], composed in one expression.
TEST(Property, RandomCompositionsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const Inputs in{{"x", uniform({4, 3}, rng)}, {"w", uniform({3, 3}, rng)},
                    {"g", uniform({3}, rng)}, {"b", uniform({3}, rng)}};
    expect_fd(in, [](Tape& t, const Vars& v) {
      const Var h = ops::gelu(ops::add_row(ops::matmul(v.at("x"), v.at("w")), v.at("b")));
      const Var n = ops::layer_norm(h, v.at("g"), v.at("b"), 1e-5);
      const ops::Mask full(16, 1);
      const Var s = ops::softmax_masked(ops::matmul(n, ops::transpose(n)), full);
      return weighted_sum(t, ops::matmul(s, v.at("x")));
    });
  }
}

}  // namespace
}  // namespace gptlab

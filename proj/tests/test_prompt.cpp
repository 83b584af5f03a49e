#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "gptlab/core/errors.hpp"
#include "gptlab/prompt/freeze.hpp"
#include "gptlab/prompt/prompt.hpp"
#include "gptlab/train/optimizer.hpp"
#include "gptlab/train/trainer.hpp"
#include "support/fixtures.hpp"

namespace gptlab::prompt {
namespace {

using models::BackboneConfig;
using models::Bound;
using models::ParameterSet;
using testing::frozen_all;

// Records the rows entering one layer, after prompting.
class Capture : public PromptHooks {
 public:
  Capture(const PromptConfig& c, const Bound& b, std::size_t layer)
      : PromptHooks(c, b), layer_(layer) {}
  Var before_layer(std::size_t l, const Var& h, models::SequenceState& s) override {
    Var out = PromptHooks::before_layer(l, h, s);
    if (l == layer_) {
      rows = out.value();
      state = s;
    }
    return out;
  }
  // Rows of sample b's original nodes.
  std::vector<std::vector<double>> real_rows(std::size_t b) const {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < state.original_counts[b]; ++i) {
      const auto r = rows.row(state.node_row(b, i));
      out.emplace_back(r.begin(), r.end());
    }
    return out;
  }
  Tensor rows;
  models::SequenceState state;

 private:
  std::size_t layer_;
};

Tensor forward(const std::vector<graph::GraphSample>& gs, const ParameterSet& p,
               const BackboneConfig& c, const PromptConfig& pc) {
  const graph::BatchedGraph b = graph::batch(gs, c.encodings);
  Tape tape;
  const Bound bound(tape, p, frozen_all);
  PromptHooks hooks(pc, bound);
  return models::predict(b, bound, c, {1, false}, &hooks).value();
}

TEST(ApplyGraphPrompt, Examples) {
  Tape tape;
  const Var x = tape.constant(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  const std::vector<std::uint8_t> mask = {1, 1, 0};
  EXPECT_EQ(apply_graph_prompt(x, tape.constant(Tensor::vector({0, 0})), mask).value(),
            x.value());
  const Var zero = tape.constant(Tensor({3, 2}));
  EXPECT_EQ(apply_graph_prompt(zero, tape.constant(Tensor::vector({7, -1})), mask).value(),
            Tensor::matrix({{7, -1}, {7, -1}, {0, 0}}));
}

TEST(ApplyGraphPrompt, RawTokenEqualsFeatureShift) {
  BackboneConfig c;
  c.kind = models::BackboneKind::kMpgnn;
  c.feature_width = 4;
  c.width = 6;
  c.layers = 1;
  c.readout = models::Readout::kSum;
  c.encodings = {3, 3};
  const ParameterSet backbone = testing::random_model(c, 31);
  PromptConfig pc;
  pc.graph_token = TokenPlacement::kRaw;
  Rng rng(32);
  const auto graphs = testing::small_graphs(100, 4, 33, 4, 12);
  double worst = 0.0;
  for (const auto& g : graphs) {
    const Tensor shift = testing::uniform({4}, rng, -2.0, 2.0);
    ParameterSet p = backbone;
    p.add(kTokenName, shift);
    graph::GraphSample moved = g;
    for (std::size_t i = 0; i < g.num_nodes; ++i)
      for (std::size_t j = 0; j < 4; ++j) moved.features.at(i, j) += shift[j];
    worst = std::max(worst, max_abs_diff(forward({g}, p, c, pc), forward({moved}, backbone, c, {})));
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(InjectPrefix, ReplacesLeadingSlots) {
  const BackboneConfig c = testing::tiny_transformer();
  ParameterSet p = testing::random_model(c, 34);
  PromptConfig pc;
  pc.prefix_length = 2;
  pc.prompted_layers = {1, 2};
  Rng rng(35);
  init_prompt(p, pc, c, 1.0, rng);
  const auto gs = testing::small_graphs(3, 3, 36);
  const graph::BatchedGraph b = graph::batch(gs, c.encodings);
  Tape tape;
  const Bound bound(tape, p, frozen_all);
  Capture cap(pc, bound, 2);
  models::backbone_forward(b, bound, c, &cap);
  ASSERT_EQ(cap.state.prefix_slots, 2u);
  const Tensor& prefix = p.at(prefix_name(2));
  for (std::size_t blk = 0; blk < 3; ++blk)
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t j = 0; j < c.width; ++j)
        EXPECT_EQ(cap.rows.at(blk * cap.state.seq_len + r, j), prefix.at(r, j));
  // Readout never sees the slots.
  for (const auto& group : cap.state.readout_groups)
    for (std::size_t row : group) EXPECT_GE(row % cap.state.seq_len, 2u);
}

TEST(InjectPrefix, LeavesOtherRowsAndRejectsMisuse) {
  const BackboneConfig c = testing::tiny_transformer();
  PromptConfig pc;
  pc.prefix_length = 2;
  pc.prompted_layers = {0};
  const auto gs = testing::small_graphs(2, 3, 37);
  const graph::BatchedGraph b = graph::batch(gs, c.encodings);
  models::SequenceState s = models::initial_state(b);
  Rng rng(38);
  Tape tape;
  const Var h = tape.constant(testing::uniform({b.batch_size * b.max_nodes, c.width}, rng));
  const Var prefix = tape.constant(testing::uniform({2, c.width}, rng));
  EXPECT_THROW(inject_prefix(h, prefix, 0, pc, s), ContractError);  // not extended yet
  const Var ext = extend_sequence(h, 2, s);
  EXPECT_THROW(inject_prefix(ext, prefix, 1, pc, s), ContractError);
  const Tensor out = inject_prefix(ext, prefix, 0, pc, s).value();
  for (std::size_t blk = 0; blk < 2; ++blk)
    for (std::size_t i = 0; i < b.max_nodes; ++i)
      for (std::size_t j = 0; j < c.width; ++j)
        EXPECT_EQ(out.at(s.node_row(blk, i), j), h.value().at(b.row(blk, i), j));
}

TEST(InjectPrefix, EmptyLayerSetIsANoOp) {
  const BackboneConfig c = testing::tiny_transformer();
  const ParameterSet p = testing::random_model(c, 39);
  const auto gs = testing::small_graphs(5, 3, 40);
  PromptConfig pc;
  pc.prefix_length = 0;
  const graph::BatchedGraph b = graph::batch(gs, c.encodings);
  Tape tape;
  const Bound bound(tape, p, frozen_all);
  EXPECT_EQ(forward(gs, p, c, pc), models::predict(b, bound, c, {1, false}).value());
}

TEST(InjectPrefix, EarlyPrefixReachesLaterLayers) {
  const BackboneConfig c = testing::tiny_transformer(8, 3);
  ParameterSet p = testing::random_model(c, 41);
  PromptConfig pc;
  pc.prefix_length = 3;
  pc.prompted_layers = {0, 1, 2};
  Rng rng(42);
  init_prompt(p, pc, c, 1.0, rng);
  const auto gs = testing::small_graphs(2, 3, 43);
  const graph::BatchedGraph b = graph::batch(gs, c.encodings);
  const auto layer2 = [&](const ParameterSet& params) {
    Tape tape;
    const Bound bound(tape, params, frozen_all);
    Capture cap(pc, bound, 2);
    models::backbone_forward(b, bound, c, &cap);
    return cap.real_rows(0);
  };
  ParameterSet moved = p;
  moved.at(prefix_name(0))[0] += 0.5;
  const auto before = layer2(p);
  const auto after = layer2(moved);
  for (std::size_t i = 0; i < before.size(); ++i) {
    double delta = 0;
    for (std::size_t j = 0; j < c.width; ++j) delta = std::max(delta, std::abs(before[i][j] - after[i][j]));
    EXPECT_GT(delta, 1e-6) << "node " << i;
  }
}

TEST(VirtualNodes, MatchPrefixOnTransformer) {
  BackboneConfig c = testing::tiny_transformer(8, 2);
  const ParameterSet backbone = testing::random_model(c, 44);
  Rng rng(45);
  const Tensor tokens = testing::uniform({3, c.width}, rng);
  PromptConfig prefix;
  prefix.prefix_length = 3;
  prefix.prompted_layers = {0};
  ParameterSet pp = backbone;
  pp.add(prefix_name(0), tokens);
  PromptConfig virt;
  virt.virtual_nodes = 3;
  ParameterSet vp = backbone;
  vp.add(kVirtualName, tokens);
  const auto gs = testing::small_graphs(6, 3, 46);
  std::vector<graph::GraphSample> augmented;
  for (const auto& g : gs) augmented.push_back(add_virtual_nodes(g, 3));
  EXPECT_LE(max_abs_diff(forward(gs, pp, c, prefix), forward(augmented, vp, c, virt)), 1e-10);
}

TEST(VirtualNodes, ZeroCountIsIdentity) {
  const auto gs = testing::small_graphs(1, 3, 47);
  EXPECT_EQ(add_virtual_nodes(gs[0], 0), gs[0]);
  const graph::GraphSample a = add_virtual_nodes(gs[0], 2);
  EXPECT_EQ(a.num_nodes, gs[0].num_nodes + 2);
  EXPECT_EQ(a.prompt_nodes, 2u);
  EXPECT_EQ(a.edges.size(), gs[0].edges.size() + 2 * gs[0].num_nodes);
  EXPECT_EQ(a.original(), gs[0]);
}

TEST(VirtualNodes, MpgnnTokenReachesEveryNode) {
  BackboneConfig c = testing::tiny_transformer(6, 2);
  c.kind = models::BackboneKind::kMpgnn;
  ParameterSet p = testing::random_model(c, 48);
  PromptConfig pc;
  pc.virtual_nodes = 2;
  Rng rng(49);
  init_prompt(p, pc, c, 1.0, rng);
  std::vector<graph::GraphSample> gs;
  for (const auto& g : testing::small_graphs(3, 3, 50)) gs.push_back(add_virtual_nodes(g, 2));
  const graph::BatchedGraph b = graph::batch(gs, c.encodings);
  const auto layer1 = [&](const ParameterSet& params, std::size_t sample) {
    Tape tape;
    const Bound bound(tape, params, frozen_all);
    Capture cap(pc, bound, 1);
    models::backbone_forward(b, bound, c, &cap);
    return cap.real_rows(sample);
  };
  ParameterSet moved = p;
  moved.at(kVirtualName)[1] += 0.3;
  for (std::size_t s = 0; s < gs.size(); ++s) {
    const auto before = layer1(p, s);
    const auto after = layer1(moved, s);
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NE(before[i], after[i]) << s << ":" << i;
  }
}

TEST(PromptConfig, Validation) {
  const BackboneConfig c = testing::tiny_transformer(8, 3);
  PromptConfig pc;
  pc.prefix_length = 2;
  pc.prompted_layers = {3};
  EXPECT_THROW(pc.validate(c), ConfigError);
  pc.prompted_layers = {};
  EXPECT_THROW(pc.validate(c), ConfigError);
  pc.prompted_layers = {2, 1};
  EXPECT_THROW(pc.validate(c), ConfigError);
  BackboneConfig m = c;
  m.kind = models::BackboneKind::kMpgnn;
  pc.prompted_layers = {0};
  EXPECT_THROW(pc.validate(m), ConfigError);
  EXPECT_EQ(parse_interval("2-4").layers(), (std::vector<std::size_t>{2, 3, 4}));
  EXPECT_EQ(parse_interval("3").to_string(), "3-3");
  EXPECT_THROW(parse_interval("4-2"), ConfigError);
  EXPECT_THROW(parse_interval("a-b"), ConfigError);
}

TEST(Shapes, MatchInitialisation) {
  for (auto kind : {models::BackboneKind::kTransformer, models::BackboneKind::kMpgnn}) {
    BackboneConfig c = testing::tiny_transformer(8, 3);
    c.kind = kind;
    ParameterSet p;
    Rng rng(1);
    models::init_backbone(p, c, rng);
    models::init_head(p, c.width, {3, true}, rng);
    PromptConfig pc;
    pc.graph_token = TokenPlacement::kRaw;
    pc.virtual_nodes = 2;
    init_prompt(p, pc, c, 0.1, rng);
    models::ShapeMap expect = models::backbone_shapes(c);
    expect.merge(models::head_shapes(c.width, {3, true}));
    expect.merge(prompt_shapes(pc, c));
    EXPECT_EQ(p.shapes(), expect);
  }
}

TEST(Freeze, PartitionsByMode) {
  const BackboneConfig c = testing::tiny_transformer(8, 2);
  ParameterSet p = testing::random_model(c, 51);
  PromptConfig pc;
  pc.graph_token = TokenPlacement::kProjected;
  pc.prefix_length = 2;
  pc.prompted_layers = {0, 1};
  pc.virtual_nodes = 1;
  Rng rng(52);
  init_prompt(p, pc, c, 0.1, rng);
  const auto trained = [&](TuningMode m) { return FreezeRegistry(m, p).trainable_names(); };
  const std::vector<std::string> head = {"head.bias", "head.weight"};
  EXPECT_EQ(trained(TuningMode::kLightweight), head);
  EXPECT_EQ(trained(TuningMode::kPrefixOnly),
            (std::vector<std::string>{"head.bias", "head.weight", "prompt.prefix.0", "prompt.prefix.1"}));
  EXPECT_EQ(trained(TuningMode::kDeepGpt),
            (std::vector<std::string>{"head.bias", "head.weight", "prompt.prefix.0", "prompt.prefix.1",
                                      "prompt.token"}));
  EXPECT_EQ(trained(TuningMode::kVirtualNode),
            (std::vector<std::string>{"head.bias", "head.weight", "prompt.virtual"}));
  const FreezeRegistry ft(TuningMode::kFull, p);
  for (const auto& name : ft.frozen_names()) EXPECT_EQ(name.rfind("prompt.", 0), 0u) << name;
  for (auto m : {TuningMode::kFull, TuningMode::kLightweight, TuningMode::kPrefixOnly,
                 TuningMode::kDeepGpt, TuningMode::kVirtualNode}) {
    const FreezeRegistry r(m, p);
    EXPECT_EQ(r.frozen_names().size() + r.trainable_names().size(), p.size());
    EXPECT_EQ(r.frozen_count() + r.trainable_count(), p.scalar_count());
    EXPECT_EQ(parse_mode(mode_name(m)), m);
  }
  EXPECT_THROW(FreezeRegistry(TuningMode::kDeepGpt, p).trainable("nope"), ContractError);
  EXPECT_THROW(parse_mode("full"), ConfigError);
}

TEST(Freeze, HundredDeepGptStepsLeaveBackboneUntouched) {
  const BackboneConfig c = testing::tiny_transformer(8, 3);
  train::TuningSpec spec;
  spec.prefix_length = 3;
  spec.layers = {0, 2};
  const ParameterSet backbone = testing::random_model(c, 53).with_prefix("backbone.");
  train::Model m = train::make_model(c, backbone, spec, 1, 54);
  const FreezeRegistry reg(TuningMode::kDeepGpt, m.params);
  const auto gs = testing::small_graphs(6, 3, 55);
  const graph::BatchedGraph b = graph::batch(gs, c.encodings);
  train::AdamW opt({}, reg.trainable_names(), m.params);
  for (int step = 0; step < 100; ++step) {
    Tape tape;
    const Bound bound(tape, m.params, reg.predicate());
    PromptHooks hooks(m.prompt, bound);
    const Var loss = ops::mse(models::predict(b, bound, c, m.head, &hooks), b.labels);
    train::Gradients g = tape.backward(loss).named();
    ASSERT_EQ(g.size(), reg.trainable_names().size());
    for (const auto& name : reg.trainable_names()) ASSERT_TRUE(g.count(name)) << name;
    train::clip_global_norm(g, 5.0);
    opt.step(m.params, g, 1e-2);
  }
  EXPECT_EQ(m.params.with_prefix("backbone."), backbone);
  EXPECT_NE(m.params.at(prefix_name(1)), train::make_model(c, backbone, spec, 1, 54).params.at(prefix_name(1)));
}

models::ShapeMap deepgpt_shapes(const BackboneConfig& c, std::size_t p_len, std::size_t outputs) {
  train::TuningSpec spec;
  spec.prefix_length = p_len;
  spec.layers = {0, c.layers - 1};
  models::ShapeMap s = models::backbone_shapes(c);
  s.merge(models::head_shapes(c.width, {outputs, false}));
  s.merge(prompt_shapes(train::prompt_config_for(spec, c), c));
  return s;
}

TEST(CountParams, DeskConfig) {
  BackboneConfig c;
  c.width = 64;
  c.layers = 6;
  const ParamCounts counts = count_params(FreezeRegistry(TuningMode::kDeepGpt, deepgpt_shapes(c, 10, 1)));
  EXPECT_EQ(counts.trainable, 3969u);
  // Same numbers from a materialised model.
  train::TuningSpec spec;
  spec.layers = {0, 5};
  ParameterSet backbone;
  Rng rng(56);
  models::init_backbone(backbone, c, rng);
  const train::Model m = train::make_model(c, backbone, spec, 1, 57);
  const ParamCounts real = count_params(FreezeRegistry(TuningMode::kDeepGpt, m.params));
  EXPECT_EQ(real.trainable, counts.trainable);
  EXPECT_EQ(real.frozen, counts.frozen);
  const ParamCounts light = count_params(FreezeRegistry(TuningMode::kLightweight, m.params.shapes()));
  EXPECT_EQ(light.trainable, 65u);
}

TEST(CountParams, LargeConfigAtTenSlots) {
  BackboneConfig c;
  c.width = 768;
  c.heads = 32;
  c.layers = 12;
  const ParamCounts counts = count_params(FreezeRegistry(TuningMode::kDeepGpt, deepgpt_shapes(c, 10, 1)));
  EXPECT_EQ(counts.trainable, 12u * 10 * 768 + 768 + 769);
  EXPECT_LT(counts.ratio, 0.005);
  EXPECT_GT(counts.frozen, 80'000'000u);
}

TEST(DeepGpt, LossDecreasesOnSeparableTask) {
  const BackboneConfig c = testing::tiny_transformer(8, 2);
  const ParameterSet backbone = testing::random_model(c, 58).with_prefix("backbone.");
  auto gs = testing::small_graphs(16, 3, 59);
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const double y = static_cast<double>(i % 2);
    gs[i].label = {y};
    for (std::size_t r = 0; r < gs[i].num_nodes; ++r) gs[i].features.at(r, 0) += 2.0 * y - 1.0;
  }
  const graph::BatchedGraph b = graph::batch(gs, c.encodings);
  std::vector<double> drops;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    train::TuningSpec spec;
    spec.prefix_length = 2;
    spec.layers = {0, 1};
    train::Model m = train::make_model(c, backbone, spec, 1, seed);
    const FreezeRegistry reg(TuningMode::kDeepGpt, m.params);
    train::AdamW opt({}, reg.trainable_names(), m.params);
    double first = 0, last = 0;
    for (int step = 0; step <= 50; ++step) {
      Tape tape;
      const Bound bound(tape, m.params, reg.predicate());
      PromptHooks hooks(m.prompt, bound);
      const Var loss =
          ops::bce_with_logits(models::predict(b, bound, c, m.head, &hooks), b.labels, b.label_mask);
      (step == 0 ? first : last) = loss.value().item();
      if (step == 50) break;
      opt.step(m.params, tape.backward(loss).named(), 1e-2);
    }
    drops.push_back(first - last);
  }
  std::sort(drops.begin(), drops.end());
  EXPECT_GT(drops[2], 0.0);
}

}  // namespace
}  // namespace gptlab::prompt

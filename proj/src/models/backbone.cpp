#include "gptlab/models/backbone.hpp"

#include <cmath>

#include <fmt/format.h>

#include "gptlab/core/errors.hpp"

namespace gptlab::models {

BackboneKind parse_backbone_kind(const std::string& text) {
  if (text == "transformer") return BackboneKind::kTransformer;
  if (text == "mpgnn") return BackboneKind::kMpgnn;
  throw ConfigError("unknown backbone kind '" + text + "' (expected transformer or mpgnn)");
}

std::string backbone_kind_name(BackboneKind kind) {
  return kind == BackboneKind::kTransformer ? "transformer" : "mpgnn";
}

Readout parse_readout(const std::string& text) {
  if (text == "sum") return Readout::kSum;
  if (text == "mean") return Readout::kMean;
  throw ConfigError("unknown readout '" + text + "' (expected sum or mean)");
}

std::string readout_name(Readout mode) { return mode == Readout::kSum ? "sum" : "mean"; }

ops::Aggregation parse_aggregation(const std::string& text) {
  if (text == "sum") return ops::Aggregation::kSum;
  if (text == "mean") return ops::Aggregation::kMean;
  if (text == "max") return ops::Aggregation::kMax;
  throw ConfigError("unknown aggregation '" + text + "' (expected sum, mean or max)");
}

std::string aggregation_name(ops::Aggregation mode) {
  switch (mode) {
    case ops::Aggregation::kSum: return "sum";
    case ops::Aggregation::kMean: return "mean";
    case ops::Aggregation::kMax: return "max";
  }
  return "sum";
}

void BackboneConfig::validate() const {
  if (layers == 0) throw ConfigError("backbone.layers must be at least 1");
  if (width == 0) throw ConfigError("backbone.width must be positive");
  if (feature_width == 0) throw ConfigError("backbone.feature_width must be positive");
  if (kind == BackboneKind::kTransformer) {
    if (heads == 0 || width % heads != 0) {
      throw ConfigError(fmt::format("backbone.width {} is not divisible by heads {}", width, heads));
    }
    if (ffn_multiplier == 0) throw ConfigError("backbone.ffn_multiplier must be positive");
  }
  if (!(norm_eps > 0.0)) throw ConfigError("backbone.norm_eps must be positive");
}

std::string BackboneConfig::canonical() const {
  return fmt::format(
      "kind={};feature_width={};width={};heads={};layers={};ffn={};readout={};agg={};"
      "rwpe={};max_degree={};eps={:.17g}",
      backbone_kind_name(kind), feature_width, width, heads, layers, ffn_multiplier,
      readout_name(readout), aggregation_name(aggregation), encodings.rwpe_steps,
      encodings.max_degree, norm_eps);
}

std::uint64_t BackboneConfig::fingerprint() const { return fnv1a(canonical()); }

std::string layer_prefix(std::size_t layer) { return fmt::format("backbone.layer{}.", layer); }

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  return random_normal({rows, cols}, 1.0 / std::sqrt(static_cast<double>(rows)), rng);
}

void add_norm(ParameterSet& p, const std::string& prefix, std::size_t width) {
  p.add(prefix + "gain", Tensor::filled({width}, 1.0));
  p.add(prefix + "bias", Tensor::zeros({width}));
}

}  // namespace

void init_backbone(ParameterSet& p, const BackboneConfig& c, Rng& rng) {
  c.validate();
  const std::size_t d = c.width;
  p.add("backbone.input.weight", glorot(c.input_width(), d, rng));
  p.add("backbone.input.bias", Tensor::zeros({d}));
  if (c.encodings.max_degree > 0) {
    p.add("backbone.input.degree", random_normal({c.encodings.max_degree + 1, d}, 0.5, rng));
  }
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string pre = layer_prefix(l);
    if (c.kind == BackboneKind::kMpgnn) {
      p.add(pre + "weight", glorot(d, d, rng));
      p.add(pre + "bias", Tensor::zeros({d}));
      continue;
    }
    const std::size_t dq = c.head_width();
    add_norm(p, pre + "ln1.", d);
    for (std::size_t h = 0; h < c.heads; ++h) {
      p.add(pre + fmt::format("attn.query.{}", h), glorot(d, dq, rng));
      p.add(pre + fmt::format("attn.key.{}", h), glorot(d, dq, rng));
      p.add(pre + fmt::format("attn.value.{}", h), glorot(d, dq, rng));
    }
    p.add(pre + "attn.output", glorot(d, d, rng));
    add_norm(p, pre + "ln2.", d);
    const std::size_t hidden = c.ffn_multiplier * d;
    p.add(pre + "ffn.w1", glorot(d, hidden, rng));
    p.add(pre + "ffn.b1", Tensor::zeros({hidden}));
    p.add(pre + "ffn.w2", glorot(hidden, d, rng));
    p.add(pre + "ffn.b2", Tensor::zeros({d}));
  }
  if (c.kind == BackboneKind::kTransformer) add_norm(p, "backbone.final_norm.", d);
}

void init_head(ParameterSet& p, std::size_t width, const HeadConfig& c, Rng& rng) {
  if (c.outputs == 0) throw ConfigError("head outputs must be positive");
  if (c.hidden_layer) {
    p.add("head.hidden.weight", glorot(width, width, rng));
    p.add("head.hidden.bias", Tensor::zeros({width}));
  }
  p.add("head.weight", glorot(width, c.outputs, rng));
  p.add("head.bias", Tensor::zeros({c.outputs}));
}

ShapeMap backbone_shapes(const BackboneConfig& c) {
  c.validate();
  const std::size_t d = c.width;
  ShapeMap s;
  s["backbone.input.weight"] = {c.input_width(), d};
  s["backbone.input.bias"] = {d};
  if (c.encodings.max_degree > 0) s["backbone.input.degree"] = {c.encodings.max_degree + 1, d};
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string pre = layer_prefix(l);
    if (c.kind == BackboneKind::kMpgnn) {
      s[pre + "weight"] = {d, d};
      s[pre + "bias"] = {d};
      continue;
    }
    for (const char* n : {"ln1.gain", "ln1.bias", "ln2.gain", "ln2.bias", "ffn.b2"}) s[pre + n] = {d};
    for (std::size_t h = 0; h < c.heads; ++h) {
      for (const char* n : {"query", "key", "value"}) {
        s[pre + fmt::format("attn.{}.{}", n, h)] = {d, c.head_width()};
      }
    }
    s[pre + "attn.output"] = {d, d};
    s[pre + "ffn.w1"] = {d, c.ffn_multiplier * d};
    s[pre + "ffn.b1"] = {c.ffn_multiplier * d};
    s[pre + "ffn.w2"] = {c.ffn_multiplier * d, d};
  }
  if (c.kind == BackboneKind::kTransformer) {
    s["backbone.final_norm.gain"] = {d};
    s["backbone.final_norm.bias"] = {d};
  }
  return s;
}

ShapeMap head_shapes(std::size_t width, const HeadConfig& c) {
  ShapeMap s;
  if (c.hidden_layer) {
    s["head.hidden.weight"] = {width, width};
    s["head.hidden.bias"] = {width};
  }
  s["head.weight"] = {width, c.outputs};
  s["head.bias"] = {c.outputs};
  return s;
}

SequenceState initial_state(const graph::BatchedGraph& batch) {
  SequenceState s;
  s.batch = batch.batch_size;
  s.seq_len = batch.max_nodes;
  auto layout = std::make_shared<ops::AttentionLayout>();
  layout->batch = batch.batch_size;
  layout->seq_len = batch.max_nodes;
  layout->lengths = batch.node_counts;
  layout->mask = batch.attn_mask;
  s.layout = std::move(layout);
  s.readout_groups = readout_groups(batch.readout_mask, batch.batch_size, batch.max_nodes);
  s.original = batch.readout_mask;
  s.prompt_nodes = batch.prompt_nodes;
  s.neighborhoods.assign(batch.batch_size * batch.max_nodes, {});
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    s.original_counts.push_back(batch.node_counts[b] - batch.prompt_nodes[b]);
    for (std::size_t i = 0; i < batch.node_counts[b]; ++i) {
      auto& nb = s.neighborhoods[batch.row(b, i)];
      nb.push_back(batch.row(b, i));
      for (std::size_t j : batch.adjacency[b][i]) nb.push_back(batch.row(b, j));
    }
  }
  return s;
}

Var transformer_layer(const Var& x, const SequenceState& state, const Bound& p,
                      const std::string& pre, const BackboneConfig& c) {
  const std::size_t dq = c.head_width();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dq));
  const Var a = ops::layer_norm(x, p[pre + "ln1.gain"], p[pre + "ln1.bias"], c.norm_eps);
  const Var& w_out = p[pre + "attn.output"];
  Var attn;
  for (std::size_t h = 0; h < c.heads; ++h) {
    const Var q = ops::matmul(a, p[pre + fmt::format("attn.query.{}", h)]);
    const Var k = ops::matmul(a, p[pre + fmt::format("attn.key.{}", h)]);
    const Var v = ops::matmul(a, p[pre + fmt::format("attn.value.{}", h)]);
    const Var o = ops::attention(q, k, v, state.layout, scale);
    // Concatenating heads then projecting equals summing per-head row blocks.
    const Var part = ops::matmul(o, ops::slice_rows(w_out, h * dq, dq));
    attn = attn.valid() ? ops::add(attn, part) : part;
  }
  const Var x1 = ops::add(x, attn);
  const Var f = ops::layer_norm(x1, p[pre + "ln2.gain"], p[pre + "ln2.bias"], c.norm_eps);
  const Var hidden = ops::gelu(ops::add_row(ops::matmul(f, p[pre + "ffn.w1"]), p[pre + "ffn.b1"]));
  const Var out = ops::add_row(ops::matmul(hidden, p[pre + "ffn.w2"]), p[pre + "ffn.b2"]);
  return ops::add(x1, out);
}

Var mpgnn_layer(const Var& h, const ops::IndexGroups& neighborhoods, const Bound& p,
                const std::string& pre, ops::Aggregation mode) {
  const Var agg = ops::neighbor_aggregate(h, neighborhoods, mode);
  return ops::gelu(ops::add_row(ops::matmul(agg, p[pre + "weight"]), p[pre + "bias"]));
}

ops::IndexGroups readout_groups(std::span<const std::uint8_t> row_mask, std::size_t batch,
                                std::size_t seq_len) {
  if (row_mask.size() != batch * seq_len) throw ShapeError("readout mask size mismatch");
  ops::IndexGroups groups(batch);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < seq_len; ++i)
      if (row_mask[b * seq_len + i]) groups[b].push_back(b * seq_len + i);
  return groups;
}

Var readout(const Var& h, const ops::IndexGroups& groups, Readout mode) {
  return ops::pool_rows(h, groups, mode == Readout::kSum ? ops::Pool::kSum : ops::Pool::kMean);
}

Var backbone_forward(const graph::BatchedGraph& batch, const Bound& p, const BackboneConfig& c,
                     ForwardHooks* hooks) {
  if (batch.feature_width != c.feature_width) {
    throw ShapeError(fmt::format("batch feature width {} does not match backbone input {}",
                                 batch.feature_width, c.feature_width));
  }
  Tape& tape = p.tape();
  SequenceState state = initial_state(batch);
  const std::size_t rows = batch.batch_size * batch.max_nodes;
  const std::size_t w = c.feature_width;
  const std::size_t k = c.encodings.rwpe_steps;

  Var x = tape.constant(batch.features.reshaped({rows, w}));
  if (hooks) x = hooks->on_raw_features(x, state);
  const Var& w_in = p["backbone.input.weight"];
  Var h = ops::matmul(x, k > 0 ? ops::slice_rows(w_in, 0, w) : w_in);
  if (k > 0) {
    const Var pe = tape.constant(batch.positional.reshaped({rows, k}));
    h = ops::add(h, ops::matmul(pe, ops::slice_rows(w_in, w, k)));
  }
  h = ops::add_row(h, p["backbone.input.bias"]);
  if (c.encodings.max_degree > 0) {
    h = ops::add(h, ops::gather_rows(p["backbone.input.degree"], batch.degree));
  }
  if (hooks) h = hooks->on_projected(h, state);

  for (std::size_t l = 0; l < c.layers; ++l) {
    if (hooks) h = hooks->before_layer(l, h, state);
    if (c.kind == BackboneKind::kTransformer) {
      h = transformer_layer(h, state, p, layer_prefix(l), c);
    } else {
      h = mpgnn_layer(h, state.neighborhoods, p, layer_prefix(l), c.aggregation);
    }
  }
  if (c.kind == BackboneKind::kTransformer) {
    h = ops::layer_norm(h, p["backbone.final_norm.gain"], p["backbone.final_norm.bias"],
                        c.norm_eps);
  }
  return readout(h, state.readout_groups, c.readout);
}

Var head_forward(const Var& g, const Bound& p, const HeadConfig& c) {
  Var x = g;
  if (c.hidden_layer) {
    x = ops::gelu(ops::add_row(ops::matmul(x, p["head.hidden.weight"]), p["head.hidden.bias"]));
  }
  return ops::add_row(ops::matmul(x, p["head.weight"]), p["head.bias"]);
}

Var predict(const graph::BatchedGraph& batch, const Bound& params, const BackboneConfig& config,
            const HeadConfig& head, ForwardHooks* hooks) {
  return head_forward(backbone_forward(batch, params, config, hooks), params, head);
}

}  // namespace gptlab::models

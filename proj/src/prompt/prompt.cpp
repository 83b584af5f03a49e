#include "gptlab/prompt/prompt.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>

#include "gptlab/core/errors.hpp"

namespace gptlab::prompt {

TokenPlacement parse_placement(const std::string& text) {
  if (text == "none") return TokenPlacement::kNone;
  if (text == "projected") return TokenPlacement::kProjected;
  if (text == "raw") return TokenPlacement::kRaw;
  throw ConfigError("unknown graph token placement '" + text +
                    "' (expected none, projected or raw)");
}

std::string placement_name(TokenPlacement placement) {
  switch (placement) {
    case TokenPlacement::kNone: return "none";
    case TokenPlacement::kProjected: return "projected";
    case TokenPlacement::kRaw: return "raw";
  }
  return "none";
}

std::vector<std::size_t> LayerInterval::layers() const {
  std::vector<std::size_t> out;
  for (std::size_t l = first; l <= last; ++l) out.push_back(l);
  return out;
}

std::string LayerInterval::to_string() const { return fmt::format("{}-{}", first, last); }

namespace {

std::size_t parse_index(std::string_view text, const std::string& whole) {
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
    throw ConfigError("malformed layer interval '" + whole + "' (expected a-b)");
  }
  return v;
}

}  // namespace

LayerInterval parse_interval(const std::string& text) {
  const auto dash = text.find('-');
  LayerInterval out;
  if (dash == std::string::npos) {
    out.first = out.last = parse_index(text, text);
  } else {
    out.first = parse_index(std::string_view(text).substr(0, dash), text);
    out.last = parse_index(std::string_view(text).substr(dash + 1), text);
  }
  if (out.first > out.last) throw ConfigError("layer interval '" + text + "' is reversed");
  return out;
}

void PromptConfig::validate(const models::BackboneConfig& backbone) const {
  if (!std::is_sorted(prompted_layers.begin(), prompted_layers.end()) ||
      std::adjacent_find(prompted_layers.begin(), prompted_layers.end()) !=
          prompted_layers.end()) {
    throw ConfigError("prompted layers must be sorted and unique");
  }
  for (std::size_t l : prompted_layers) {
    if (l >= backbone.layers) {
      throw ConfigError(fmt::format("prompted layer {} is outside 0..{}", l, backbone.layers - 1));
    }
  }
  if (prompted_layers.empty() != (prefix_length == 0)) {
    throw ConfigError("prefix length and prompted layers must be set together");
  }
  if (!prompted_layers.empty() && backbone.kind != models::BackboneKind::kTransformer) {
    throw ConfigError("prefix prompts need a transformer backbone; use virtual nodes for mpgnn");
  }
}

bool PromptConfig::prompts_layer(std::size_t layer) const {
  return std::binary_search(prompted_layers.begin(), prompted_layers.end(), layer);
}

std::string prefix_name(std::size_t layer) { return fmt::format("prompt.prefix.{}", layer); }

void init_prompt(models::ParameterSet& params, const PromptConfig& config,
                 const models::BackboneConfig& backbone, double scale, Rng& rng) {
  config.validate(backbone);
  const std::size_t d = backbone.width;
  if (config.graph_token == TokenPlacement::kProjected) {
    params.add(kTokenName, models::random_normal({d}, scale, rng));
  } else if (config.graph_token == TokenPlacement::kRaw) {
    params.add(kTokenName, models::random_normal({backbone.feature_width}, scale, rng));
  }
  for (std::size_t l : config.prompted_layers) {
    params.add(prefix_name(l), models::random_normal({config.prefix_length, d}, scale, rng));
  }
  if (config.virtual_nodes > 0) {
    params.add(kVirtualName, models::random_normal({config.virtual_nodes, d}, scale, rng));
  }
}

models::ShapeMap prompt_shapes(const PromptConfig& config, const models::BackboneConfig& backbone) {
  config.validate(backbone);
  models::ShapeMap s;
  if (config.graph_token == TokenPlacement::kProjected) s[kTokenName] = {backbone.width};
  if (config.graph_token == TokenPlacement::kRaw) s[kTokenName] = {backbone.feature_width};
  for (std::size_t l : config.prompted_layers) s[prefix_name(l)] = {config.prefix_length, backbone.width};
  if (config.virtual_nodes > 0) s[kVirtualName] = {config.virtual_nodes, backbone.width};
  return s;
}

Var apply_graph_prompt(const Var& x, const Var& p, std::span<const std::uint8_t> node_mask) {
  return ops::add_row_masked(x, p, node_mask);
}

Var extend_sequence(const Var& h, std::size_t slots, models::SequenceState& s) {
  if (slots == 0) return h;
  const std::size_t B = s.batch, L = s.seq_len, L2 = L + slots;
  const std::size_t width = h.shape()[1];
  if (h.shape()[0] != B * L) throw ShapeError("extend_sequence: row count does not match state");
  auto remap = [&](std::size_t r) { return (r / L) * L2 + slots + r % L; };

  std::vector<ops::RowCopy> copies;
  copies.reserve(B * L);
  for (std::size_t r = 0; r < B * L; ++r) copies.push_back({remap(r), r});
  const Var base = h.tape()->constant(Tensor::zeros({B * L2, width}));
  const Var out = ops::scatter_rows(base, h, copies);

  const ops::AttentionLayout& old = *s.layout;
  auto layout = std::make_shared<ops::AttentionLayout>();
  layout->batch = B;
  layout->seq_len = L2;
  layout->mask.assign(B * L2 * L2, 0);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t len = old.lengths[b] + slots;
    layout->lengths.push_back(len);
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        const bool allowed = i < slots || j < slots ||
                             old.mask[(b * L + i - slots) * L + j - slots] != 0;
        layout->mask[(b * L2 + i) * L2 + j] = allowed ? 1 : 0;
      }
    }
  }
  s.layout = std::move(layout);

  for (auto& group : s.readout_groups)
    for (std::size_t& r : group) r = remap(r);
  ops::IndexGroups neighborhoods(B * L2);
  std::vector<std::uint8_t> original(B * L2, 0);
  for (std::size_t r = 0; r < B * L; ++r) {
    auto& nb = neighborhoods[remap(r)];
    for (std::size_t j : s.neighborhoods[r]) nb.push_back(remap(j));
    original[remap(r)] = s.original[r];
  }
  s.neighborhoods = std::move(neighborhoods);
  s.original = std::move(original);
  s.seq_len = L2;
  s.prefix_slots += slots;
  return out;
}

Var inject_prefix(const Var& h, const Var& prefix, std::size_t layer, const PromptConfig& config,
                  const models::SequenceState& s) {
  if (!config.prompts_layer(layer)) {
    throw ContractError(fmt::format("layer {} is not a prompted layer", layer));
  }
  if (s.prefix_slots != config.prefix_length || prefix.shape()[0] != config.prefix_length) {
    throw ContractError("inject_prefix: sequence has not been extended by the prefix length");
  }
  std::vector<ops::RowCopy> copies;
  copies.reserve(s.batch * config.prefix_length);
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t i = 0; i < config.prefix_length; ++i) copies.push_back({b * s.seq_len + i, i});
  return ops::scatter_rows(h, prefix, copies);
}

graph::GraphSample add_virtual_nodes(const graph::GraphSample& g, std::size_t count) {
  if (count == 0) return g;
  if (g.prompt_nodes != 0) throw ContractError("sample already carries prompt nodes");
  graph::GraphSample out = g;
  const std::size_t n = g.num_nodes, w = g.feature_width();
  out.num_nodes = n + count;
  out.prompt_nodes = count;
  out.features = Tensor({n + count, w});
  std::copy(g.features.data().begin(), g.features.data().end(), out.features.raw());
  for (std::size_t t = 0; t < count; ++t)
    for (std::size_t i = 0; i < n; ++i) out.edges.push_back({i, n + t});
  return out;
}

PromptHooks::PromptHooks(const PromptConfig& config, const models::Bound& params)
    : config_(config), params_(params) {}

Var PromptHooks::on_raw_features(const Var& x, const models::SequenceState& s) {
  if (config_.graph_token != TokenPlacement::kRaw) return x;
  return apply_graph_prompt(x, params_[kTokenName], s.original);
}

Var PromptHooks::on_projected(const Var& h, models::SequenceState& s) {
  Var out = h;
  if (config_.graph_token == TokenPlacement::kProjected) {
    out = apply_graph_prompt(out, params_[kTokenName], s.original);
  }
  for (std::size_t b = 0; b < s.batch; ++b) {
    if (s.prompt_nodes[b] != config_.virtual_nodes) {
      throw ContractError(fmt::format("sample {} has {} prompt nodes, expected {}", b,
                                      s.prompt_nodes[b], config_.virtual_nodes));
    }
  }
  if (config_.virtual_nodes > 0) {
    std::vector<ops::RowCopy> copies;
    for (std::size_t b = 0; b < s.batch; ++b)
      for (std::size_t t = 0; t < config_.virtual_nodes; ++t)
        copies.push_back({s.node_row(b, s.original_counts[b] + t), t});
    out = ops::scatter_rows(out, params_[kVirtualName], copies);
  }
  return out;
}

Var PromptHooks::before_layer(std::size_t layer, const Var& h, models::SequenceState& s) {
  if (!config_.prompts_layer(layer)) return h;
  Var out = h;
  if (s.prefix_slots == 0) out = extend_sequence(out, config_.prefix_length, s);
  return inject_prefix(out, params_[prefix_name(layer)], layer, config_, s);
}

}  // namespace gptlab::prompt

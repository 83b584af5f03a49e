#include "gptlab/io/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "gptlab/core/errors.hpp"
#include "gptlab/io/csv.hpp"

namespace gptlab::io {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'G', 'P', 'T', 'L', 'A', 'B', 'C', 'K'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  void read_doubles(double* dst, std::size_t count) {
    if (count > (bytes_.size() - pos_) / sizeof(double)) fail();
    std::memcpy(dst, bytes_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) fail();
  }
  [[noreturn]] static void fail() { throw CheckpointError("checkpoint is truncated"); }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

const std::string& meta(const Checkpoint& ckpt, const std::string& key) {
  auto it = ckpt.metadata.find(key);
  if (it == ckpt.metadata.end()) throw CheckpointError("checkpoint lacks metadata '" + key + "'");
  return it->second;
}

std::size_t meta_size(const Checkpoint& ckpt, const std::string& key) {
  const std::string& text = meta(ckpt, key);
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw CheckpointError("checkpoint metadata '" + key + "' is not an integer");
  }
  return v;
}

}  // namespace

std::string serialize(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, ckpt.version);
  put<std::uint64_t>(out, ckpt.fingerprint);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.data().data()), t.numel() * sizeof(double));
  }
  return out;
}

Checkpoint deserialize(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a gptlab checkpoint (bad magic)");
  }
  Reader r(bytes.substr(sizeof(kMagic)));
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>();
  if (ckpt.version != kCheckpointVersion) {
    throw CheckpointError(fmt::format("unsupported checkpoint version {}", ckpt.version));
  }
  ckpt.fingerprint = r.get<std::uint64_t>();
  const auto meta_count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string k = r.get_string();
    ckpt.metadata[std::move(k)] = r.get_string();
  }
  const auto tensor_count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    std::string name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError("tensor '" + name + "' has implausible rank");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.get<std::uint64_t>());
    Tensor t(shape);
    r.read_doubles(t.raw(), t.numel());
    ckpt.params.add(name, std::move(t));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_text_atomic(path, serialize(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

Checkpoint make_backbone_checkpoint(const models::BackboneConfig& config,
                                    const models::ParameterSet& backbone) {
  Checkpoint ckpt;
  ckpt.fingerprint = config.fingerprint();
  ckpt.metadata["kind"] = "backbone";
  ckpt.metadata["config"] = config.canonical();
  ckpt.params = backbone.with_prefix("backbone.");
  return ckpt;
}

models::ParameterSet load_backbone(const Checkpoint& ckpt, const models::BackboneConfig& config) {
  if (meta(ckpt, "kind") != "backbone") throw CheckpointError("checkpoint is not a backbone");
  if (ckpt.fingerprint != config.fingerprint()) {
    throw CheckpointError("backbone checkpoint fingerprint mismatch: checkpoint was built for [" +
                          meta(ckpt, "config") + "], config describes [" + config.canonical() +
                          "]");
  }
  models::ParameterSet expected;
  Rng rng(0);
  models::init_backbone(expected, config, rng);
  if (expected.size() != ckpt.params.size()) {
    throw CheckpointError("backbone checkpoint has an unexpected parameter list");
  }
  for (const auto& [name, t] : expected) {
    if (!ckpt.params.contains(name) || ckpt.params.at(name).shape() != t.shape()) {
      throw CheckpointError("backbone checkpoint parameter '" + name + "' is missing or misshapen");
    }
  }
  return ckpt.params;
}

std::uint64_t prompt_compat_fingerprint(std::size_t width, std::size_t layers) {
  return fnv1a(fmt::format("prompt;width={};layers={}", width, layers));
}

Checkpoint make_prompt_checkpoint(const models::BackboneConfig& backbone,
                                  const PromptBundle& bundle) {
  Checkpoint ckpt;
  ckpt.fingerprint = prompt_compat_fingerprint(backbone.width, backbone.layers);
  ckpt.metadata["kind"] = "prompt";
  ckpt.metadata["mode"] = prompt::mode_name(bundle.mode);
  ckpt.metadata["width"] = std::to_string(backbone.width);
  ckpt.metadata["layers"] = std::to_string(backbone.layers);
  ckpt.metadata["prefix_length"] = std::to_string(bundle.prompt.prefix_length);
  ckpt.metadata["prompted_layers"] = fmt::format("{}", fmt::join(bundle.prompt.prompted_layers, ","));
  ckpt.metadata["token"] = prompt::placement_name(bundle.prompt.graph_token);
  ckpt.metadata["virtual_nodes"] = std::to_string(bundle.prompt.virtual_nodes);
  ckpt.metadata["head_outputs"] = std::to_string(bundle.head.outputs);
  ckpt.metadata["head_hidden"] = bundle.head.hidden_layer ? "1" : "0";
  for (const auto& [name, t] : bundle.params) {
    if (name.rfind("backbone.", 0) == 0) {
      throw ContractError("prompt checkpoints cannot hold backbone parameter '" + name + "'");
    }
    ckpt.params.add(name, t);
  }
  return ckpt;
}

PromptBundle load_prompt(const Checkpoint& ckpt, const models::BackboneConfig& backbone) {
  if (meta(ckpt, "kind") != "prompt") throw CheckpointError("checkpoint is not a prompt bundle");
  const std::size_t width = meta_size(ckpt, "width"), layers = meta_size(ckpt, "layers");
  if (width != backbone.width || layers != backbone.layers ||
      ckpt.fingerprint != prompt_compat_fingerprint(backbone.width, backbone.layers)) {
    throw CheckpointError(fmt::format(
        "prompt checkpoint targets width {} with {} layers; backbone has width {} with {} layers",
        width, layers, backbone.width, backbone.layers));
  }
  PromptBundle b;
  try {
    b.mode = prompt::parse_mode(meta(ckpt, "mode"));
    b.prompt.graph_token = prompt::parse_placement(meta(ckpt, "token"));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("prompt checkpoint metadata: ") + e.what());
  }
  b.prompt.prefix_length = meta_size(ckpt, "prefix_length");
  b.prompt.virtual_nodes = meta_size(ckpt, "virtual_nodes");
  const std::string& layer_list = meta(ckpt, "prompted_layers");
  std::size_t start = 0;
  while (start < layer_list.size()) {
    const std::size_t comma = std::min(layer_list.find(',', start), layer_list.size());
    std::size_t v = 0;
    const auto [end, ec] = std::from_chars(layer_list.data() + start, layer_list.data() + comma, v);
    if (ec != std::errc{} || end != layer_list.data() + comma) {
      throw CheckpointError("prompt checkpoint has a malformed layer list");
    }
    b.prompt.prompted_layers.push_back(v);
    start = comma + 1;
  }
  b.head.outputs = meta_size(ckpt, "head_outputs");
  b.head.hidden_layer = meta(ckpt, "head_hidden") == "1";
  try {
    b.prompt.validate(backbone);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("prompt checkpoint does not fit the backbone: ") + e.what());
  }
  b.params = ckpt.params;
  return b;
}

}  // namespace gptlab::io

#include "gptlab/io/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "gptlab/core/errors.hpp"
#include "gptlab/io/csv.hpp"

namespace gptlab::io {

AblationAxis parse_axis(const std::string& text) {
  if (text == "depth") return AblationAxis::kDepth;
  if (text == "length") return AblationAxis::kLength;
  if (text == "component") return AblationAxis::kComponent;
  throw ConfigError("unknown ablation axis '" + text + "' (expected depth, length or component)");
}

std::string axis_name(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::kDepth: return "depth";
    case AblationAxis::kLength: return "length";
    case AblationAxis::kComponent: return "component";
  }
  return "component";
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    std::string item = trim(std::string_view(text).substr(start, comma - start));
    if (!item.empty()) out.push_back(std::move(item));
    start = comma + 1;
  }
  return out;
}

std::size_t to_size(const std::string& text) {
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
    throw ConfigError("expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

double to_double(const std::string& text) {
  try {
    return parse_double(text);
  } catch (const ValidationError&) {
    throw ConfigError("expected a number, got '" + text + "'");
  }
}

bool to_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("expected true or false, got '" + text + "'");
}

using Setter = std::function<void(const std::string&)>;
using Schema = std::map<std::string, std::map<std::string, Setter>>;

void add_optimizer_keys(std::map<std::string, Setter>& s, train::TrainOptions& o) {
  s["epochs"] = [&](const std::string& v) { o.schedule.total_epochs = to_size(v); };
  s["warmup_epochs"] = [&](const std::string& v) { o.schedule.warmup_epochs = to_size(v); };
  s["lr"] = [&](const std::string& v) { o.schedule.base_lr = to_double(v); };
  s["decay"] = [&](const std::string& v) { o.schedule.decay = train::parse_decay(v); };
  s["weight_decay"] = [&](const std::string& v) { o.adamw.weight_decay = to_double(v); };
  s["beta1"] = [&](const std::string& v) { o.adamw.beta1 = to_double(v); };
  s["beta2"] = [&](const std::string& v) { o.adamw.beta2 = to_double(v); };
  s["eps"] = [&](const std::string& v) { o.adamw.eps = to_double(v); };
  s["batch_size"] = [&](const std::string& v) { o.batch_size = to_size(v); };
  s["clip_norm"] = [&](const std::string& v) { o.clip_norm = to_double(v); };
}

void add_data_keys(std::map<std::string, Setter>& s, DataSpec& d,
                   const std::filesystem::path& base_dir) {
  s["generator"] = [&](const std::string& v) { d.generator = v; };
  s["dataset"] = [&, base_dir](const std::string& v) {
    const std::filesystem::path p(v);
    d.dataset = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  s["graphs"] = [&](const std::string& v) { d.graphs = to_size(v); };
  s["min_nodes"] = [&](const std::string& v) { d.options.min_nodes = to_size(v); };
  s["max_nodes"] = [&](const std::string& v) { d.options.max_nodes = to_size(v); };
}

void validate_data(const DataSpec& d, const char* section) {
  if (d.generator.empty() == d.dataset.empty()) {
    throw ConfigError(fmt::format("[{}] needs exactly one of generator or dataset", section));
  }
  if (!d.generator.empty() && d.graphs == 0) {
    throw ConfigError(fmt::format("[{}] graphs must be positive", section));
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  backbone.validate();
  if (folds < 2) throw ConfigError("folds must be at least 2");
  validate_data(pretrain_data, "pretrain");
  if (!pretrain_data.generator.empty() && pretrain_data.generator != "pretext") {
    throw ConfigError("[pretrain] generator must be pretext");
  }
  validate_data(task, "task");
  if (!task.generator.empty()) graph::parse_task(task.generator);
  pretrain.validate();
  if (!(holdout > 0.0 && holdout < 1.0)) throw ConfigError("[pretrain] holdout must lie in (0, 1)");
  tuning.train.validate();
  train::prompt_config_for(tuning, backbone);
  if (lr_grid.empty() || weight_decay_grid.empty()) throw ConfigError("[tune] empty lr or weight_decay grid");
  for (double lr : lr_grid)
    if (!(lr > 0.0)) throw ConfigError("[tune] lr values must be positive");
  for (double wd : weight_decay_grid)
    if (wd < 0.0) throw ConfigError("[tune] weight_decay values must be non-negative");
  if (tuning.train.loss == train::Loss::kMse) {
    if (tuning.train.metric != train::Metric::kRmse) {
      throw ConfigError("[tune] mse loss pairs with the rmse metric");
    }
  } else if (tuning.train.metric == train::Metric::kRmse) {
    throw ConfigError("[tune] bce loss pairs with auroc or ap");
  }
  for (const auto& iv : ablation.depth) {
    if (iv.last >= backbone.layers) {
      throw ConfigError(fmt::format("[ablate] depth interval {} exceeds {} layers", iv.to_string(),
                                    backbone.layers));
    }
  }
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  c.backbone.feature_width = 4;
  c.pretrain_data.generator = "pretext";
  c.pretrain_data.graphs = 2000;
  c.pretrain.schedule = {1e-3, 2, 20, train::Decay::kCosine};
  c.pretrain.loss = train::Loss::kMse;
  c.pretrain.metric = train::Metric::kRmse;
  c.task.generator = "motif_presence";
  c.task.graphs = 1000;
  c.tuning.train.schedule = {1e-3, 5, 100, train::Decay::kCosine};

  bool layers_set = false, loss_set = false, metric_set = false;
  std::string lr_text, wd_text;
  Schema schema;

  auto& run = schema["run"];
  run["seed"] = [&](const std::string& v) { c.seed = to_size(v); };
  run["folds"] = [&](const std::string& v) { c.folds = to_size(v); };

  auto& bb = schema["backbone"];
  bb["kind"] = [&](const std::string& v) { c.backbone.kind = models::parse_backbone_kind(v); };
  bb["feature_width"] = [&](const std::string& v) { c.backbone.feature_width = to_size(v); };
  bb["width"] = [&](const std::string& v) { c.backbone.width = to_size(v); };
  bb["heads"] = [&](const std::string& v) { c.backbone.heads = to_size(v); };
  bb["layers"] = [&](const std::string& v) { c.backbone.layers = to_size(v); };
  bb["ffn_multiplier"] = [&](const std::string& v) { c.backbone.ffn_multiplier = to_size(v); };
  bb["readout"] = [&](const std::string& v) { c.backbone.readout = models::parse_readout(v); };
  bb["aggregation"] = [&](const std::string& v) {
    c.backbone.aggregation = models::parse_aggregation(v);
  };
  bb["rwpe_steps"] = [&](const std::string& v) { c.backbone.encodings.rwpe_steps = to_size(v); };
  bb["max_degree"] = [&](const std::string& v) { c.backbone.encodings.max_degree = to_size(v); };
  bb["norm_eps"] = [&](const std::string& v) { c.backbone.norm_eps = to_double(v); };

  auto& pre = schema["pretrain"];
  add_data_keys(pre, c.pretrain_data, base_dir);
  add_optimizer_keys(pre, c.pretrain);
  pre["holdout"] = [&](const std::string& v) { c.holdout = to_double(v); };

  add_data_keys(schema["task"], c.task, base_dir);

  auto& tune = schema["tune"];
  add_optimizer_keys(tune, c.tuning.train);
  tune["lr"] = [&](const std::string& v) { lr_text = v; };
  tune["weight_decay"] = [&](const std::string& v) { wd_text = v; };
  tune["mode"] = [&](const std::string& v) { c.tuning.mode = prompt::parse_mode(v); };
  tune["prefix_length"] = [&](const std::string& v) { c.tuning.prefix_length = to_size(v); };
  tune["layers"] = [&](const std::string& v) {
    c.tuning.layers = prompt::parse_interval(v);
    layers_set = true;
  };
  tune["token"] = [&](const std::string& v) { c.tuning.token = prompt::parse_placement(v); };
  tune["prompt_init_scale"] = [&](const std::string& v) {
    c.tuning.prompt_init_scale = to_double(v);
  };
  tune["head_hidden"] = [&](const std::string& v) { c.tuning.head.hidden_layer = to_bool(v); };
  tune["loss"] = [&](const std::string& v) {
    c.tuning.train.loss = train::parse_loss(v);
    loss_set = true;
  };
  tune["metric"] = [&](const std::string& v) {
    c.tuning.train.metric = train::parse_metric(v);
    metric_set = true;
  };

  auto& abl = schema["ablate"];
  abl["axis"] = [&](const std::string& v) { c.ablation.axis = parse_axis(v); };
  abl["depth"] = [&](const std::string& v) {
    c.ablation.depth.clear();
    for (const auto& item : split_list(v)) c.ablation.depth.push_back(prompt::parse_interval(item));
  };
  abl["lengths"] = [&](const std::string& v) {
    c.ablation.lengths.clear();
    for (const auto& item : split_list(v)) c.ablation.lengths.push_back(to_size(item));
  };
  abl["components"] = [&](const std::string& v) {
    c.ablation.components.clear();
    for (const auto& item : split_list(v)) c.ablation.components.push_back(prompt::parse_mode(item));
  };

  boost::property_tree::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  for (const auto& [section, body] : tree) {
    auto sec = schema.find(section);
    if (sec == schema.end()) {
      if (body.empty()) throw ConfigError("config key '" + section + "' is outside any section");
      throw ConfigError("unknown config section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      auto setter = sec->second.find(key);
      if (setter == sec->second.end()) {
        throw ConfigError("unknown config key '" + key + "' in [" + section + "]");
      }
      try {
        setter->second(trim(value.data()));
      } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("[{}] {}: {}", section, key, e.what()));
      }
    }
  }

  c.task.options.feature_width = c.backbone.feature_width;
  c.pretrain_data.options.feature_width = c.backbone.feature_width;
  if (!c.task.dataset.empty() && !tree.get_child_optional("task.generator")) c.task.generator.clear();
  if (!c.pretrain_data.dataset.empty() && !tree.get_child_optional("pretrain.generator")) {
    c.pretrain_data.generator.clear();
  }
  if (!layers_set) c.tuning.layers = {0, c.backbone.layers - (c.backbone.layers > 0 ? 1 : 0)};
  const bool regression = !c.task.generator.empty() &&
                          graph::task_kind(graph::parse_task(c.task.generator)) ==
                              graph::TaskKind::kRegression;
  if (!loss_set) c.tuning.train.loss = regression ? train::Loss::kMse : train::Loss::kBce;
  if (!metric_set) c.tuning.train.metric = regression ? train::Metric::kRmse : train::Metric::kAuroc;
  try {
    c.lr_grid.clear();
    for (const auto& item : split_list(lr_text.empty() ? fmt::format("{}", c.tuning.train.schedule.base_lr) : lr_text))
      c.lr_grid.push_back(to_double(item));
    c.weight_decay_grid.clear();
    for (const auto& item : split_list(wd_text.empty() ? fmt::format("{}", c.tuning.train.adamw.weight_decay) : wd_text))
      c.weight_decay_grid.push_back(to_double(item));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("[tune] ") + e.what());
  }
  if (!c.lr_grid.empty()) c.tuning.train.schedule.base_lr = c.lr_grid.front();
  if (!c.weight_decay_grid.empty()) c.tuning.train.adamw.weight_decay = c.weight_decay_grid.front();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

}  // namespace gptlab::io

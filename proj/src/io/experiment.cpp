#include "gptlab/io/experiment.hpp"

#include <chrono>
#include <map>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "gptlab/core/errors.hpp"
#include "gptlab/core/parallel.hpp"
#include "gptlab/graph/folds.hpp"
#include "gptlab/graph/generators.hpp"
#include "gptlab/io/checkpoint.hpp"

namespace gptlab::io {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::uint64_t seed_of(const ExperimentConfig& c, const CommandOptions& o) {
  return o.seed.value_or(c.seed);
}

std::size_t folds_of(const ExperimentConfig& c, const CommandOptions& o) {
  const std::size_t k = o.folds.value_or(c.folds);
  if (k < 2) throw ConfigError("--folds must be at least 2");
  return k;
}

std::string str(double v) { return format_double(v); }
std::string str(std::size_t v) { return std::to_string(v); }

models::ParameterSet load_backbone_for(const ExperimentConfig& c, const CommandOptions& o) {
  if (!o.ckpt) throw ConfigError("this command needs --ckpt pointing at a backbone checkpoint");
  return load_backbone(load_checkpoint(*o.ckpt), c.backbone);
}

graph::GraphDataset task_data(const ExperimentConfig& c, std::uint64_t seed, const fs::path& out) {
  graph::GraphDataset data = load_data(c.task, derive_seed(seed, "data:task"), out, "task");
  if (data.feature_width != c.backbone.feature_width) {
    throw ValidationError(fmt::format("task dataset feature width {} does not match backbone {}",
                                      data.feature_width, c.backbone.feature_width));
  }
  return data;
}

std::string layers_text(const train::TuningSpec& spec) {
  using prompt::TuningMode;
  if (spec.mode == TuningMode::kPrefixOnly || spec.mode == TuningMode::kDeepGpt) {
    return spec.layers.to_string();
  }
  return "-";
}

std::size_t prompt_length(const train::TuningSpec& spec) {
  using prompt::TuningMode;
  return spec.mode == TuningMode::kFull || spec.mode == TuningMode::kLightweight
             ? 0
             : spec.prefix_length;
}

void write_cell(const CellRow& row, const ExperimentConfig& c, const fs::path& dir) {
  CsvTable record{{"fold", "epoch", "train_loss", "eval_metric"}, {}};
  CsvTable folds{{"fold", "final_metric", "best_epoch", "epochs_to_best"}, {}};
  CsvTable timing{{"fold", "epoch", "seconds"}, {}};
  for (std::size_t k = 0; k < row.result.folds.size(); ++k) {
    const train::RunRecord& r = row.result.folds[k].record;
    for (std::size_t e = 0; e < r.epochs(); ++e) {
      record.add_row({str(k), str(e), str(r.train_loss[e]), str(r.eval_metric[e])});
      timing.add_row({str(k), str(e), str(r.epoch_seconds[e])});
    }
    folds.add_row({str(k), str(r.final_metric), str(r.best_epoch), str(r.epochs_to_best())});
  }
  write_csv_file(dir / "record.csv", record);
  write_csv_file(dir / "folds.csv", folds);
  write_csv_file(dir / "timing.csv", timing);
  if (row.spec.mode != prompt::TuningMode::kFull) {
    PromptBundle bundle;
    bundle.mode = row.spec.mode;
    bundle.prompt = train::prompt_config_for(row.spec, c.backbone);
    bundle.head = row.spec.head;
    bundle.head.outputs = row.result.folds.back().tuned.at("head.bias").numel();
    bundle.params = row.result.folds.back().tuned;
    save_checkpoint(dir / "prompt.ckpt", make_prompt_checkpoint(c.backbone, bundle));
  }
}

struct CellPlan {
  std::string id;
  std::vector<std::pair<std::string, std::string>> coords;
  train::TuningSpec spec;
};

std::vector<CellRow> run_cells(const std::vector<CellPlan>& plans, const ExperimentConfig& c,
                               const CommandOptions& o, const models::ParameterSet& backbone,
                               const graph::GraphDataset& data, std::ostream& log) {
  const std::uint64_t seed = seed_of(c, o);
  const std::size_t folds = folds_of(c, o);
  const std::size_t workers = worker_count(o.parallel);
  // Parallelism goes to cells when there are several, else to folds.
  const std::size_t fold_workers = plans.size() > 1 ? 1 : workers;
  std::vector<CellRow> rows(plans.size());
  parallel_for(plans.size(), plans.size() > 1 ? workers : 1, [&](std::size_t i) {
    const auto start = Clock::now();
    CellRow& row = rows[i];
    row.id = plans[i].id;
    row.spec = plans[i].spec;
    row.result = train::cross_validate(c.backbone, backbone, row.spec, data, folds, seed,
                                       fold_workers);
    row.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    write_cell(row, c, o.out / "cells" / row.id);
  });

  std::vector<std::string> header;
  if (!plans.empty())
    for (const auto& [k, _] : plans.front().coords) header.push_back(k);
  for (const char* col : {"cell", "mode", "layers", "prefix_length", "token", "lr",
                          "weight_decay", "params_trainable", "params_total", "metric", "mean",
                          "std", "epochs_to_best_mean"}) {
    header.emplace_back(col);
  }
  CsvTable results{header, {}};
  CsvTable timing{{"cell", "mode", "epochs", "epoch_seconds_mean", "epoch_seconds_total",
                   "wall_seconds"},
                  {}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const CellRow& row = rows[i];
    const auto& spec = row.spec;
    double best_sum = 0.0, seconds = 0.0;
    std::size_t epochs = 0;
    for (const auto& f : row.result.folds) {
      best_sum += static_cast<double>(f.record.epochs_to_best());
      for (double s : f.record.epoch_seconds) seconds += s;
      epochs += f.record.epochs();
    }
    const auto& counts = row.result.counts;
    const bool has_token = spec.mode == prompt::TuningMode::kDeepGpt;
    std::vector<std::string> cells;
    for (const auto& [_, v] : plans[i].coords) cells.push_back(v);
    for (std::string v :
         {row.id, prompt::mode_name(spec.mode), layers_text(spec), str(prompt_length(spec)),
          has_token ? prompt::placement_name(spec.token) : std::string("none"),
          str(spec.train.schedule.base_lr), str(spec.train.adamw.weight_decay),
          str(counts.trainable), str(counts.frozen + counts.trainable),
          train::metric_name(spec.train.metric), str(row.result.mean), str(row.result.stddev),
          str(best_sum / static_cast<double>(row.result.folds.size()))}) {
      cells.push_back(std::move(v));
    }
    results.add_row(std::move(cells));
    timing.add_row({row.id, prompt::mode_name(spec.mode), str(epochs),
                    str(seconds / static_cast<double>(epochs)), str(seconds),
                    str(row.wall_seconds)});
    fmt::print(log, "{:<32} {:<12} trainable={:<8} {}={:.4f} +/- {:.4f}\n", row.id,
               prompt::mode_name(spec.mode), counts.trainable,
               train::metric_name(spec.train.metric), row.result.mean, row.result.stddev);
  }
  write_csv_file(o.out / "results.csv", results);
  write_csv_file(o.out / "timing.csv", timing);
  return rows;
}

}  // namespace

graph::GraphDataset load_data(const DataSpec& spec, std::uint64_t seed, const fs::path& out,
                              const std::string& stem) {
  if (!spec.dataset.empty()) return graph::read_graph_file(spec.dataset);
  std::vector<graph::GraphSample> samples;
  if (spec.generator == "pretext") {
    samples = graph::gen_pretext(spec.graphs, spec.options, seed);
  } else {
    samples = graph::gen_downstream(spec.graphs, graph::parse_task(spec.generator), spec.options,
                                    seed);
  }
  const fs::path path = out / (stem + ".gptg");
  fs::create_directories(out);
  graph::write_graph_file(path, graph::make_dataset(std::move(samples)));
  return graph::read_graph_file(path);
}

PretrainSummary cmd_pretrain(const ExperimentConfig& c, const CommandOptions& o,
                             std::ostream& log) {
  const std::uint64_t seed = seed_of(c, o);
  const graph::GraphDataset data =
      load_data(c.pretrain_data, derive_seed(seed, "data:pretext"), o.out, "pretext");
  if (data.feature_width != c.backbone.feature_width) {
    throw ValidationError(fmt::format("pretext dataset feature width {} does not match backbone {}",
                                      data.feature_width, c.backbone.feature_width));
  }
  fmt::print(log, "pretraining {} backbone on {} graphs\n",
             models::backbone_kind_name(c.backbone.kind), data.samples.size());
  train::PretrainResult r =
      train::pretrain(c.backbone, data, c.pretrain, c.holdout, derive_seed(seed, "pretrain"));

  PretrainSummary summary;
  summary.checkpoint = o.out / "backbone.ckpt";
  summary.record = r.record;
  save_checkpoint(summary.checkpoint, make_backbone_checkpoint(c.backbone, r.backbone));

  CsvTable record{{"epoch", "train_loss", "eval_rmse"}, {}};
  CsvTable timing{{"epoch", "seconds"}, {}};
  for (std::size_t e = 0; e < r.record.epochs(); ++e) {
    record.add_row({str(e), str(r.record.train_loss[e]), str(r.record.eval_metric[e])});
    timing.add_row({str(e), str(r.record.epoch_seconds[e])});
  }
  write_csv_file(o.out / "pretrain.csv", record);
  write_csv_file(o.out / "timing.csv", timing);
  fmt::print(log, "pretext rmse: epoch 1 {:.6f}, final {:.6f}\n", r.record.eval_metric.front(),
             r.record.final_metric);
  fmt::print(log, "wrote {}\n", summary.checkpoint.string());
  return summary;
}

std::vector<CellRow> cmd_tune(const ExperimentConfig& c, const CommandOptions& o,
                              std::ostream& log) {
  const models::ParameterSet backbone = load_backbone_for(c, o);
  const graph::GraphDataset data = task_data(c, seed_of(c, o), o.out);
  std::vector<CellPlan> plans;
  for (double lr : c.lr_grid) {
    for (double wd : c.weight_decay_grid) {
      CellPlan p;
      p.spec = c.tuning;
      p.spec.train.schedule.base_lr = lr;
      p.spec.train.adamw.weight_decay = wd;
      p.id = fmt::format("{}_lr{}_wd{}", prompt::mode_name(p.spec.mode), str(lr), str(wd));
      plans.push_back(std::move(p));
    }
  }
  return run_cells(plans, c, o, backbone, data, log);
}

std::vector<CellRow> cmd_ablate(const ExperimentConfig& c, const CommandOptions& o,
                                std::ostream& log) {
  const AblationSpec& a = c.ablation;
  const std::string axis = axis_name(a.axis);
  std::vector<CellPlan> plans;
  auto plan = [&](std::string cell, train::TuningSpec spec) {
    CellPlan p;
    p.id = axis + "_" + cell;
    p.coords = {{"axis", axis}};
    p.spec = std::move(spec);
    train::prompt_config_for(p.spec, c.backbone);
    plans.push_back(std::move(p));
  };
  switch (a.axis) {
    case AblationAxis::kDepth:
      if (c.tuning.mode != prompt::TuningMode::kPrefixOnly &&
          c.tuning.mode != prompt::TuningMode::kDeepGpt) {
        throw ConfigError("depth ablation needs [tune] mode prefix_only or deepgpt");
      }
      for (const auto& iv : a.depth) {
        train::TuningSpec s = c.tuning;
        s.layers = iv;
        plan(iv.to_string(), s);
      }
      break;
    case AblationAxis::kLength:
      if (c.tuning.mode == prompt::TuningMode::kFull ||
          c.tuning.mode == prompt::TuningMode::kLightweight) {
        throw ConfigError("length ablation needs a prompt mode in [tune]");
      }
      for (std::size_t len : a.lengths) {
        train::TuningSpec s = c.tuning;
        s.prefix_length = len;
        plan(std::to_string(len), s);
      }
      break;
    case AblationAxis::kComponent:
      for (prompt::TuningMode m : a.components) {
        train::TuningSpec s = c.tuning;
        s.mode = m;
        plan(prompt::mode_name(m), s);
      }
      break;
  }
  if (plans.empty()) throw ConfigError("[ablate] the " + axis + " grid is empty");
  const models::ParameterSet backbone = load_backbone_for(c, o);
  const graph::GraphDataset data = task_data(c, seed_of(c, o), o.out);
  return run_cells(plans, c, o, backbone, data, log);
}

CsvTable cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out,
                    std::ostream& log) {
  if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
  struct Agg {
    std::size_t cells = 0;
    std::string metric;
    double metric_sum = 0.0, best_sum = 0.0, seconds_mean_sum = 0.0;
    double seconds_total = 0.0, wall = 0.0;
  };
  std::vector<std::string> order;
  std::map<std::string, Agg> by_mode;
  for (const fs::path& dir : run_dirs) {
    for (const char* name : {"results.csv", "timing.csv"}) {
      if (!fs::exists(dir / name)) {
        throw ValidationError("incomplete run directory " + dir.string() + ": missing " + name);
      }
    }
    const CsvTable results = read_csv_file(dir / "results.csv");
    const CsvTable timing = read_csv_file(dir / "timing.csv");
    std::map<std::string, std::size_t> timing_row;
    for (std::size_t r = 0; r < timing.rows.size(); ++r) timing_row[timing.cell(r, "cell")] = r;
    for (std::size_t r = 0; r < results.rows.size(); ++r) {
      const std::string& cell = results.cell(r, "cell");
      auto t = timing_row.find(cell);
      if (t == timing_row.end()) {
        throw ValidationError("incomplete run directory " + dir.string() + ": no timing for " + cell);
      }
      const std::string& mode = results.cell(r, "mode");
      if (!by_mode.count(mode)) order.push_back(mode);
      Agg& a = by_mode[mode];
      const std::string& metric = results.cell(r, "metric");
      a.metric = a.cells == 0 || a.metric == metric ? metric : "mixed";
      ++a.cells;
      a.metric_sum += parse_double(results.cell(r, "mean"));
      a.best_sum += parse_double(results.cell(r, "epochs_to_best_mean"));
      a.seconds_mean_sum += parse_double(timing.cell(t->second, "epoch_seconds_mean"));
      a.seconds_total += parse_double(timing.cell(t->second, "epoch_seconds_total"));
      a.wall += parse_double(timing.cell(t->second, "wall_seconds"));
    }
  }
  CsvTable summary{{"mode", "cells", "metric", "metric_mean", "epochs_to_best_mean",
                    "epoch_seconds_mean", "epoch_seconds_total", "wall_seconds"},
                   {}};
  for (const std::string& mode : order) {
    const Agg& a = by_mode[mode];
    const double n = static_cast<double>(a.cells);
    summary.add_row({mode, str(a.cells), a.metric, str(a.metric_sum / n), str(a.best_sum / n),
                     str(a.seconds_mean_sum / n), str(a.seconds_total), str(a.wall)});
    fmt::print(log, "{:<12} cells={} {}={:.4f} epochs_to_best={:.2f} epoch_seconds={:.4f}\n",
               mode, a.cells, a.metric, a.metric_sum / n, a.best_sum / n, a.seconds_mean_sum / n);
  }
  write_csv_file(out / "summary.csv", summary);
  return summary;
}

void cmd_generate(const ExperimentConfig& c, const CommandOptions& o, std::ostream& log) {
  const std::uint64_t seed = seed_of(c, o);
  const auto pretext = load_data(c.pretrain_data, derive_seed(seed, "data:pretext"), o.out, "pretext");
  const auto task = load_data(c.task, derive_seed(seed, "data:task"), o.out, "task");
  fmt::print(log, "pretext: {} graphs, task: {} graphs, written to {}\n", pretext.samples.size(),
             task.samples.size(), o.out.string());
}

double cmd_evaluate(const ExperimentConfig& c, const CommandOptions& o,
                    const fs::path& prompt_ckpt, std::size_t fold, std::ostream& log) {
  const models::ParameterSet backbone = load_backbone_for(c, o);
  const PromptBundle bundle = load_prompt(load_checkpoint(prompt_ckpt), c.backbone);
  const std::uint64_t seed = seed_of(c, o);
  const graph::GraphDataset data = task_data(c, seed, o.out);
  if (bundle.head.outputs != data.label_width) {
    throw ValidationError(fmt::format("prompt head has {} outputs, dataset labels have {}",
                                      bundle.head.outputs, data.label_width));
  }
  const std::size_t folds = folds_of(c, o);
  if (fold >= folds) throw ConfigError(fmt::format("--fold {} outside 0..{}", fold, folds - 1));
  const graph::DatasetSplit split =
      graph::make_folds(data.samples.size(), folds, derive_seed(seed, "folds"));
  const auto samples = train::prepare_samples(data.samples, bundle.prompt);
  std::vector<graph::GraphSample> held;
  for (std::size_t i : split.eval_indices(fold)) held.push_back(samples[i]);

  train::Model model;
  model.backbone = c.backbone;
  model.head = bundle.head;
  model.prompt = bundle.prompt;
  model.params = backbone;
  model.params.merge(bundle.params);
  const auto encoded = train::encode_all(held, c.backbone.encodings);
  const double metric = train::evaluate_model(model, encoded, c.tuning.train);
  fmt::print(log, "{} {} on fold {}: {}\n", prompt::mode_name(bundle.mode),
             train::metric_name(c.tuning.train.metric), fold, format_double(metric));
  return metric;
}

}  // namespace gptlab::io

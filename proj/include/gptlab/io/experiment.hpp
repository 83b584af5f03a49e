#pragma once

// Command implementations behind the gptlab tool. Each command writes its
// outputs under CommandOptions::out:
//
//   pretrain  backbone.ckpt, pretrain.csv, timing.csv
//   tune      results.csv, timing.csv, cells/<cell>/{record,folds,timing}.csv
//             and cells/<cell>/prompt.ckpt for every mode except ft
//   ablate    same layout as tune, one cell per grid entry
//   report    summary.csv
//
// results.csv, record.csv and folds.csv are deterministic for a given seed;
// wall clock measurements only go to timing.csv files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gptlab/graph/graph_io.hpp"
#include "gptlab/io/config.hpp"
#include "gptlab/io/csv.hpp"

namespace gptlab::io {

struct CommandOptions {
  std::filesystem::path out = "out";
  std::optional<std::filesystem::path> ckpt;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> folds;
  std::size_t parallel = 1;
};

// Loads the dataset file, or generates it from the seed, writes it to
// out/<stem>.gptg and reads that file back.
graph::GraphDataset load_data(const DataSpec& spec, std::uint64_t seed,
                              const std::filesystem::path& out, const std::string& stem);

struct PretrainSummary {
  std::filesystem::path checkpoint;
  train::RunRecord record;
};

PretrainSummary cmd_pretrain(const ExperimentConfig& config, const CommandOptions& options,
                             std::ostream& log);

// One tuned configuration, evaluated by k-fold cross-validation.
struct CellRow {
  std::string id;
  train::TuningSpec spec;
  train::CvResult result;
  double wall_seconds = 0.0;
};

std::vector<CellRow> cmd_tune(const ExperimentConfig& config, const CommandOptions& options,
                              std::ostream& log);
std::vector<CellRow> cmd_ablate(const ExperimentConfig& config, const CommandOptions& options,
                                std::ostream& log);

// Aggregates results.csv and timing.csv of finished runs per mode.
CsvTable cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                    const std::filesystem::path& out, std::ostream& log);

// Writes the task dataset (and the pretext dataset) without training.
void cmd_generate(const ExperimentConfig& config, const CommandOptions& options,
                  std::ostream& log);

// Metric of a prompt checkpoint on fold `fold` of the task dataset.
double cmd_evaluate(const ExperimentConfig& config, const CommandOptions& options,
                    const std::filesystem::path& prompt_ckpt, std::size_t fold,
                    std::ostream& log);

}  // namespace gptlab::io

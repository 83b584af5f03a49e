// gptlab: pretrain, tune, ablate and report graph prompt tuning experiments.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gptlab/core/errors.hpp"
#include "gptlab/io/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kCheckpoint = 4 };

struct Args {
  std::string config;
  std::string ckpt;
  std::string out = "out";
  std::uint64_t seed = 0;
  std::size_t folds = 0;
  std::size_t parallel = 1;
  std::string prompt;
  std::size_t fold = 0;
  bool fold_set = false;
  std::vector<std::string> runs;
};

void add_common(CLI::App* cmd, Args& a, bool needs_ckpt) {
  cmd->add_option("--config", a.config, "Experiment config (INI)")->required();
  auto* ckpt = cmd->add_option("--ckpt", a.ckpt, "Backbone checkpoint");
  if (needs_ckpt) ckpt->required();
  cmd->add_option("--out", a.out, "Output directory");
  cmd->add_option("--seed", a.seed, "Override the config seed");
  cmd->add_option("--folds", a.folds, "Cross-validation folds (default 5)");
  cmd->add_option("--parallel", a.parallel, "Worker threads, capped by GPT_LAB_THREADS");
}

gptlab::io::CommandOptions options_from(const Args& a, const CLI::App* cmd) {
  gptlab::io::CommandOptions o;
  o.out = a.out;
  if (!a.ckpt.empty()) o.ckpt = a.ckpt;
  if (cmd->count("--seed")) o.seed = a.seed;
  if (cmd->count("--folds")) o.folds = a.folds;
  o.parallel = a.parallel;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph prompt tuning experiments"};
  app.require_subcommand(1);
  Args a;

  auto* pretrain = app.add_subcommand("pretrain", "Pre-train a backbone on the pretext task");
  add_common(pretrain, a, false);
  auto* tune = app.add_subcommand("tune", "K-fold tuning of the configured mode");
  add_common(tune, a, true);
  auto* ablate = app.add_subcommand("ablate", "Run the configured ablation grid");
  add_common(ablate, a, true);
  auto* generate = app.add_subcommand("generate", "Write the configured datasets");
  add_common(generate, a, false);
  auto* evaluate = app.add_subcommand("evaluate", "Score a prompt checkpoint on one fold");
  add_common(evaluate, a, true);
  evaluate->add_option("--prompt", a.prompt, "Prompt checkpoint")->required();
  evaluate->add_option("--fold", a.fold, "Fold to score (default: last)");
  auto* report = app.add_subcommand("report", "Summarize finished runs per mode");
  report->add_option("runs", a.runs, "Run directories")->required();
  report->add_option("--out", a.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (report->parsed()) {
      std::vector<std::filesystem::path> dirs(a.runs.begin(), a.runs.end());
      gptlab::io::cmd_report(dirs, a.out, std::cout);
      return kOk;
    }
    CLI::App* cmd = app.get_subcommands().front();
    const auto config = gptlab::io::load_config(a.config);
    const auto options = options_from(a, cmd);
    if (pretrain->parsed()) gptlab::io::cmd_pretrain(config, options, std::cout);
    if (tune->parsed()) gptlab::io::cmd_tune(config, options, std::cout);
    if (ablate->parsed()) gptlab::io::cmd_ablate(config, options, std::cout);
    if (generate->parsed()) gptlab::io::cmd_generate(config, options, std::cout);
    if (evaluate->parsed()) {
      const std::size_t folds = options.folds.value_or(config.folds);
      const std::size_t fold = evaluate->count("--fold") ? a.fold : folds - 1;
      gptlab::io::cmd_evaluate(config, options, a.prompt, fold, std::cout);
    }
    return kOk;
  } catch (const gptlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const gptlab::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kCheckpoint;
  } catch (const gptlab::ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const gptlab::ValidationError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}

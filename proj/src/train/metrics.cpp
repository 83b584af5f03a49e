#include "gptlab/train/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gptlab/core/errors.hpp"

namespace gptlab::train {

namespace {

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("metric inputs differ in length");
}

void check_binary(std::span<const double> labels) {
  for (double y : labels)
    if (y != 0.0 && y != 1.0) throw ContractError("binary metric labels must be 0 or 1");
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const double> labels) {
  check_sizes(scores.size(), labels.size());
  check_binary(labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney: sum of (tie-averaged) ranks of the positives.
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = static_cast<double>(i + j + 1) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1.0) {
        rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw MetricError("AUROC is undefined unless both classes are present");
  }
  const double p = static_cast<double>(positives);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

double average_precision(std::span<const double> scores, std::span<const double> labels) {
  check_sizes(scores.size(), labels.size());
  check_binary(labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] == 1.0) {
      ++hits;
      total += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  if (hits == 0) throw MetricError("average precision needs at least one positive");
  return total / static_cast<double>(hits);
}

double mse(std::span<const double> predictions, std::span<const double> targets) {
  check_sizes(predictions.size(), targets.size());
  if (predictions.empty()) throw MetricError("mse of an empty set");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    s += d * d;
  }
  return s / static_cast<double>(predictions.size());
}

double rmse(std::span<const double> predictions, std::span<const double> targets) {
  return std::sqrt(mse(predictions, targets));
}

Metric parse_metric(const std::string& text) {
  if (text == "auroc") return Metric::kAuroc;
  if (text == "ap") return Metric::kAveragePrecision;
  if (text == "rmse") return Metric::kRmse;
  throw ConfigError("unknown metric '" + text + "' (expected auroc, ap or rmse)");
}

std::string metric_name(Metric metric) {
  switch (metric) {
    case Metric::kAuroc: return "auroc";
    case Metric::kAveragePrecision: return "ap";
    case Metric::kRmse: return "rmse";
  }
  return "auroc";
}

bool higher_is_better(Metric metric) { return metric != Metric::kRmse; }

double evaluate(Metric metric, const Tensor& predictions, const Tensor& labels,
                std::span<const std::uint8_t> label_mask) {
  if (predictions.shape() != labels.shape() || predictions.rank() != 2) {
    throw ShapeError("evaluate: predictions " + shape_string(predictions.shape()) +
                     " vs labels " + shape_string(labels.shape()));
  }
  const std::size_t n = predictions.rows(), t = predictions.cols();
  if (label_mask.size() != n * t) throw ShapeError("evaluate: label mask size mismatch");
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < t; ++c) {
    std::vector<double> s, y;
    for (std::size_t r = 0; r < n; ++r) {
      if (!label_mask[r * t + c]) continue;
      s.push_back(predictions.at(r, c));
      y.push_back(labels.at(r, c));
    }
    if (s.empty()) continue;
    if (metric == Metric::kRmse) {
      total += rmse(s, y);
      ++used;
      continue;
    }
    const auto positives = std::count(y.begin(), y.end(), 1.0);
    if (positives == 0 || positives == static_cast<long>(y.size())) continue;
    total += metric == Metric::kAuroc ? auroc(s, y) : average_precision(s, y);
    ++used;
  }
  if (used == 0) throw MetricError("no label column has a defined " + metric_name(metric));
  return total / static_cast<double>(used);
}

}  // namespace gptlab::train

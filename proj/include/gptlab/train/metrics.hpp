#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "gptlab/core/tensor.hpp"

namespace gptlab::train {

// Labels are 0 or 1. Both classes must be present (MetricError otherwise).
double auroc(std::span<const double> scores, std::span<const double> labels);
// Needs at least one positive. Ties keep input order.
double average_precision(std::span<const double> scores, std::span<const double> labels);

double mse(std::span<const double> predictions, std::span<const double> targets);
double rmse(std::span<const double> predictions, std::span<const double> targets);

enum class Metric { kAuroc, kAveragePrecision, kRmse };

Metric parse_metric(const std::string& text);
std::string metric_name(Metric metric);
bool higher_is_better(Metric metric);

// Column-wise metric over [n x t] predictions, averaged across the columns.
// Masked entries are skipped; classification columns that lack a class are
// skipped too. Throws MetricError when no column qualifies.
double evaluate(Metric metric, const Tensor& predictions, const Tensor& labels,
                std::span<const std::uint8_t> label_mask);

}  // namespace gptlab::train

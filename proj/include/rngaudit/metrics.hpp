#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rngaudit/sts.hpp"

namespace rngaudit::metrics {

/// Confusion tallies for one label; "positive" means the test passed.
struct LabelCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t support() const noexcept { return tp + fn; }
  double precision() const noexcept;
  double recall() const noexcept;
  double f1() const noexcept;

  friend bool operator==(const LabelCounts&, const LabelCounts&) = default;
};

/// Per-label counts. Usually 7 labels in TestId order; fewer are allowed so
/// small hand cases can be checked.
struct ConfusionCounts {
  std::vector<LabelCounts> labels = std::vector<LabelCounts>(sts::kNumTests);

  std::size_t total_support() const noexcept;
  void merge(const ConfusionCounts& other);
};

ConfusionCounts accumulate(std::span<const sts::LabelVector> preds, std::span<const sts::LabelVector> truths);

// A zero denominator anywhere makes the corresponding F1 term 0.
double micro_f1(const ConfusionCounts& c);
double macro_f1(const ConfusionCounts& c);
double weighted_f1(const ConfusionCounts& c);
double sample_f1(std::span<const sts::LabelVector> preds, std::span<const sts::LabelVector> truths);

struct MetricSummary {
  double micro = 0.0;
  double macro = 0.0;
  double weighted = 0.0;
  double sample = 0.0;
  std::vector<double> per_label;
};

MetricSummary summarize(std::span<const sts::LabelVector> preds, std::span<const sts::LabelVector> truths);

/// `metric,value` lines: the four aggregates then f1.<TestName> per label.
std::string format_metric_dump(const MetricSummary& m);

struct TableRow {
  std::string technique;
  double seconds = 0.0;
  std::optional<MetricSummary> metrics;  // absent for the reference suite itself
};

/// Columns: technique, time, micro, macro, weighted, sample.
std::string format_table(std::span<const TableRow> rows);
std::string format_table_csv(std::span<const TableRow> rows);

}  // namespace rngaudit::metrics

#include "rngaudit/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "rngaudit/errors.hpp"

namespace rngaudit::metrics {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double f1_from(std::size_t tp, std::size_t fp, std::size_t fn) {
  return ratio(2.0 * static_cast<double>(tp), static_cast<double>(2 * tp + fp + fn));
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw ArgumentError("prediction/truth count mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[32];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

double LabelCounts::precision() const noexcept { return ratio(static_cast<double>(tp), static_cast<double>(tp + fp)); }
double LabelCounts::recall() const noexcept { return ratio(static_cast<double>(tp), static_cast<double>(tp + fn)); }

double LabelCounts::f1() const noexcept {
  const double p = precision();
  const double r = recall();
  return ratio(2.0 * p * r, p + r);
}

std::size_t ConfusionCounts::total_support() const noexcept {
  std::size_t total = 0;
  for (const auto& l : labels) total += l.support();
  return total;
}

void ConfusionCounts::merge(const ConfusionCounts& other) {
  if (other.labels.size() != labels.size()) throw ArgumentError("label width mismatch");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i].tp += other.labels[i].tp;
    labels[i].fp += other.labels[i].fp;
    labels[i].fn += other.labels[i].fn;
    labels[i].tn += other.labels[i].tn;
  }
}

ConfusionCounts accumulate(std::span<const sts::LabelVector> preds, std::span<const sts::LabelVector> truths) {
  check_lengths(preds.size(), truths.size());
  ConfusionCounts c;
  for (std::size_t r = 0; r < preds.size(); ++r) {
    for (std::size_t t = 0; t < sts::kNumTests; ++t) {
      auto& l = c.labels[t];
      const bool p = preds[r][t];
      const bool y = truths[r][t];
      l.tp += p && y;
      l.fp += p && !y;
      l.fn += !p && y;
      l.tn += !p && !y;
    }
  }
  return c;
}

double micro_f1(const ConfusionCounts& c) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& l : c.labels) {
    tp += l.tp;
    fp += l.fp;
    fn += l.fn;
  }
  const double precision = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
  const double recall = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
  return ratio(2.0 * precision * recall, precision + recall);
}

double macro_f1(const ConfusionCounts& c) {
  if (c.labels.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& l : c.labels) sum += l.f1();
  return sum / static_cast<double>(c.labels.size());
}

double weighted_f1(const ConfusionCounts& c) {
  double sum = 0.0;
  for (const auto& l : c.labels) sum += static_cast<double>(l.support()) * l.f1();
  return ratio(sum, static_cast<double>(c.total_support()));
}

double sample_f1(std::span<const sts::LabelVector> preds, std::span<const sts::LabelVector> truths) {
  check_lengths(preds.size(), truths.size());
  if (preds.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t r = 0; r < preds.size(); ++r) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t t = 0; t < sts::kNumTests; ++t) {
      tp += preds[r][t] && truths[r][t];
      fp += preds[r][t] && !truths[r][t];
      fn += !preds[r][t] && truths[r][t];
    }
    sum += f1_from(tp, fp, fn);
  }
  return sum / static_cast<double>(preds.size());
}

MetricSummary summarize(std::span<const sts::LabelVector> preds, std::span<const sts::LabelVector> truths) {
  const auto c = accumulate(preds, truths);
  MetricSummary m;
  m.micro = micro_f1(c);
  m.macro = macro_f1(c);
  m.weighted = weighted_f1(c);
  m.sample = sample_f1(preds, truths);
  for (const auto& l : c.labels) m.per_label.push_back(l.f1());
  return m;
}

std::string format_metric_dump(const MetricSummary& m) {
  std::ostringstream out;
  out << "micro_f1," << fmt(m.micro, "%.6f") << '\n'
      << "macro_f1," << fmt(m.macro, "%.6f") << '\n'
      << "weighted_f1," << fmt(m.weighted, "%.6f") << '\n'
      << "sample_f1," << fmt(m.sample, "%.6f") << '\n';
  for (std::size_t t = 0; t < m.per_label.size() && t < sts::kNumTests; ++t) {
    out << "f1." << sts::test_name(sts::kAllTests[t]) << ',' << fmt(m.per_label[t], "%.6f") << '\n';
  }
  return out.str();
}

std::string format_table(std::span<const TableRow> rows) {
  char line[160];
  std::ostringstream out;
  std::snprintf(line, sizeof line, "%-12s %18s %9s %9s %11s %10s\n", "Technique", "Inference Time (s)",
                "Micro F1", "Macro F1", "Weighted F1", "Sample F1");
  out << line;
  for (const auto& r : rows) {
    if (r.metrics) {
      std::snprintf(line, sizeof line, "%-12s %18.3f %9.4f %9.4f %11.4f %10.4f\n", r.technique.c_str(), r.seconds,
                    r.metrics->micro, r.metrics->macro, r.metrics->weighted, r.metrics->sample);
    } else {
      std::snprintf(line, sizeof line, "%-12s %18.3f %9s %9s %11s %10s\n", r.technique.c_str(), r.seconds, "-", "-",
                    "-", "-");
    }
    out << line;
  }
  return out.str();
}

std::string format_table_csv(std::span<const TableRow> rows) {
  std::ostringstream out;
  out << "technique,time_s,micro_f1,macro_f1,weighted_f1,sample_f1\n";
  for (const auto& r : rows) {
    out << r.technique << ',' << fmt(r.seconds, "%.6f");
    if (r.metrics) {
      out << ',' << fmt(r.metrics->micro, "%.6f") << ',' << fmt(r.metrics->macro, "%.6f") << ','
          << fmt(r.metrics->weighted, "%.6f") << ',' << fmt(r.metrics->sample, "%.6f");
    } else {
      out << ",-,-,-,-";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace rngaudit::metrics

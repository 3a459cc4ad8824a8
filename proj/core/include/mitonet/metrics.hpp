#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace mitonet::metrics {

struct ScoredSample {
  double score = 0.0;
  int label = 0;
  int domain = 0;
};

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Undefined metrics (zero denominators, missing class) are std::nullopt.
struct MetricRow {
  std::optional<double> bacc;
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> roc_auc;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct DomainReport {
  std::map<int, MetricRow> per_domain;
  std::map<int, ConfusionCounts> per_domain_counts;
  MetricRow overall_pooled;
  ConfusionCounts pooled_counts;
  MetricRow overall_macro;
  double threshold = 0.5;

  friend bool operator==(const DomainReport&, const DomainReport&) = default;
};

inline constexpr double kDefaultThreshold = 0.5;

// Positive iff score >= threshold.
ConfusionCounts confusion_at_threshold(std::span<const ScoredSample> samples, double threshold);

MetricRow summarize(const ConfusionCounts& counts);

// Mann-Whitney AUC with half credit for ties, O(n log n).
std::optional<double> roc_auc(std::span<const ScoredSample> samples);

DomainReport domain_report(std::span<const ScoredSample> samples, double threshold);

// JSON report: 3-decimal rounded rows plus unrounded values under "raw".
nlohmann::json render_report(const DomainReport& report);
// Rebuilds a report from the "raw" section of render_report's output.
DomainReport parse_report(const nlohmann::json& doc);

// Whitespace-separated "bacc accuracy sensitivity specificity roc_auc" with
// three decimals; undefined values print as "-".
std::string format_row(const MetricRow& row);

// Table layout with one line per domain plus the overall rows.
std::string format_table(const DomainReport& report);

}  // namespace mitonet::metrics

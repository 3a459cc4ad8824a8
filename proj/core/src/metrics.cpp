#include "mitonet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "mitonet/errors.hpp"

namespace mitonet::metrics {
namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json opt_json(const std::optional<double>& v, bool rounded) {
  if (!v) return nullptr;
  return rounded ? std::round(*v * 1000.0) / 1000.0 : *v;
}

std::optional<double> opt_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

nlohmann::json row_json(const MetricRow& r, bool rounded) {
  return {{"bacc", opt_json(r.bacc, rounded)},
          {"accuracy", opt_json(r.accuracy, rounded)},
          {"sensitivity", opt_json(r.sensitivity, rounded)},
          {"specificity", opt_json(r.specificity, rounded)},
          {"roc_auc", opt_json(r.roc_auc, rounded)}};
}

MetricRow row_from_json(const nlohmann::json& j) {
  return {opt_from_json(j.at("bacc")), opt_from_json(j.at("accuracy")),
          opt_from_json(j.at("sensitivity")), opt_from_json(j.at("specificity")),
          opt_from_json(j.at("roc_auc"))};
}

void add_counts(nlohmann::json& j, const ConfusionCounts& c) {
  j["tp"] = c.tp;
  j["fp"] = c.fp;
  j["tn"] = c.tn;
  j["fn"] = c.fn;
}

ConfusionCounts counts_from_json(const nlohmann::json& j) {
  return {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
          j.at("tn").get<std::size_t>(), j.at("fn").get<std::size_t>()};
}

void check_scores(std::span<const ScoredSample> samples) {
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw std::invalid_argument("non-finite score");
  }
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

}  // namespace

ConfusionCounts confusion_at_threshold(std::span<const ScoredSample> samples, double threshold) {
  if (samples.empty()) throw EmptyInput("confusion_at_threshold: no samples");
  ConfusionCounts c;
  for (const auto& s : samples) {
    const bool predicted = s.score >= threshold;
    if (s.label == 1) {
      (predicted ? c.tp : c.fn)++;
    } else {
      (predicted ? c.fp : c.tn)++;
    }
  }
  return c;
}

MetricRow summarize(const ConfusionCounts& c) {
  MetricRow r;
  r.sensitivity = ratio(c.tp, c.tp + c.fn);
  r.specificity = ratio(c.tn, c.tn + c.fp);
  r.accuracy = ratio(c.tp + c.tn, c.total());
  if (r.sensitivity && r.specificity) r.bacc = (*r.sensitivity + *r.specificity) / 2.0;
  return r;
}

std::optional<double> roc_auc(std::span<const ScoredSample> samples) {
  check_scores(samples);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });

  // Doubled mid-ranks keep everything in exact integer arithmetic.
  std::int64_t rank_sum_x2 = 0;
  std::int64_t n_pos = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && samples[order[j]].score == samples[order[i]].score) ++j;
    const auto mid_rank_x2 = static_cast<std::int64_t>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (samples[order[k]].label == 1) {
        rank_sum_x2 += mid_rank_x2;
        ++n_pos;
      }
    }
    i = j;
  }
  const auto n_neg = static_cast<std::int64_t>(samples.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const std::int64_t u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
  return static_cast<double>(u_x2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

DomainReport domain_report(std::span<const ScoredSample> samples, double threshold) {
  if (samples.empty()) throw EmptyInput("domain_report: no samples");
  DomainReport report;
  report.threshold = threshold;

  std::map<int, std::vector<ScoredSample>> groups;
  for (const auto& s : samples) groups[s.domain].push_back(s);

  for (const auto& [domain, group] : groups) {
    const ConfusionCounts c = confusion_at_threshold(group, threshold);
    MetricRow row = summarize(c);
    row.roc_auc = roc_auc(group);
    report.per_domain[domain] = row;
    report.per_domain_counts[domain] = c;
  }
  report.pooled_counts = confusion_at_threshold(samples, threshold);
  report.overall_pooled = summarize(report.pooled_counts);
  report.overall_pooled.roc_auc = roc_auc(samples);

  auto macro = [&](std::optional<double> MetricRow::*field) -> std::optional<double> {
    double sum = 0.0;
    int n = 0;
    for (const auto& [domain, row] : report.per_domain) {
      if (const auto& v = row.*field) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
  };
  report.overall_macro.bacc = macro(&MetricRow::bacc);
  report.overall_macro.accuracy = macro(&MetricRow::accuracy);
  report.overall_macro.sensitivity = macro(&MetricRow::sensitivity);
  report.overall_macro.specificity = macro(&MetricRow::specificity);
  report.overall_macro.roc_auc = macro(&MetricRow::roc_auc);
  return report;
}

nlohmann::json render_report(const DomainReport& report) {
  nlohmann::json doc;
  doc["per_domain"] = nlohmann::json::array();
  nlohmann::json raw_domains = nlohmann::json::array();
  for (const auto& [domain, row] : report.per_domain) {
    nlohmann::json rounded = row_json(row, true);
    rounded["domain"] = domain;
    doc["per_domain"].push_back(rounded);

    nlohmann::json raw = row_json(row, false);
    raw["domain"] = domain;
    if (auto it = report.per_domain_counts.find(domain); it != report.per_domain_counts.end()) {
      add_counts(raw, it->second);
    }
    raw_domains.push_back(raw);
  }
  doc["overall_pooled"] = row_json(report.overall_pooled, true);
  doc["overall_macro"] = row_json(report.overall_macro, true);

  nlohmann::json raw_pooled = row_json(report.overall_pooled, false);
  add_counts(raw_pooled, report.pooled_counts);
  doc["raw"] = {{"per_domain", raw_domains},
                {"overall_pooled", raw_pooled},
                {"overall_macro", row_json(report.overall_macro, false)}};
  doc["threshold"] = report.threshold;
  return doc;
}

DomainReport parse_report(const nlohmann::json& doc) {
  DomainReport report;
  const auto& raw = doc.at("raw");
  for (const auto& d : raw.at("per_domain")) {
    const int domain = d.at("domain").get<int>();
    report.per_domain[domain] = row_from_json(d);
    if (d.contains("tp")) report.per_domain_counts[domain] = counts_from_json(d);
  }
  report.overall_pooled = row_from_json(raw.at("overall_pooled"));
  if (raw.at("overall_pooled").contains("tp")) {
    report.pooled_counts = counts_from_json(raw.at("overall_pooled"));
  }
  report.overall_macro = row_from_json(raw.at("overall_macro"));
  report.threshold = doc.at("threshold").get<double>();
  return report;
}

std::string format_row(const MetricRow& row) {
  return cell(row.bacc) + " " + cell(row.accuracy) + " " + cell(row.sensitivity) + " " +
         cell(row.specificity) + " " + cell(row.roc_auc);
}

std::string format_table(const DomainReport& report) {
  std::string out;
  char line[160];
  auto emit = [&](const std::string& label, const MetricRow& r) {
    std::snprintf(line, sizeof line, "%-16s %8s %9s %12s %12s %8s\n", label.c_str(),
                  cell(r.bacc).c_str(), cell(r.accuracy).c_str(), cell(r.sensitivity).c_str(),
                  cell(r.specificity).c_str(), cell(r.roc_auc).c_str());
    out += line;
  };
  std::snprintf(line, sizeof line, "%-16s %8s %9s %12s %12s %8s\n", "Domain", "BAcc", "Accuracy",
                "Sensitivity", "Specificity", "ROC-AUC");
  out += line;
  out += std::string(70, '-') + "\n";
  for (const auto& [domain, row] : report.per_domain) emit(std::to_string(domain), row);
  out += std::string(70, '-') + "\n";
  emit("Overall (pooled)", report.overall_pooled);
  emit("Overall (macro)", report.overall_macro);
  std::snprintf(line, sizeof line, "threshold %.3f\n", report.threshold);
  out += line;
  return out;
}

}  // namespace mitonet::metrics

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "mitonet/errors.hpp"
#include "mitonet/metrics.hpp"
#include "oracles.hpp"

namespace mitonet::metrics {
namespace {

using testing::brute_force_auc;

std::vector<ScoredSample> random_samples(Rng& rng, std::size_t n, int n_domains, int levels) {
  std::vector<ScoredSample> s;
  for (std::size_t i = 0; i < n; ++i) {
    // Few score levels force ties.
    const double score = static_cast<double>(uniform_int(rng, 0, levels)) / levels;
    s.push_back({score, static_cast<int>(uniform_int(rng, 0, 1)),
                 static_cast<int>(uniform_int(rng, 0, n_domains - 1))});
  }
  return s;
}

// Table 3 of the MIDOG25 results: bacc, accuracy, sensitivity, specificity, auc.
struct PrintedRow {
  double bacc, acc, sens, spec, auc;
};
const PrintedRow kTable3[] = {
    {0.828, 0.770, 0.917, 0.740, 0.902}, {0.967, 0.946, 1.000, 0.933, 0.995},
    {0.814, 0.758, 0.966, 0.661, 0.936}, {0.820, 0.822, 0.818, 0.822, 0.900},
    {0.756, 0.925, 0.571, 0.940, 0.874}, {0.838, 0.784, 0.944, 0.732, 0.934},
    {0.870, 0.839, 0.913, 0.827, 0.933}, {0.816, 0.814, 0.820, 0.812, 0.903},
    {0.861, 0.840, 0.902, 0.821, 0.943}, {0.789, 0.890, 0.677, 0.901, 0.887},
    {0.747, 0.758, 0.861, 0.633, 0.886}, {0.783, 0.715, 0.884, 0.682, 0.867},
};
const PrintedRow kTable3Overall{0.850, 0.823, 0.892, 0.809, 0.927};

TEST(Confusion, Examples) {
  const std::vector<ScoredSample> s{{0.9, 1, 0}, {0.1, 0, 0}};
  EXPECT_EQ(confusion_at_threshold(s, 0.5), (ConfusionCounts{1, 0, 1, 0}));
  const auto all = confusion_at_threshold(s, 0.0);
  EXPECT_EQ(all.fp, 1u);
  EXPECT_EQ(all.tp, 1u);
  EXPECT_THROW(confusion_at_threshold({}, 0.5), EmptyInput);
}

TEST(Confusion, ThresholdIsInclusive) {
  const std::vector<ScoredSample> s{{0.5, 1, 0}, {0.5, 0, 0}};
  const auto c = confusion_at_threshold(s, 0.5);
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.fp, 1u);
}

TEST(Confusion, CountsPartitionSamples) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto s = random_samples(rng, 1 + t * 3, 2, 10);
    EXPECT_EQ(confusion_at_threshold(s, uniform(rng, 0, 1)).total(), s.size());
  }
}

TEST(Summarize, PaperRows) {
  // sens 0.892 / spec 0.809 as counts 892/1000 and 809/1000.
  const auto r = summarize({892, 191, 809, 108});
  EXPECT_NEAR(*r.bacc, 0.8505, 1e-12);
  const auto d1 = summarize({1000, 67, 933, 0});
  EXPECT_NEAR(*d1.bacc, 0.9665, 1e-12);
  EXPECT_NEAR(*d1.sensitivity, 1.0, 0.0);
}

TEST(Summarize, UndefinedRecall) {
  const auto r = summarize({0, 3, 5, 0});
  EXPECT_FALSE(r.sensitivity.has_value());
  EXPECT_FALSE(r.bacc.has_value());
  EXPECT_NEAR(*r.specificity, 5.0 / 8, 1e-15);
  EXPECT_NEAR(*r.accuracy, 5.0 / 8, 1e-15);
  EXPECT_FALSE(r.roc_auc.has_value());
  const auto empty = summarize({});
  EXPECT_FALSE(empty.accuracy.has_value());
}

TEST(Summarize, BaccIsMeanOfRecalls) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    ConfusionCounts c{static_cast<std::size_t>(uniform_int(rng, 0, 50)),
                      static_cast<std::size_t>(uniform_int(rng, 0, 50)),
                      static_cast<std::size_t>(uniform_int(rng, 0, 50)),
                      static_cast<std::size_t>(uniform_int(rng, 0, 50))};
    const auto r = summarize(c);
    if (r.sensitivity && r.specificity) {
      EXPECT_EQ(*r.bacc, (*r.sensitivity + *r.specificity) / 2);
    } else {
      EXPECT_FALSE(r.bacc.has_value());
    }
  }
}

TEST(PaperTable3, PrintedBaccIsMeanOfPrintedRecalls) {
  for (const auto& row : kTable3) {
    EXPECT_LE(std::abs(row.bacc - (row.sens + row.spec) / 2), 0.0005 + 1e-12) << row.bacc;
  }
  EXPECT_LE(std::abs(kTable3Overall.bacc - (kTable3Overall.sens + kTable3Overall.spec) / 2),
            0.0005 + 1e-12);
}

TEST(PaperTable3, OverallIsNotTheMacroMean) {
  double macro = 0;
  for (const auto& row : kTable3) macro += row.bacc;
  macro /= std::size(kTable3);
  EXPECT_NEAR(macro, 0.824, 0.0005);
  EXPECT_GT(kTable3Overall.bacc - macro, 0.02);
}

TEST(RocAuc, Examples) {
  const std::vector<ScoredSample> s{{0.1, 0, 0}, {0.4, 0, 0}, {0.35, 1, 0}, {0.8, 1, 0}};
  EXPECT_EQ(*roc_auc(s), 0.75);
  const std::vector<ScoredSample> sep{{0.1, 0, 0}, {0.2, 0, 0}, {0.7, 1, 0}};
  EXPECT_EQ(*roc_auc(sep), 1.0);
  const std::vector<ScoredSample> ties{{0.3, 0, 0}, {0.3, 1, 0}, {0.3, 1, 0}, {0.3, 0, 0}};
  EXPECT_EQ(*roc_auc(ties), 0.5);
  const std::vector<ScoredSample> one_class{{0.3, 1, 0}, {0.6, 1, 0}};
  EXPECT_FALSE(roc_auc(one_class).has_value());
  EXPECT_FALSE(roc_auc({}).has_value());
}

TEST(RocAuc, EqualsBruteForceExactly) {
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    const auto s = random_samples(rng, static_cast<std::size_t>(uniform_int(rng, 1, 50)), 1,
                                  static_cast<int>(uniform_int(rng, 1, 20)));
    const auto fast = roc_auc(s);
    const auto slow = brute_force_auc(s);
    ASSERT_EQ(fast.has_value(), slow.has_value());
    if (fast) EXPECT_EQ(*fast, *slow) << "instance " << t;
  }
}

TEST(RocAuc, InvariantUnderIncreasingTransforms) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    auto s = random_samples(rng, 40, 1, 15);
    const auto base = roc_auc(s);
    auto affine = s;
    auto cubic = s;
    for (auto& x : affine) x.score = 0.1 + 0.5 * x.score;
    for (auto& x : cubic) x.score = std::pow(x.score, 3) / 2 + 0.2;
    EXPECT_EQ(roc_auc(affine), base);
    EXPECT_EQ(roc_auc(cubic), base);
  }
}

TEST(RocAuc, LabelFlipComplements) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    auto s = random_samples(rng, 30, 1, 8);
    const auto base = roc_auc(s);
    if (!base) continue;
    for (auto& x : s) x.label = 1 - x.label;
    EXPECT_NEAR(*roc_auc(s), 1.0 - *base, 1e-15);
  }
}

TEST(DomainReport, SingleDomainCollapses) {
  Rng rng(6);
  auto s = random_samples(rng, 60, 1, 10);
  for (auto& x : s) x.domain = 4;
  const auto r = domain_report(s, 0.5);
  ASSERT_EQ(r.per_domain.size(), 1u);
  EXPECT_EQ(r.per_domain.at(4), r.overall_pooled);
  EXPECT_EQ(r.overall_macro, r.overall_pooled);
}

TEST(DomainReport, IdenticalDomainsMacroEqualsPooled) {
  Rng rng(7);
  const auto base = random_samples(rng, 40, 1, 10);
  std::vector<ScoredSample> s;
  for (int d : {0, 1}) {
    for (auto x : base) {
      x.domain = d;
      s.push_back(x);
    }
  }
  const auto r = domain_report(s, 0.5);
  EXPECT_NEAR(*r.overall_macro.bacc, *r.overall_pooled.bacc, 1e-12);
  EXPECT_NEAR(*r.overall_macro.accuracy, *r.overall_pooled.accuracy, 1e-12);
  EXPECT_NEAR(*r.overall_macro.roc_auc, *r.overall_pooled.roc_auc, 1e-12);
}

TEST(DomainReport, HandBuiltCounts) {
  // Domain 0: tp 3 fn 1 tn 4 fp 2.  Domain 1: tp 1 fn 1 tn 5 fp 0.
  // Domain 2: negatives only, tn 2 fp 1.
  std::vector<ScoredSample> s;
  auto add = [&](int d, int label, double score, int times) {
    for (int i = 0; i < times; ++i) s.push_back({score, label, d});
  };
  add(0, 1, 0.9, 3);
  add(0, 1, 0.2, 1);
  add(0, 0, 0.1, 4);
  add(0, 0, 0.6, 2);
  add(1, 1, 0.7, 1);
  add(1, 1, 0.4, 1);
  add(1, 0, 0.3, 5);
  add(2, 0, 0.2, 2);
  add(2, 0, 0.8, 1);
  const auto r = domain_report(s, 0.5);
  ASSERT_EQ(r.per_domain.size(), 3u);

  const auto& d0 = r.per_domain.at(0);
  EXPECT_DOUBLE_EQ(*d0.sensitivity, 0.75);
  EXPECT_DOUBLE_EQ(*d0.specificity, 4.0 / 6);
  EXPECT_DOUBLE_EQ(*d0.accuracy, 0.7);
  EXPECT_DOUBLE_EQ(*d0.bacc, (0.75 + 4.0 / 6) / 2);
  // Pairs: 3 high positives beat all 6 negatives (18); 0.2 beats the four 0.1s.
  EXPECT_DOUBLE_EQ(*d0.roc_auc, 22.0 / 24);

  const auto& d1 = r.per_domain.at(1);
  EXPECT_DOUBLE_EQ(*d1.sensitivity, 0.5);
  EXPECT_DOUBLE_EQ(*d1.specificity, 1.0);
  EXPECT_DOUBLE_EQ(*d1.roc_auc, 1.0);

  const auto& d2 = r.per_domain.at(2);
  EXPECT_FALSE(d2.sensitivity.has_value());
  EXPECT_FALSE(d2.bacc.has_value());
  EXPECT_FALSE(d2.roc_auc.has_value());
  EXPECT_DOUBLE_EQ(*d2.specificity, 2.0 / 3);

  EXPECT_EQ(r.pooled_counts, (ConfusionCounts{4, 3, 11, 2}));
  EXPECT_DOUBLE_EQ(*r.overall_pooled.sensitivity, 4.0 / 6);
  EXPECT_DOUBLE_EQ(*r.overall_pooled.specificity, 11.0 / 14);
  // Macro skips undefined entries: bacc over domains 0 and 1 only.
  EXPECT_DOUBLE_EQ(*r.overall_macro.bacc, ((0.75 + 4.0 / 6) / 2 + 0.75) / 2);
  EXPECT_DOUBLE_EQ(*r.overall_macro.specificity, (4.0 / 6 + 1.0 + 2.0 / 3) / 3);
}

TEST(DomainReport, PooledCountsAreSumOfDomains) {
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    const auto s = random_samples(rng, 80, 4, 12);
    const auto r = domain_report(s, uniform(rng, 0.1, 0.9));
    ConfusionCounts sum;
    for (const auto& [d, c] : r.per_domain_counts) sum += c;
    EXPECT_EQ(sum, r.pooled_counts);
    std::set<int> present;
    for (const auto& x : s) present.insert(x.domain);
    EXPECT_EQ(r.per_domain.size(), present.size());
  }
}

TEST(DomainReport, EmptyThrows) { EXPECT_THROW(domain_report({}, 0.5), EmptyInput); }

TEST(Render, Table3OverallRow) {
  const MetricRow row{kTable3Overall.bacc, kTable3Overall.acc, kTable3Overall.sens,
                      kTable3Overall.spec, kTable3Overall.auc};
  EXPECT_EQ(format_row(row), "0.850 0.823 0.892 0.809 0.927");
  DomainReport r;
  r.overall_pooled = row;
  const auto doc = render_report(r);
  EXPECT_DOUBLE_EQ(doc["overall_pooled"]["bacc"].get<double>(), 0.85);
  EXPECT_DOUBLE_EQ(doc["overall_pooled"]["roc_auc"].get<double>(), 0.927);
}

TEST(Render, UndefinedIsNull) {
  DomainReport r;
  r.per_domain[3] = MetricRow{std::nullopt, 0.5, std::nullopt, 0.5, std::nullopt};
  const auto doc = render_report(r);
  EXPECT_TRUE(doc["per_domain"][0]["bacc"].is_null());
  EXPECT_TRUE(doc["per_domain"][0]["roc_auc"].is_null());
  EXPECT_EQ(doc["per_domain"][0]["domain"].get<int>(), 3);
  EXPECT_EQ(format_row(r.per_domain[3]), "- 0.500 - 0.500 -");
}

TEST(Render, RoundsOnlyAtRenderTime) {
  DomainReport r;
  r.overall_pooled.bacc = 0.123456789;
  const auto doc = render_report(r);
  EXPECT_DOUBLE_EQ(doc["overall_pooled"]["bacc"].get<double>(), 0.123);
  EXPECT_EQ(*parse_report(doc).overall_pooled.bacc, 0.123456789);
}

TEST(Render, RoundTripThroughText) {
  Rng rng(9);
  const auto s = random_samples(rng, 120, 3, 1000);
  const auto r = domain_report(s, 0.37);
  const auto text = render_report(r).dump();
  EXPECT_EQ(parse_report(nlohmann::json::parse(text)), r);
}

TEST(Render, TableListsEveryDomain) {
  Rng rng(10);
  const auto r = domain_report(random_samples(rng, 100, 3, 10), 0.5);
  const auto table = format_table(r);
  for (const auto& [d, row] : r.per_domain) {
    EXPECT_NE(table.find(format_row(row).substr(0, 5)), std::string::npos);
  }
  EXPECT_NE(table.find("Overall (pooled)"), std::string::npos);
}

}  // namespace
}  // namespace mitonet::metrics

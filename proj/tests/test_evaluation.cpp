#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mushroom/errors.hpp"
#include "mushroom/evaluation.hpp"
#include "mushroom/random.hpp"
#include "mushroom/text_io.hpp"

#include <random>

using namespace mushroom;

namespace {

// Three-class matrix whose class 0 has the requested one-vs-rest counts.
ConfusionMatrix with_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn, std::int64_t rest = 50) {
  ConfusionMatrix cm(3);
  cm.counts = {{tp, fn - fn / 2, fn / 2}, {fp / 2, rest, 3}, {fp - fp / 2, 2, rest}};
  return cm;
}

// P(score of a positive > score of a negative) + 1/2 P(tie), by exhaustive pairing.
double pair_counting_auc(const std::vector<double>& s, const std::vector<int>& y, int c) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != c || y[j] == c) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  return wins / pairs;
}

std::vector<std::string> split_lines(const std::string& s) {
  auto lines = split(s, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

} // namespace

TEST_CASE("per-class counts") {
  ConfusionMatrix cm(2);
  cm.counts = {{3, 1}, {2, 4}};
  const ClassCounts c = per_class_counts(cm, 0);
  CHECK(c.tp == 3);
  CHECK(c.fp == 2);
  CHECK(c.fn == 1);
  CHECK(c.tn == 4);

  ConfusionMatrix diag(4);
  for (int i = 0; i < 4; ++i) diag.counts[i][i] = 5 + i;
  for (int i = 0; i < 4; ++i) {
    const ClassCounts d = per_class_counts(diag, i);
    CHECK(d.fp == 0);
    CHECK(d.fn == 0);
    CHECK(d.tp + d.fp + d.fn + d.tn == diag.total());
  }

  const int truth[] = {0, 1, 2, 2, 1};
  const int pred[] = {0, 2, 2, 1, 1};
  const ConfusionMatrix built = ConfusionMatrix::from_predictions(3, truth, pred);
  CHECK(built.counts[1][2] == 1);
  CHECK(built.correct() == 3);
  CHECK(built.total() == 5);
  const int bad[] = {3};
  const int zero[] = {0};
  CHECK_THROWS_AS(ConfusionMatrix::from_predictions(3, bad, zero), ArgumentError);
}

TEST_CASE("reference class rows") {
  SUBCASE("Hygrocybe") {
    const ConfusionMatrix cm = with_counts(104, 6, 8);
    const ClassMetrics m = metrics(cm, 0);
    CHECK(format_percent(m.precision) == "94.55");
    CHECK(format_percent(m.recall) == "92.86");
    CHECK(format_percent(m.f1) == "93.69");
    CHECK(cm.row_sum(0) == 112);
    CHECK(format_percent(overlap_ratio(cm, 0)) == "88.14");
  }
  SUBCASE("Morchella") {
    const ClassMetrics m = metrics(with_counts(27, 1, 2), 0);
    CHECK(format_percent(m.precision) == "96.43");
    CHECK(format_percent(m.recall) == "93.10");
    CHECK(format_percent(m.f1) == "94.74");
    CHECK(format_percent(overlap_ratio(with_counts(27, 1, 2), 0)) == "90.00");
  }
  SUBCASE("Ophiocordyceps sinensis") {
    const ConfusionMatrix cm = with_counts(24, 1, 5);
    const ClassMetrics m = metrics(cm, 0);
    CHECK(format_percent(m.precision) == "96.00");
    CHECK(format_percent(m.recall) == "82.76");
    CHECK(format_percent(m.f1) == "88.89");
    CHECK(format_percent(overlap_ratio(cm, 0)) == "80.00");
  }
  CHECK(format_percent(Ratio{386, 499}) == "77.35");
  CHECK(format_percent(Ratio{1205, 1436}) == "83.91");
}

TEST_CASE("exact arithmetic and rounding") {
  CHECK(format_percent(Ratio{1, 8}) == "12.50");
  CHECK(format_percent(Ratio{1, 3}) == "33.33");
  CHECK(format_percent(Ratio{2, 3}) == "66.67");
  CHECK(format_percent(Ratio{1, 80000}) == "0.00");  // 0.00125 -> 0.00
  CHECK(format_percent(Ratio{1, 40000}) == "0.00");  // 0.0025 -> 0.00
  CHECK(format_percent(Ratio{1, 20000}) == "0.01");  // 0.005 rounds up
  CHECK(format_percent(Ratio{1, 1}) == "100.00");
  CHECK(format_percent(Ratio{1, 3}, 0) == "33");

  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    ConfusionMatrix cm(4);
    for (auto& row : cm.counts)
      for (auto& v : row) v = static_cast<std::int64_t>(rnd::index(rng, 40));
    for (int c = 0; c < 4; ++c) {
      const ClassMetrics m = metrics(cm, c);
      const ClassCounts n = per_class_counts(cm, c);
      // recall * (TP + FN) == TP in rationals
      CHECK(m.recall.num * (n.tp + n.fn) == n.tp * m.recall.den);
    }
  }
}

TEST_CASE("degenerate classes are flagged, not thrown") {
  ConfusionMatrix cm(3);
  cm.counts = {{5, 0, 0}, {0, 4, 0}, {0, 0, 0}};
  const ClassMetrics m = metrics(cm, 2);
  CHECK(m.degenerate);
  CHECK(m.precision.value() == 0.0);
  CHECK_FALSE(metrics(cm, 0).degenerate);
}

TEST_CASE("relabeling invariance") {
  std::mt19937_64 rng(4);
  ConfusionMatrix cm(5);
  for (auto& row : cm.counts)
    for (auto& v : row) v = static_cast<std::int64_t>(rnd::index(rng, 30));
  std::vector<int> perm = {3, 0, 4, 1, 2};
  ConfusionMatrix p(5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) p.counts[perm[i]][perm[j]] = cm.counts[i][j];
  for (int c = 0; c < 5; ++c) {
    const ClassMetrics a = metrics(cm, c), b = metrics(p, perm[c]);
    CHECK(a.accuracy.num == b.accuracy.num);
    CHECK(a.precision.num == b.precision.num);
    CHECK(a.precision.den == b.precision.den);
    CHECK(a.recall.den == b.recall.den);
    CHECK(a.f1.den == b.f1.den);
  }
}

TEST_CASE("ROC and AUC") {
  const std::vector<int> labels = {0, 0, 1, 1};
  CHECK(auc(roc_curve(std::vector<double>{0.9, 0.8, 0.2, 0.1}, labels, 0)) == 1.0);
  CHECK(auc(roc_curve(std::vector<double>{0.5, 0.5, 0.5, 0.5}, labels, 0)) == 0.5);

  const std::vector<double> hand = {0.7, 0.3, 0.6, 0.3};
  CHECK(auc(roc_curve(hand, labels, 0)) == doctest::Approx(pair_counting_auc(hand, labels, 0)).epsilon(1e-15));
  CHECK(auc(roc_curve(hand, labels, 0)) == 0.625);

  const auto pts = roc_curve(hand, labels, 0);
  CHECK(pts.front().fpr == 0.0);
  CHECK(pts.front().tpr == 0.0);
  CHECK(pts.back().fpr == 1.0);
  CHECK(pts.back().tpr == 1.0);

  std::mt19937_64 rng(8);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> s(40);
    std::vector<int> y(40);
    for (int i = 0; i < 40; ++i) {
      y[i] = static_cast<int>(rnd::index(rng, 3));
      s[i] = static_cast<double>(rnd::index(rng, 7)) / 6.0 + 0.1 * (y[i] == 1);
    }
    y[0] = 1;
    y[1] = 0;
    const auto curve = roc_curve(s, y, 1);
    for (std::size_t i = 1; i < curve.size(); ++i) {
      CHECK(curve[i].fpr >= curve[i - 1].fpr);
      CHECK(curve[i].tpr >= curve[i - 1].tpr);
    }
    const double a = auc(curve);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    CHECK(a == doctest::Approx(pair_counting_auc(s, y, 1)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(roc_curve(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}, 1), DataError);
  CHECK_THROWS_AS(roc_curve(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}, 1), DataError);
}

TEST_CASE("report table") {
  ConfusionMatrix diag(3);
  for (int i = 0; i < 3; ++i) diag.counts[i][i] = 10;
  const auto lines = split_lines(report_table(diag, {"a", "b", "c"}));
  REQUIRE(lines.size() == 5); // header + k rows + totals
  CHECK(lines[0] == "ID,class,identified,correct,accuracy,precision,F1,recall,correct_rate,overlap");
  CHECK(lines[1] == "1,a,10,10,100.00,100.00,100.00,100.00,100.00,100.00");
  CHECK(lines[4] == "-,-,30,30,100.00,100.00,100.00,100.00,100.00,100.00");

  const auto hyg = split_lines(report_table(with_counts(104, 6, 8), {"Hygrocybe", "x", "y"}));
  const auto cells = split(hyg[1], ',');
  CHECK(cells[2] == "112");
  CHECK(cells[3] == "104");
  CHECK(cells[5] == "94.55");
  CHECK(cells[6] == "93.69");
  CHECK(cells[7] == "92.86");
  CHECK(cells[9] == "88.14");

  CHECK_THROWS_AS(report_table(diag, {"a"}), ArgumentError);
  CHECK(split_lines(confusion_csv(diag, {"a", "b", "c"}))[2] == "b,0,10,0");
}

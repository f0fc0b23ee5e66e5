#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mushroom {

/// counts[i][j] = samples of true class i predicted as j.
struct ConfusionMatrix {
  int k = 0;
  std::vector<std::vector<std::int64_t>> counts;

  explicit ConfusionMatrix(int classes = 0);
  static ConfusionMatrix from_predictions(int classes, std::span<const int> truth, std::span<const int> predicted);

  void add(int truth, int predicted);
  std::int64_t total() const;
  std::int64_t correct() const;
  std::int64_t row_sum(int c) const;
  std::int64_t column_sum(int c) const;
};

struct ClassCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

ClassCounts per_class_counts(const ConfusionMatrix& cm, int c);

/// Exact ratio; a zero denominator evaluates to 0 and is reported as undefined.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 0;

  bool defined() const { return den != 0; }
  double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
};

/// 100 * r rounded half-up to `decimals` places using integer arithmetic.
std::string format_percent(const Ratio& r, int decimals = 2);

struct ClassMetrics {
  Ratio accuracy;  // (TP + TN) / (TP + TN + FP + FN)
  Ratio precision; // TP / (TP + FP)
  Ratio recall;    // TP / (TP + FN)
  Ratio f1;        // 2TP / (2TP + FP + FN), the harmonic mean of the two above
  /// True when any of the four has a zero denominator.
  bool degenerate = false;
};

ClassMetrics metrics(const ConfusionMatrix& cm, int c);
Ratio overall_accuracy(const ConfusionMatrix& cm);
/// TP / (TP + FP + FN); the per-class "accuracy" column of the report.
Ratio overlap_ratio(const ConfusionMatrix& cm, int c);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

/// One-vs-rest curve for class c: scores[n] is the class-c score of sample n.
/// Starts at (0,0), ends at (1,1), one point per distinct score.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels, int c);
/// Trapezoidal area under the curve.
double auc(const std::vector<RocPoint>& points);

/// Table layout: ID, class, identified, correct, accuracy, precision, F1,
/// recall, then correct/identified and TP/(TP+FP+FN). The closing totals row
/// carries overall accuracy in the metric columns.
std::string report_table(const ConfusionMatrix& cm, const std::vector<std::string>& names);
std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& names);
std::string roc_csv(const std::vector<RocPoint>& points);

} // namespace mushroom

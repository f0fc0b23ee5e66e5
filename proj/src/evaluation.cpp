#include "mushroom/evaluation.hpp"

#include "mushroom/errors.hpp"
#include "mushroom/text_io.hpp"

#include <algorithm>
#include <numeric>

namespace mushroom {

namespace {

void check_class(const ConfusionMatrix& cm, int c) {
  if (c < 0 || c >= cm.k) {
    throw ArgumentError("class index " + std::to_string(c) + " outside [0," + std::to_string(cm.k) + ")");
  }
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

} // namespace

ConfusionMatrix::ConfusionMatrix(int classes) : k(classes) {
  if (classes < 0) throw ArgumentError("class count must be nonnegative");
  counts.assign(static_cast<std::size_t>(classes), std::vector<std::int64_t>(static_cast<std::size_t>(classes), 0));
}

ConfusionMatrix ConfusionMatrix::from_predictions(int classes, std::span<const int> truth,
                                                  std::span<const int> predicted) {
  if (truth.size() != predicted.size()) {
    throw ArgumentError("truth and prediction counts differ (" + std::to_string(truth.size()) + " vs " +
                        std::to_string(predicted.size()) + ")");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

void ConfusionMatrix::add(int truth, int predicted) {
  check_class(*this, truth);
  check_class(*this, predicted);
  ++counts[truth][predicted];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
  return t;
}

std::int64_t ConfusionMatrix::correct() const {
  std::int64_t t = 0;
  for (int i = 0; i < k; ++i) t += counts[i][i];
  return t;
}

std::int64_t ConfusionMatrix::row_sum(int c) const {
  check_class(*this, c);
  return std::accumulate(counts[c].begin(), counts[c].end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::column_sum(int c) const {
  check_class(*this, c);
  std::int64_t t = 0;
  for (int i = 0; i < k; ++i) t += counts[i][c];
  return t;
}

ClassCounts per_class_counts(const ConfusionMatrix& cm, int c) {
  ClassCounts r;
  r.tp = cm.counts[c][c];
  r.fn = cm.row_sum(c) - r.tp;
  r.fp = cm.column_sum(c) - r.tp;
  r.tn = cm.total() - r.tp - r.fn - r.fp;
  return r;
}

std::string format_percent(const Ratio& r, int decimals) {
  if (!r.defined()) return format_fixed(0.0, decimals);
  if (r.num < 0 || r.den < 0) throw ArgumentError("format_percent expects a nonnegative ratio");
  std::int64_t scale = 100;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  std::int64_t unit = 1;
  for (int i = 0; i < decimals; ++i) unit *= 10;
  // floor(num*scale/den + 1/2)
  const std::int64_t q = (2 * r.num * scale + r.den) / (2 * r.den);
  std::string out = std::to_string(q / unit);
  if (decimals > 0) {
    std::string frac = std::to_string(q % unit);
    out += '.' + std::string(static_cast<std::size_t>(decimals) - frac.size(), '0') + frac;
  }
  return out;
}

ClassMetrics metrics(const ConfusionMatrix& cm, int c) {
  check_class(cm, c);
  const ClassCounts n = per_class_counts(cm, c);
  ClassMetrics m;
  m.accuracy = {n.tp + n.tn, n.tp + n.tn + n.fp + n.fn};
  m.precision = {n.tp, n.tp + n.fp};
  m.recall = {n.tp, n.tp + n.fn};
  m.f1 = {2 * n.tp, 2 * n.tp + n.fp + n.fn};
  m.degenerate = !m.accuracy.defined() || !m.precision.defined() || !m.recall.defined() || !m.f1.defined();
  return m;
}

Ratio overall_accuracy(const ConfusionMatrix& cm) { return {cm.correct(), cm.total()}; }

Ratio overlap_ratio(const ConfusionMatrix& cm, int c) {
  check_class(cm, c);
  const ClassCounts n = per_class_counts(cm, c);
  return {n.tp, n.tp + n.fp + n.fn};
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels, int c) {
  if (scores.size() != labels.size()) throw ArgumentError("roc_curve: score and label counts differ");
  std::int64_t positives = 0;
  for (int l : labels) positives += l == c;
  const auto negatives = static_cast<std::int64_t>(labels.size()) - positives;
  if (positives == 0) throw DataError("roc_curve: class " + std::to_string(c) + " is absent from the labels");
  if (negatives == 0) throw DataError("roc_curve: class " + std::to_string(c) + " has no negative samples");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> points;
  points.push_back({scores[order.front()] + 1.0, 0.0, 0.0});
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (labels[order[i]] == c) ++tp;
    else ++fp;
    const bool last_of_group = i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]];
    if (last_of_group) {
      points.push_back({scores[order[i]], static_cast<double>(fp) / static_cast<double>(negatives),
                        static_cast<double>(tp) / static_cast<double>(positives)});
    }
  }
  return points;
}

double auc(const std::vector<RocPoint>& points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

std::string report_table(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
  if (static_cast<int>(names.size()) != cm.k) throw ArgumentError("report_table: name count differs from class count");
  std::string out = "ID,class,identified,correct,accuracy,precision,F1,recall,correct_rate,overlap\n";
  for (int c = 0; c < cm.k; ++c) {
    const ClassMetrics m = metrics(cm, c);
    const std::int64_t identified = cm.row_sum(c);
    out += std::to_string(c + 1) + ',' + csv_field(names[c]) + ',' + std::to_string(identified) + ',' +
           std::to_string(cm.counts[c][c]) + ',' + format_percent(m.accuracy) + ',' + format_percent(m.precision) +
           ',' + format_percent(m.f1) + ',' + format_percent(m.recall) + ',' +
           format_percent({cm.counts[c][c], identified}) + ',' + format_percent(overlap_ratio(cm, c)) + '\n';
  }
  const std::string overall = format_percent(overall_accuracy(cm));
  out += "-,-," + std::to_string(cm.total()) + ',' + std::to_string(cm.correct());
  for (int i = 0; i < 6; ++i) out += ',' + overall;
  out += '\n';
  return out;
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
  if (static_cast<int>(names.size()) != cm.k) throw ArgumentError("confusion_csv: name count differs from class count");
  std::string out = "true\\predicted";
  for (const auto& n : names) out += ',' + csv_field(n);
  out += '\n';
  for (int i = 0; i < cm.k; ++i) {
    out += csv_field(names[i]);
    for (auto v : cm.counts[i]) out += ',' + std::to_string(v);
    out += '\n';
  }
  return out;
}

std::string roc_csv(const std::vector<RocPoint>& points) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : points) {
    out += format_double(p.threshold) + ',' + format_double(p.fpr) + ',' + format_double(p.tpr) + '\n';
  }
  return out;
}

} // namespace mushroom

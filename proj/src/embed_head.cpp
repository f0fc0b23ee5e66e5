#include "mushroom/embed_head.hpp"

#include "mushroom/errors.hpp"
#include "mushroom/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mushroom {

EmbeddingTargetSet build_targets(const GeneticDistanceMatrix& d, Normalization normalization,
                                 std::optional<double> diagonal, const std::vector<std::string>& drop) {
  std::vector<std::size_t> keep;
  for (const auto& name : drop) d.index_of(name);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (std::find(drop.begin(), drop.end(), d.names[i]) == drop.end()) keep.push_back(i);
  }
  if (keep.size() < 2) throw ArgumentError("target subset must keep at least 2 species");

  EmbeddingTargetSet t;
  t.normalization = normalization;
  t.diagonal = diagonal;
  t.dropped = drop;
  const std::size_t k = keep.size();
  t.targets.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    t.names.push_back(d.names[keep[i]]);
    for (std::size_t j = 0; j < k; ++j) t.targets[i][j] = d.values[keep[i]][keep[j]];
  }

  if (normalization == Normalization::MinMax) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        if (i != j) {
          lo = std::min(lo, t.targets[i][j]);
          hi = std::max(hi, t.targets[i][j]);
        }
    if (!(hi > lo)) throw DataError("min-max normalization needs distinct off-diagonal distances");
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        if (i != j) t.targets[i][j] = (t.targets[i][j] - lo) / (hi - lo);
  }
  if (diagonal) {
    for (std::size_t i = 0; i < k; ++i) t.targets[i][i] = *diagonal;
  }
  return t;
}

std::vector<std::vector<double>> reference_matrix(const EmbeddingTargetSet& targets) {
  auto ref = targets.targets;
  for (std::size_t i = 0; i < ref.size(); ++i) ref[i][i] = 0.0;
  return ref;
}

std::string_view head_variant_name(HeadVariant v) {
  switch (v) {
  case HeadVariant::Softmax: return "softmax";
  case HeadVariant::MseSum: return "mse_sum";
  case HeadVariant::MseMean: return "mse_mean";
  case HeadVariant::Mae: return "mae";
  }
  return "unknown";
}

HeadVariant parse_head_variant(std::string_view name) {
  for (auto v : {HeadVariant::Softmax, HeadVariant::MseSum, HeadVariant::MseMean, HeadVariant::Mae})
    if (head_variant_name(v) == name) return v;
  throw ArgumentError("unknown head variant '" + std::string(name) + "' (expected softmax, mse_sum, mse_mean or mae)");
}

std::string_view distance_metric_name(DistanceMetric m) {
  return m == DistanceMetric::Cosine ? "cosine" : "euclidean";
}

DistanceMetric parse_distance_metric(std::string_view name) {
  if (name == "cosine") return DistanceMetric::Cosine;
  if (name == "euclidean") return DistanceMetric::Euclidean;
  throw ArgumentError("unknown distance metric '" + std::string(name) + "' (expected cosine or euclidean)");
}

Normalization parse_normalization(std::string_view name) {
  if (name == "none") return Normalization::None;
  if (name == "minmax") return Normalization::MinMax;
  throw ArgumentError("unknown normalization '" + std::string(name) + "' (expected none or minmax)");
}

std::string_view normalization_name(Normalization n) { return n == Normalization::MinMax ? "minmax" : "none"; }

Tensor head_loss(const Tensor& pred, std::span<const int> classes, const EmbeddingTargetSet& targets,
                 HeadVariant variant) {
  const auto k = static_cast<std::int64_t>(targets.size());
  const bool batched = pred.shape().rank() == 2;
  if (!(pred.shape().rank() == 1 || batched) || pred.shape()[pred.shape().rank() - 1] != k) {
    throw ShapeError("head output " + pred.shape().str() + " does not match " + std::to_string(k) + " targets");
  }
  const std::int64_t n = batched ? pred.shape()[0] : 1;
  if (static_cast<std::int64_t>(classes.size()) != n) throw ArgumentError("head_loss: one class per prediction row required");
  if (variant == HeadVariant::Softmax) return ops::cross_entropy(pred, classes);

  std::vector<double> t;
  t.reserve(static_cast<std::size_t>(n * k));
  for (int c : classes) {
    if (c < 0 || c >= k) throw ArgumentError("class index " + std::to_string(c) + " outside the target set");
    t.insert(t.end(), targets.targets[c].begin(), targets.targets[c].end());
  }
  const Tensor target = Tensor::from_data(pred.shape(), std::move(t), pred.dtype());
  switch (variant) {
  case HeadVariant::MseSum: return ops::scale(ops::mse_sum(pred, target), 1.0 / static_cast<double>(n));
  case HeadVariant::MseMean: return ops::mse_mean(pred, target);
  case HeadVariant::Mae: return ops::mae_mean(pred, target);
  case HeadVariant::Softmax: break;
  }
  throw ArgumentError("unknown head variant");
}

LabelEmbedding classify_by_distance(std::span<const double> pred, const HeadConfig& cfg) {
  const std::size_t k = cfg.reference.size();
  if (k == 0) throw ArgumentError("classify_by_distance: empty reference matrix");
  if (pred.size() != k) {
    throw ShapeError("prediction width " + std::to_string(pred.size()) + " does not match reference size " +
                     std::to_string(k));
  }
  LabelEmbedding out;
  out.distances.resize(k);
  double pred_norm = 0.0;
  for (double v : pred) pred_norm += v * v;
  pred_norm = std::sqrt(pred_norm);
  if (cfg.metric == DistanceMetric::Cosine && pred_norm == 0.0) throw NumericError("degenerate embedding: zero-norm prediction");

  for (std::size_t r = 0; r < k; ++r) {
    const auto& row = cfg.reference[r];
    if (row.size() != k) throw ShapeError("reference matrix is not square");
    if (cfg.metric == DistanceMetric::Cosine) {
      double dot = 0.0, norm = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        dot += pred[j] * row[j];
        norm += row[j] * row[j];
      }
      if (norm == 0.0) throw NumericError("degenerate embedding: zero-norm reference row");
      out.distances[r] = 1.0 - dot / (pred_norm * std::sqrt(norm));
    } else {
      double ss = 0.0;
      for (std::size_t j = 0; j < k; ++j) ss += (pred[j] - row[j]) * (pred[j] - row[j]);
      out.distances[r] = std::sqrt(ss);
    }
  }
  out.predicted = static_cast<int>(std::min_element(out.distances.begin(), out.distances.end()) - out.distances.begin());
  return out;
}

DistancePrediction evaluate_distance_prediction(const std::vector<std::vector<double>>& predictions,
                                                std::span<const int> labels, const EmbeddingTargetSet& targets) {
  const std::size_t k = targets.size();
  if (predictions.size() != labels.size()) throw ArgumentError("prediction and label counts differ");
  DistancePrediction out;
  out.predicted.assign(k, std::vector<double>(k, 0.0));
  std::vector<std::size_t> count(k, 0);
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const int c = labels[s];
    if (c < 0 || static_cast<std::size_t>(c) >= k) throw ArgumentError("label outside the target set");
    if (predictions[s].size() != k) throw ShapeError("prediction width does not match the target set");
    // running mean: exact when every sample of a class predicts the same vector
    const double n = static_cast<double>(++count[c]);
    for (std::size_t j = 0; j < k; ++j) out.predicted[c][j] += (predictions[s][j] - out.predicted[c][j]) / n;
  }
  out.error = out.predicted;
  for (std::size_t i = 0; i < k; ++i) {
    if (count[i] == 0) throw DataError("no test samples for species '" + targets.names[i] + "'");
    for (std::size_t j = 0; j < k; ++j) out.error[i][j] = std::fabs(out.predicted[i][j] - targets.targets[i][j]);
  }
  return out;
}

GeneticDistanceMatrix as_matrix(const std::vector<std::string>& names, const std::vector<std::vector<double>>& values) {
  return GeneticDistanceMatrix{names, values};
}

} // namespace mushroom

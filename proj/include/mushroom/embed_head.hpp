#pragma once

#include "mushroom/genetics.hpp"
#include "mushroom/tensor.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mushroom {

enum class Normalization { None, MinMax };

/// Row i is the regression target for species i.
struct EmbeddingTargetSet {
  std::vector<std::string> names;
  std::vector<std::vector<double>> targets;
  Normalization normalization = Normalization::None;
  std::optional<double> diagonal;
  std::vector<std::string> dropped;

  std::size_t size() const { return names.size(); }
};

/// Subset first, then min-max over off-diagonal entries, then diagonal override.
EmbeddingTargetSet build_targets(const GeneticDistanceMatrix& d, Normalization normalization = Normalization::None,
                                 std::optional<double> diagonal = std::nullopt,
                                 const std::vector<std::string>& drop = {});

/// The target rows with the diagonal reset to 0.
std::vector<std::vector<double>> reference_matrix(const EmbeddingTargetSet& targets);

enum class HeadVariant { Softmax, MseSum, MseMean, Mae };
enum class DistanceMetric { Cosine, Euclidean };

std::string_view head_variant_name(HeadVariant v);
HeadVariant parse_head_variant(std::string_view name);
std::string_view distance_metric_name(DistanceMetric m);
DistanceMetric parse_distance_metric(std::string_view name);
Normalization parse_normalization(std::string_view name);
std::string_view normalization_name(Normalization n);

struct HeadConfig {
  HeadVariant variant = HeadVariant::Softmax;
  DistanceMetric metric = DistanceMetric::Cosine;
  std::vector<std::vector<double>> reference;
};

/// Batch-mean loss of pred ([k] or [N,k]) against the classes' target rows;
/// the softmax variant is cross-entropy on pred as logits.
Tensor head_loss(const Tensor& pred, std::span<const int> classes, const EmbeddingTargetSet& targets,
                 HeadVariant variant);

struct LabelEmbedding {
  int predicted = -1;
  std::vector<double> distances; // to every reference row
};

/// Nearest reference row; ties go to the lowest index.
LabelEmbedding classify_by_distance(std::span<const double> pred, const HeadConfig& cfg);

struct DistancePrediction {
  std::vector<std::vector<double>> predicted; // (i,j): mean component j over samples of class i
  std::vector<std::vector<double>> error;     // |predicted - target|
};

DistancePrediction evaluate_distance_prediction(const std::vector<std::vector<double>>& predictions,
                                                std::span<const int> labels, const EmbeddingTargetSet& targets);

/// Target set as a matrix for CSV output.
GeneticDistanceMatrix as_matrix(const std::vector<std::string>& names, const std::vector<std::vector<double>>& values);

} // namespace mushroom

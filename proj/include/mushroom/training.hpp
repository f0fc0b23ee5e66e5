#pragma once

#include "mushroom/backbone.hpp"
#include "mushroom/embed_head.hpp"
#include "mushroom/image.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mushroom {

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<std::string> paths; // relative to the dataset root; empty for in-memory data

  std::size_t size() const { return images.size(); }
};

struct SampleRef {
  std::size_t index = 0; // into Dataset::images
  int label = 0;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<SampleRef> train, val, test;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

/// Val and test sizes are floored per class (stratified) or overall; the
/// remainder goes to train.
DatasetSplit split_dataset(std::span<const int> labels, const SplitRatios& ratios, std::uint64_t seed,
                           bool stratified = true);

/// Procedural cap-and-stem images on a noisy background. Classes differ in
/// cap hue and cap width/height ratio.
Dataset generate_synthetic_dataset(int classes, int per_class, int resolution, std::uint64_t seed);

/// One subdirectory per class (sorted by name) holding .ppm/.pgm files.
/// Images are resized bilinearly to resolution and grayscale is replicated
/// to three channels.
Dataset load_dataset(const std::filesystem::path& root, int resolution);
void save_dataset(const Dataset& data, const std::filesystem::path& root);

enum class AugmentOp { Rotate, Crop, Sharpen, Contrast, Brightness };
std::string_view augment_op_name(AugmentOp op);
AugmentOp parse_augment_op(std::string_view name);

struct AugmentParams {
  double degrees = 0.0;
  int crop_top = 0, crop_left = 0, crop_height = 0, crop_width = 0;
  double sharpen = 0.0;   // unsharp-mask amount
  double contrast = 1.0;  // factor about the per-channel mean
  double brightness = 0.0; // additive offset
};

/// Keeps the channel count and (except for quarter-turn rotations of
/// non-square images) the extent. Positive degrees turn counterclockwise;
/// multiples of 90 are exact pixel permutations, other angles resample
/// bilinearly with black fill. Crop resizes back to the input extent.
Image augment(const Image& image, AugmentOp op, const AugmentParams& params);

/// Magnitude ranges for random augmentation during training. Only the
/// operations are fixed; these ranges are tunable defaults.
struct AugmentConfig {
  bool enabled = false;
  double probability = 0.5;
  double max_degrees = 15.0;
  double min_crop_fraction = 0.8;
  double max_sharpen = 1.0;
  double contrast_low = 0.8, contrast_high = 1.2;
  double max_brightness = 0.1;
};

Image random_augment(const Image& image, const AugmentConfig& cfg, std::mt19937_64& rng);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m, v;
};

struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, AdamMoments> moments;
};

/// One bias-corrected Adam update of `param` in place; `t` is the 1-based step.
void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments, std::int64_t t,
                 const AdamConfig& cfg);
/// Updates every trainable parameter that holds a gradient. A non-finite
/// gradient anywhere throws NumericError before anything is modified.
void adam_step(Model& model, AdamState& state, const AdamConfig& cfg);

struct HeadSetup {
  HeadVariant variant = HeadVariant::Softmax;
  EmbeddingTargetSet targets;                   // loss targets for distance heads
  DistanceMetric metric = DistanceMetric::Cosine;
  std::vector<std::vector<double>> reference;   // classification matrix for distance heads

  int predict(std::span<const double> output) const;
};

struct TrainConfig {
  int stage = 2;
  int epochs = 30;
  int batch_size = 12;
  AdamConfig adam;
  std::uint64_t seed = 0;
  AugmentConfig augment;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct StageResult {
  Model best;
  int best_epoch = 0;
  std::vector<EpochRecord> log;
};

/// Trainable set per stage: 1 and 2 train everything, 3 trains only the
/// inserted attention blocks, last conv and head.
void apply_stage_mask(Model& model, int stage);

/// Trains `model` in place for cfg.epochs and returns the snapshot with the
/// best validation accuracy, ties going to the lower validation loss (the
/// last epoch when there is no validation data).
StageResult run_stage(Model& model, const Dataset& data, const DatasetSplit& split, const HeadSetup& head,
                      const TrainConfig& cfg);

/// Eval-mode head outputs, one row per sample.
std::vector<std::vector<double>> predict_outputs(Model& model, const Dataset& data, std::span<const SampleRef> samples,
                                                 int batch_size = 32);

std::string epoch_log_csv(const std::vector<EpochRecord>& log);

} // namespace mushroom

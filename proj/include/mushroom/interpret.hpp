#pragma once

#include "mushroom/backbone.hpp"
#include "mushroom/image.hpp"
#include "mushroom/tensor.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace mushroom {

struct Heatmap {
  int target_class = 0;
  int height = 0; // feature-map extent
  int width = 0;
  std::vector<double> values;
  int out_height = 0; // input extent
  int out_width = 0;
  std::vector<double> upsampled;
};

/// Grad-CAM for logits[0, c] with respect to `feature_tap` ([1,K,H',W'], part of
/// the graph that produced `logits`). Channel weights are spatial means of the
/// gradient; the map is ReLU of the weighted sum, max-normalized when nonzero,
/// then bilinearly upsampled to out_height x out_width.
Heatmap grad_cam(const Tensor& feature_tap, const Tensor& logits, int c, int out_height, int out_width);
/// Eval-mode forward of a single image through `model`, tapped at its feature conv.
Heatmap grad_cam(Model& model, const Image& image, int c);

const std::array<std::array<std::uint8_t, 3>, 256>& colormap();
/// Upsampled heatmap through the colormap, as a 3-channel image.
Image colorize(const Heatmap& h);
/// (1 - alpha) * image + alpha * colorize(h), clamped to [0,1].
Image overlay(const Image& image, const Heatmap& h, double alpha);

} // namespace mushroom

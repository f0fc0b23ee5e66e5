#pragma once

#include "mushroom/tensor.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace mushroom {

/// Channel-major (C,H,W) image with samples in [0,1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  static Image blank(int channels, int height, int width, double fill = 0.0);
  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

/// Binary PGM (P5, one channel) or PPM (P6, three channels), maxval <= 255.
Image decode_pnm(std::string_view bytes);
std::string encode_pnm(const Image& img);
Image read_image(const std::string& path);
void write_image(const Image& img, const std::string& path);

/// Bilinear resampling with pixel-center alignment and clamped borders.
Image resize_bilinear(const Image& img, int height, int width);

/// Grayscale replicated to three channels; RGB passes through.
Image to_rgb(Image img);

/// Stacks equally sized images into an [N,C,H,W] tensor.
Tensor images_to_tensor(const std::vector<const Image*>& images, DType dtype = DType::F64);

} // namespace mushroom

#include "mushroom/interpret.hpp"

#include "mushroom/errors.hpp"
#include "mushroom/ops.hpp"

#include <algorithm>
#include <cmath>

namespace mushroom {

namespace {

void max_normalize(std::vector<double>& v) {
  const double peak = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  if (peak > 0.0)
    for (auto& x : v) x /= peak;
}

} // namespace

Heatmap grad_cam(const Tensor& feature_tap, const Tensor& logits, int c, int out_height, int out_width) {
  if (!feature_tap.defined()) throw ArgumentError("grad_cam: model has no feature tap");
  const Shape& fs = feature_tap.shape();
  if (fs.rank() != 4 || fs[0] != 1) throw ShapeError("grad_cam expects a [1,K,H,W] feature tap, got " + fs.str());
  const Shape& ls = logits.shape();
  const std::int64_t classes = ls[ls.rank() - 1];
  if (!(ls.rank() == 1 || (ls.rank() == 2 && ls[0] == 1))) throw ShapeError("grad_cam expects logits of one sample");
  if (c < 0 || c >= classes) throw ArgumentError("grad_cam: class " + std::to_string(c) + " out of range");
  if (out_height <= 0 || out_width <= 0) throw ArgumentError("grad_cam: output extent must be positive");

  Tensor target = ls.rank() == 1 ? ops::element(logits, {static_cast<std::int64_t>(c)}) : ops::element(logits, {0, static_cast<std::int64_t>(c)});
  target.backward();

  const auto k = static_cast<int>(fs[1]), h = static_cast<int>(fs[2]), w = static_cast<int>(fs[3]);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Heatmap out;
  out.target_class = c;
  out.height = h;
  out.width = w;
  out.values.assign(plane, 0.0);
  if (feature_tap.has_grad()) {
    const auto a = feature_tap.data();
    const auto g = feature_tap.grad();
    for (int ch = 0; ch < k; ++ch) {
      double alpha = 0.0;
      for (std::size_t i = 0; i < plane; ++i) alpha += g[ch * plane + i];
      alpha /= static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) out.values[i] += alpha * a[ch * plane + i];
    }
  }
  for (auto& v : out.values) v = std::max(0.0, v);
  max_normalize(out.values);

  Image coarse = Image::blank(1, h, w);
  coarse.data = out.values;
  Image fine = resize_bilinear(coarse, out_height, out_width);
  out.out_height = out_height;
  out.out_width = out_width;
  out.upsampled = std::move(fine.data);
  max_normalize(out.upsampled);
  return out;
}

Heatmap grad_cam(Model& model, const Image& image, int c) {
  const int res = model.spec().resolution;
  const Image sized = resize_bilinear(image, res, res);
  if (sized.channels != model.spec().input_channels) {
    throw ShapeError("grad_cam: image has " + std::to_string(sized.channels) + " channels, model expects " +
                     std::to_string(model.spec().input_channels));
  }
  const Tensor x = images_to_tensor({&sized}, model.dtype());
  const Tensor input = Tensor::parameter(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), model.dtype());
  ForwardResult r = model.forward(input, ops::Mode::Eval);
  Heatmap h = grad_cam(r.feature_tap, r.logits, c, image.height, image.width);
  model.zero_grad();
  return h;
}

Image colorize(const Heatmap& h) {
  Image out = Image::blank(3, h.out_height, h.out_width);
  const auto& cmap = colormap();
  for (int y = 0; y < h.out_height; ++y)
    for (int x = 0; x < h.out_width; ++x) {
      const double v = std::clamp(h.upsampled[static_cast<std::size_t>(y) * h.out_width + x], 0.0, 1.0);
      const auto& rgb = cmap[static_cast<std::size_t>(std::lround(v * 255.0))];
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = rgb[c] / 255.0;
    }
  return out;
}

Image overlay(const Image& image, const Heatmap& h, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ArgumentError("overlay alpha must lie in [0,1]");
  if (image.height != h.out_height || image.width != h.out_width) {
    throw ShapeError("overlay: heatmap is " + std::to_string(h.out_height) + "x" + std::to_string(h.out_width) +
                     ", image is " + std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  if (image.channels != 1 && image.channels != 3) throw ShapeError("overlay needs a 1- or 3-channel image");
  const Image color = colorize(h);
  Image out = Image::blank(3, image.height, image.width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        const double base = image.at(image.channels == 3 ? c : 0, y, x);
        out.at(c, y, x) = std::clamp((1.0 - alpha) * base + alpha * color.at(c, y, x), 0.0, 1.0);
      }
  return out;
}

} // namespace mushroom

#include "mushroom/attention.hpp"

#include "mushroom/errors.hpp"
#include "mushroom/ops.hpp"
#include "mushroom/random.hpp"

#include <algorithm>
#include <cmath>

namespace mushroom {

int SEBlock::hidden_width(int channels, int reduction) {
  if (channels < 1 || reduction < 1) throw ArgumentError("SE block needs positive channels and reduction");
  return std::max(1, channels / reduction);
}

SEBlock SEBlock::create(int channels, int reduction, std::mt19937_64& rng, DType dtype) {
  const int hidden = hidden_width(channels, reduction);
  SEBlock blk;
  blk.channels = channels;
  blk.reduction = reduction;
  blk.fc1 = Tensor::parameter(Shape{hidden, channels},
                              rnd::uniform_vector(rng, static_cast<std::size_t>(hidden) * channels,
                                                  std::sqrt(1.0 / channels)),
                              dtype);
  blk.fc2 = Tensor::parameter(Shape{channels, hidden},
                              rnd::uniform_vector(rng, static_cast<std::size_t>(hidden) * channels,
                                                  std::sqrt(1.0 / hidden)),
                              dtype);
  return blk;
}

ECABlock ECABlock::create(int channels, int kernel, std::mt19937_64& rng, DType dtype) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ArgumentError("ECA kernel size must be odd, got " + std::to_string(kernel));
  }
  ECABlock blk;
  blk.channels = channels;
  blk.kernel = kernel;
  blk.weight = Tensor::parameter(
      Shape{kernel}, rnd::uniform_vector(rng, static_cast<std::size_t>(kernel), std::sqrt(1.0 / kernel)),
      dtype);
  return blk;
}

namespace {
void require_channels(std::string_view what, const Tensor& x, int channels) {
  const auto rank = x.shape().rank();
  if ((rank != 2 && rank != 4) || x.shape()[1] != channels) {
    throw ShapeError(std::string(what) + ": block expects " + std::to_string(channels) +
                     " channels, got input " + x.shape().str());
  }
}

Tensor squeeze(const Tensor& x) {
  return x.shape().rank() == 4 ? ops::global_avg_pool(x) : x;
}
} // namespace

Tensor se_scale(const Tensor& x, const SEBlock& blk) {
  require_channels("se_forward", x, blk.channels);
  const Tensor z = squeeze(x);
  const Tensor hidden = ops::relu(ops::dense(z, blk.fc1, Tensor()));
  return ops::sigmoid(ops::dense(hidden, blk.fc2, Tensor()));
}

Tensor se_forward(const Tensor& x, const SEBlock& blk) {
  return ops::channel_scale(x, se_scale(x, blk));
}

Tensor eca_scale(const Tensor& x, const ECABlock& blk) {
  require_channels("eca_forward", x, blk.channels);
  if (blk.kernel % 2 == 0) throw ArgumentError("ECA kernel size must be odd");
  return ops::sigmoid(ops::conv1d_channels(squeeze(x), blk.weight));
}

Tensor eca_forward(const Tensor& x, const ECABlock& blk) {
  return ops::channel_scale(x, eca_scale(x, blk));
}

StrategyPlacement placement(AttentionStrategy tag) {
  switch (tag) {
  case AttentionStrategy::None: return {0, LastAttention::None};
  case AttentionStrategy::Model1: return {0, LastAttention::SE};
  case AttentionStrategy::Model2: return {1, LastAttention::SE};
  case AttentionStrategy::Model3: return {1, LastAttention::None};
  case AttentionStrategy::Model4: return {2, LastAttention::SE};
  case AttentionStrategy::Model5: return {0, LastAttention::ECA};
  case AttentionStrategy::Model6: return {1, LastAttention::ECA};
  case AttentionStrategy::Model7: return {2, LastAttention::None};
  case AttentionStrategy::Proposed: return {2, LastAttention::ECA};
  }
  throw ArgumentError("unknown attention strategy");
}

std::array<AttentionStrategy, 8> all_strategies() {
  using S = AttentionStrategy;
  return {S::Model1, S::Model2, S::Model3, S::Model4, S::Model5, S::Model6, S::Model7, S::Proposed};
}

NetworkSpec build_strategy(AttentionStrategy tag, const NetworkSpec& backbone,
                           const AttentionOptions& options) {
  const StrategyPlacement where = placement(tag);
  NetworkSpec out = backbone;
  out.layers.clear();
  out.strategy = tag;

  bool saw_stem = false, saw_last = false;
  for (const auto& layer : backbone.layers) {
    if (layer.role == LayerRole::FirstAttention || layer.role == LayerRole::LastAttention) continue;
    out.layers.push_back(layer);
    const auto* conv = std::get_if<ConvSpec>(&layer.body);
    if (layer.role == LayerRole::Stem && conv) {
      saw_stem = true;
      for (int i = 0; i < where.se_after_first; ++i) {
        out.layers.push_back({"se_first" + std::to_string(i), LayerRole::FirstAttention,
                              SESpec{conv->out_channels, options.se_reduction}});
      }
    } else if (layer.role == LayerRole::LastConv && conv) {
      saw_last = true;
      if (where.after_last == LastAttention::SE) {
        out.layers.push_back(
            {"att_last", LayerRole::LastAttention, SESpec{conv->out_channels, options.se_reduction}});
      } else if (where.after_last == LastAttention::ECA) {
        if (options.eca_kernel < 1 || options.eca_kernel % 2 == 0) {
          throw ArgumentError("ECA kernel size must be odd, got " + std::to_string(options.eca_kernel));
        }
        out.layers.push_back(
            {"att_last", LayerRole::LastAttention, ECASpec{conv->out_channels, options.eca_kernel}});
      }
    }
  }
  if (!saw_stem || !saw_last) {
    throw ArgumentError("build_strategy: backbone lacks a stem conv or a last conv layer");
  }
  return out;
}

} // namespace mushroom

#pragma once

#include "mushroom/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

/// Differentiable operations. All image tensors are N,C,H,W row-major.
namespace mushroom::ops {

enum class Mode { Train, Eval };

// Elementwise and structural.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor abs(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
/// Scalar tensor holding x at `index`, differentiable.
Tensor element(const Tensor& x, std::initializer_list<std::int64_t> index);
/// y[n,c,...] = x[n,c,...] * s[n,c]; x is [N,C] or [N,C,H,W].
Tensor channel_scale(const Tensor& x, const Tensor& s);

// Convolution family. `b` may be an undefined Tensor for no bias.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int stride, int padding,
                        const Tensor& b = Tensor());
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
/// Cross-channel 1-D convolution over z[N,C] with odd kernel w[k] and zero
/// padding (k-1)/2.
Tensor conv1d_channels(const Tensor& z, const Tensor& w);

/// Output extent of a convolution or pooling window along one axis.
std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int padding);

// Pooling.
Tensor global_avg_pool(const Tensor& x);
Tensor avg_pool(const Tensor& x, int kernel, int stride);

// Activations.
Tensor relu(const Tensor& x);
Tensor relu6(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor h_sigmoid(const Tensor& x);
Tensor h_swish(const Tensor& x);
/// Over the last axis.
Tensor softmax(const Tensor& x);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// Per-channel normalization over (N,H,W). Train mode uses batch statistics
/// and updates `state`; eval mode uses the running statistics.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, Mode mode);

// Losses; all return scalar tensors.
Tensor mse_sum(const Tensor& pred, const Tensor& target);
Tensor mse_mean(const Tensor& pred, const Tensor& target);
Tensor mae_mean(const Tensor& pred, const Tensor& target);
/// Mean over rows of -log softmax(logits)[class]. logits is [k] or [N,k].
Tensor cross_entropy(const Tensor& logits, std::span<const int> classes);

} // namespace mushroom::ops

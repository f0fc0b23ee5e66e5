#pragma once

#include "mushroom/network_spec.hpp"
#include "mushroom/tensor.hpp"

#include <array>
#include <random>

namespace mushroom {

/// Squeeze-and-excitation gate: s = sigmoid(W2 relu(W1 avgpool(x))).
struct SEBlock {
  int channels = 0;
  int reduction = 16;
  Tensor fc1; // [hidden, C]
  Tensor fc2; // [C, hidden]

  /// max(1, floor(C / r)).
  static int hidden_width(int channels, int reduction);
  static SEBlock create(int channels, int reduction, std::mt19937_64& rng,
                        DType dtype = DType::F64);
};

/// Efficient channel attention: s = sigmoid(conv1d(avgpool(x), w)).
struct ECABlock {
  int channels = 0;
  int kernel = 5;
  Tensor weight; // [k]

  static ECABlock create(int channels, int kernel, std::mt19937_64& rng,
                         DType dtype = DType::F64);
};

/// Per-channel gate s[N,C] of an SE block, before it is applied.
Tensor se_scale(const Tensor& x, const SEBlock& blk);
Tensor se_forward(const Tensor& x, const SEBlock& blk);
Tensor eca_scale(const Tensor& x, const ECABlock& blk);
/// Accepts [N,C,H,W] or [N,C]; the pool is skipped for [N,C].
Tensor eca_forward(const Tensor& x, const ECABlock& blk);

enum class LastAttention { None, SE, ECA };

struct StrategyPlacement {
  int se_after_first = 0;
  LastAttention after_last = LastAttention::None;
};

StrategyPlacement placement(AttentionStrategy tag);
/// The eight topologies, Model1..Model7 then Proposed.
std::array<AttentionStrategy, 8> all_strategies();

struct AttentionOptions {
  int se_reduction = 16;
  int eca_kernel = 5;
};

/// Removes any attention insertions from `backbone` and inserts the ones
/// `tag` prescribes: SE blocks right after the stem conv and SE/ECA right
/// after the last (1x1, no-BN) conv.
NetworkSpec build_strategy(AttentionStrategy tag, const NetworkSpec& backbone,
                           const AttentionOptions& options = {});

} // namespace mushroom

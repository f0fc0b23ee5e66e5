#pragma once

#include "mushroom/attention.hpp"
#include "mushroom/checkpoint.hpp"
#include "mushroom/network_spec.hpp"
#include "mushroom/ops.hpp"
#include "mushroom/tensor.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mushroom {

struct MushroomNetOptions {
  /// The first bneck expands to 16 channels, as in MobileNetV3-Large, not 6.
  int first_bneck_exp = 6;
  int bneck_se_reduction = 4;
  AttentionOptions attention;
};

/// Channel count after width scaling: unchanged at alpha == 1, otherwise
/// max(8, round(alpha * c / 8) * 8).
int scale_channels(int channels, double alpha);

/// Backbone plus attention per `strategy`. resolution must be a positive
/// multiple of 32.
NetworkSpec build_mushroomnet(int classes, AttentionStrategy strategy, double alpha = 1.0,
                              int resolution = 224, const MushroomNetOptions& options = {});

struct TraceRow {
  std::string name;
  LayerRole role;
  std::int64_t in_c, in_h, in_w;
  std::int64_t out_c, out_h, out_w;
};

/// Closed-form per-layer shapes; throws ShapeError when layers do not compose.
std::vector<TraceRow> trace_shapes(const NetworkSpec& spec);

struct BneckParams {
  Tensor expand_w, expand_gamma, expand_beta;
  ops::BatchNormState* expand_bn = nullptr;
  Tensor dw_w, dw_gamma, dw_beta;
  ops::BatchNormState* dw_bn = nullptr;
  std::optional<SEBlock> se;
  Tensor project_w, project_gamma, project_beta;
  ops::BatchNormState* project_bn = nullptr;
  /// BN layers run on running statistics regardless of mode (frozen block).
  bool frozen_bn = false;
};

/// expand 1x1 (+BN+NL) -> depthwise kxk stride s (+BN+NL) -> optional SE ->
/// 1x1 linear projection (+BN) -> residual add when stride 1 and in == out.
Tensor bneck_forward(const Tensor& x, const BneckSpec& spec, BneckParams& params, ops::Mode mode);

struct Parameter {
  std::string name;
  std::string layer;
  LayerRole role;
  Tensor value;
};

struct ForwardResult {
  Tensor logits;      // [N, k]
  Tensor feature_tap; // last spatial conv activations, [N, C, H, W]
  std::vector<std::pair<std::string, Shape>> trace; // output shape per layer
};

/// Spec plus its parameters and batchnorm statistics.
class Model {
public:
  Model() = default;
  Model(NetworkSpec spec, std::uint64_t seed, DType dtype = DType::F64);

  // Copies are deep: parameters of a copy never alias the original.
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const NetworkSpec& spec() const { return spec_; }
  DType dtype() const { return dtype_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(const std::string& name);
  const Parameter& parameter(const std::string& name) const;
  std::map<std::string, ops::BatchNormState>& batchnorm_states() { return bn_; }
  const std::map<std::string, ops::BatchNormState>& batchnorm_states() const { return bn_; }

  std::int64_t parameter_count() const;

  /// Marks parameters trainable iff their layer role is in `roles`.
  void set_trainable_roles(const std::vector<LayerRole>& roles);
  void set_all_trainable(bool flag);
  bool is_trainable(const std::string& name) const;
  void zero_grad();

  ForwardResult forward(const Tensor& x, ops::Mode mode);

  /// Re-targets attention per `tag`; parameters whose names survive are kept,
  /// new attention blocks are freshly initialized from `seed`.
  Model with_strategy(AttentionStrategy tag, std::uint64_t seed,
                      const AttentionOptions& options = {}) const;
  /// Replaces the classification layer with a fresh `classes`-wide head.
  Model with_head(int classes, std::uint64_t seed) const;

  Checkpoint to_checkpoint(const std::string& extra_metadata_json = "{}") const;
  static Model from_checkpoint(const Checkpoint& ckpt);

private:
  void initialize(std::uint64_t seed);
  void copy_matching_from(const Model& other);
  const Tensor& tensor(const std::string& name) const;

  NetworkSpec spec_;
  DType dtype_ = DType::F64;
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, ops::BatchNormState> bn_;
};

/// Stage-3 trainable roles: first/last attention, last conv, head.
std::vector<LayerRole> stage3_trainable_roles();

} // namespace mushroom

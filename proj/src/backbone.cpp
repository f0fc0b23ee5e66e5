#include "mushroom/backbone.hpp"

#include "mushroom/errors.hpp"
#include "mushroom/random.hpp"

#include <json.hpp>

#include <cmath>
#include <random>

namespace mushroom {

namespace {

struct BneckRow {
  int kernel, exp, out;
  bool se;
  Nonlinearity nl;
  int stride;
};

constexpr Nonlinearity RE = Nonlinearity::ReLU;
constexpr Nonlinearity HS = Nonlinearity::HSwish;

// Bneck rows of the reference layer table.
constexpr BneckRow kBneckRows[] = {
    {3, 6, 16, false, RE, 1},    {3, 64, 24, false, RE, 2},   {3, 72, 24, false, RE, 1},
    {5, 72, 40, true, RE, 2},    {5, 120, 40, true, RE, 1},   {5, 120, 40, true, RE, 1},
    {3, 240, 80, false, HS, 2},  {3, 200, 80, false, HS, 1},  {3, 184, 80, false, HS, 1},
    {3, 184, 80, false, HS, 1},  {3, 480, 112, true, HS, 1},  {3, 672, 112, true, HS, 1},
    {5, 672, 160, true, HS, 2},  {5, 960, 160, true, HS, 1},  {5, 960, 160, true, HS, 1},
};

constexpr int kStemChannels = 16;
constexpr int kFeatureChannels = 960;
constexpr int kLastChannels = 1280;
constexpr int kTotalStride = 32;

Tensor activate(const Tensor& x, Nonlinearity nl) {
  switch (nl) {
  case Nonlinearity::ReLU: return ops::relu(x);
  case Nonlinearity::HSwish: return ops::h_swish(x);
  case Nonlinearity::None: break;
  }
  return x;
}

Tensor norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, ops::BatchNormState& st,
            ops::Mode mode, bool frozen) {
  return ops::batchnorm2d(x, gamma, beta, st, frozen ? ops::Mode::Eval : mode);
}

double conv_bound(std::int64_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

} // namespace

int scale_channels(int channels, double alpha) {
  if (alpha == 1.0) return channels;
  const int rounded = static_cast<int>(std::lround(alpha * channels / 8.0)) * 8;
  return std::max(8, rounded);
}

NetworkSpec build_mushroomnet(int classes, AttentionStrategy strategy, double alpha,
                              int resolution, const MushroomNetOptions& options) {
  if (classes < 2) throw ArgumentError("class count must be >= 2, got " + std::to_string(classes));
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ArgumentError("width multiplier must lie in (0,1], got " + std::to_string(alpha));
  }
  if (resolution < kTotalStride || resolution % kTotalStride != 0) {
    throw ArgumentError("resolution must be a positive multiple of 32, got " + std::to_string(resolution));
  }

  NetworkSpec spec;
  spec.width_multiplier = alpha;
  spec.resolution = resolution;
  spec.num_classes = classes;

  const int stem = scale_channels(kStemChannels, alpha);
  spec.layers.push_back({"stem", LayerRole::Stem, ConvSpec{3, stem, 3, 2, HS, true}});
  int channels = stem;
  for (std::size_t i = 0; i < std::size(kBneckRows); ++i) {
    const auto& row = kBneckRows[i];
    BneckSpec b;
    b.kernel = row.kernel;
    b.in_channels = channels;
    b.exp_channels = scale_channels(i == 0 ? options.first_bneck_exp : row.exp, alpha);
    b.out_channels = scale_channels(row.out, alpha);
    b.se = row.se;
    b.nl = row.nl;
    b.stride = row.stride;
    b.se_reduction = options.bneck_se_reduction;
    spec.layers.push_back({"bneck" + std::to_string(i), LayerRole::Bneck, b});
    channels = b.out_channels;
  }
  const int feat = scale_channels(kFeatureChannels, alpha);
  spec.layers.push_back({"conv_feat", LayerRole::FeatureConv, ConvSpec{channels, feat, 1, 1, HS, true}});
  spec.layers.push_back({"pool", LayerRole::Pool, PoolSpec{resolution / kTotalStride, 1}});
  const int last = scale_channels(kLastChannels, alpha);
  spec.layers.push_back({"conv_last", LayerRole::LastConv, ConvSpec{feat, last, 1, 1, HS, false}});
  spec.layers.push_back({"head", LayerRole::Head, HeadSpec{last, classes}});

  return build_strategy(strategy, spec, options.attention);
}

std::vector<TraceRow> trace_shapes(const NetworkSpec& spec) {
  std::vector<TraceRow> rows;
  std::int64_t c = spec.input_channels, h = spec.resolution, w = spec.resolution;
  auto mismatch = [](const LayerSpec& l, std::int64_t expected, std::int64_t got) {
    return ShapeError("layer '" + l.name + "' expects " + std::to_string(expected) +
                      " input channels, receives " + std::to_string(got));
  };
  for (const auto& layer : spec.layers) {
    TraceRow row{layer.name, layer.role, c, h, w, c, h, w};
    if (const auto* conv = std::get_if<ConvSpec>(&layer.body)) {
      if (conv->in_channels != c) throw mismatch(layer, conv->in_channels, c);
      row.out_c = conv->out_channels;
      row.out_h = ops::conv_out_extent(h, conv->kernel, conv->stride, conv->kernel / 2);
      row.out_w = ops::conv_out_extent(w, conv->kernel, conv->stride, conv->kernel / 2);
    } else if (const auto* b = std::get_if<BneckSpec>(&layer.body)) {
      if (b->in_channels != c) throw mismatch(layer, b->in_channels, c);
      row.out_c = b->out_channels;
      row.out_h = ops::conv_out_extent(h, b->kernel, b->stride, b->kernel / 2);
      row.out_w = ops::conv_out_extent(w, b->kernel, b->stride, b->kernel / 2);
    } else if (const auto* se = std::get_if<SESpec>(&layer.body)) {
      if (se->channels != c) throw mismatch(layer, se->channels, c);
    } else if (const auto* eca = std::get_if<ECASpec>(&layer.body)) {
      if (eca->channels != c) throw mismatch(layer, eca->channels, c);
    } else if (const auto* pool = std::get_if<PoolSpec>(&layer.body)) {
      row.out_h = ops::conv_out_extent(h, pool->kernel, pool->stride, 0);
      row.out_w = ops::conv_out_extent(w, pool->kernel, pool->stride, 0);
    } else if (const auto* head = std::get_if<HeadSpec>(&layer.body)) {
      if (h != 1 || w != 1) throw ShapeError("head expects 1x1 spatial input, got " + std::to_string(h) + "x" + std::to_string(w));
      if (head->in_features != c) throw mismatch(layer, head->in_features, c);
      row.out_c = head->classes;
    }
    rows.push_back(row);
    c = row.out_c;
    h = row.out_h;
    w = row.out_w;
  }
  return rows;
}

Tensor bneck_forward(const Tensor& x, const BneckSpec& spec, BneckParams& p, ops::Mode mode) {
  if (x.shape().rank() != 4 || x.shape()[1] != spec.in_channels) {
    throw ShapeError("bneck expects " + std::to_string(spec.in_channels) + " input channels, got " +
                     x.shape().str());
  }
  Tensor h = x;
  if (spec.has_expansion()) {
    h = ops::conv2d(h, p.expand_w, Tensor(), 1, 0);
    h = activate(norm(h, p.expand_gamma, p.expand_beta, *p.expand_bn, mode, p.frozen_bn), spec.nl);
  }
  h = ops::depthwise_conv2d(h, p.dw_w, spec.stride, spec.kernel / 2);
  h = activate(norm(h, p.dw_gamma, p.dw_beta, *p.dw_bn, mode, p.frozen_bn), spec.nl);
  if (spec.se) {
    if (!p.se) throw ArgumentError("bneck spec requests SE but no SE parameters were supplied");
    h = se_forward(h, *p.se);
  }
  h = ops::conv2d(h, p.project_w, Tensor(), 1, 0);
  h = norm(h, p.project_gamma, p.project_beta, *p.project_bn, mode, p.frozen_bn);
  if (spec.has_residual()) {
    if (!(h.shape() == x.shape())) {
      throw ShapeError("bneck residual branches disagree: " + x.shape().str() + " vs " + h.shape().str());
    }
    h = ops::add(h, x);
  }
  return h;
}

std::vector<LayerRole> stage3_trainable_roles() {
  return {LayerRole::FirstAttention, LayerRole::LastConv, LayerRole::LastAttention, LayerRole::Head};
}

// ---------------------------------------------------------------------------
// Model

Model::Model(NetworkSpec spec, std::uint64_t seed, DType dtype) : spec_(std::move(spec)), dtype_(dtype) {
  trace_shapes(spec_);
  initialize(seed);
}

Model::Model(const Model& other)
    : spec_(other.spec_), dtype_(other.dtype_), index_(other.index_), bn_(other.bn_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) {
    Tensor copy = Tensor::parameter(p.value.shape(), {p.value.data().begin(), p.value.data().end()}, dtype_);
    copy.set_requires_grad(p.value.requires_grad());
    params_.push_back({p.name, p.layer, p.role, std::move(copy)});
  }
}

Model& Model::operator=(const Model& other) {
  if (this != &other) *this = Model(other);
  return *this;
}

void Model::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  params_.clear();
  index_.clear();
  bn_.clear();

  auto add = [&](const LayerSpec& layer, const std::string& name, Shape shape, std::vector<double> v) {
    index_[name] = params_.size();
    params_.push_back({name, layer.name, layer.role, Tensor::parameter(std::move(shape), std::move(v), dtype_)});
  };
  auto add_conv = [&](const LayerSpec& layer, const std::string& prefix, int out, int in_per_group,
                      int kernel, bool batchnorm) {
    const std::int64_t fan_in = static_cast<std::int64_t>(in_per_group) * kernel * kernel;
    add(layer, prefix + ".conv.weight", Shape{out, in_per_group, kernel, kernel},
        rnd::uniform_vector(rng, static_cast<std::size_t>(out * fan_in), conv_bound(fan_in)));
    if (batchnorm) {
      add(layer, prefix + ".bn.gamma", Shape{out}, std::vector<double>(out, 1.0));
      add(layer, prefix + ".bn.beta", Shape{out}, std::vector<double>(out, 0.0));
      bn_.emplace(prefix + ".bn", ops::BatchNormState(static_cast<std::size_t>(out)));
    } else {
      add(layer, prefix + ".conv.bias", Shape{out}, std::vector<double>(out, 0.0));
    }
  };
  auto add_se = [&](const LayerSpec& layer, const std::string& prefix, int channels, int reduction) {
    SEBlock blk = SEBlock::create(channels, reduction, rng, dtype_);
    add(layer, prefix + ".fc1.weight", blk.fc1.shape(), std::vector<double>(blk.fc1.data().begin(), blk.fc1.data().end()));
    add(layer, prefix + ".fc2.weight", blk.fc2.shape(), std::vector<double>(blk.fc2.data().begin(), blk.fc2.data().end()));
  };

  for (const auto& layer : spec_.layers) {
    if (const auto* conv = std::get_if<ConvSpec>(&layer.body)) {
      add_conv(layer, layer.name, conv->out_channels, conv->in_channels, conv->kernel, conv->batchnorm);
    } else if (const auto* b = std::get_if<BneckSpec>(&layer.body)) {
      if (b->has_expansion()) add_conv(layer, layer.name + ".expand", b->exp_channels, b->in_channels, 1, true);
      add_conv(layer, layer.name + ".dw", b->exp_channels, 1, b->kernel, true);
      if (b->se) add_se(layer, layer.name + ".se", b->exp_channels, b->se_reduction);
      add_conv(layer, layer.name + ".project", b->out_channels, b->exp_channels, 1, true);
    } else if (const auto* se = std::get_if<SESpec>(&layer.body)) {
      add_se(layer, layer.name + ".se", se->channels, se->reduction);
    } else if (const auto* eca = std::get_if<ECASpec>(&layer.body)) {
      ECABlock blk = ECABlock::create(eca->channels, eca->kernel, rng, dtype_);
      add(layer, layer.name + ".eca.weight", blk.weight.shape(),
          std::vector<double>(blk.weight.data().begin(), blk.weight.data().end()));
    } else if (const auto* head = std::get_if<HeadSpec>(&layer.body)) {
      add(layer, layer.name + ".weight", Shape{head->classes, head->in_features},
          rnd::uniform_vector(rng, static_cast<std::size_t>(head->classes) * head->in_features,
                              std::sqrt(1.0 / head->in_features)));
      add(layer, layer.name + ".bias", Shape{head->classes}, std::vector<double>(head->classes, 0.0));
    }
  }
}

Parameter& Model::parameter(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError("no parameter named '" + name + "'");
  return params_[it->second];
}

const Parameter& Model::parameter(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError("no parameter named '" + name + "'");
  return params_[it->second];
}

const Tensor& Model::tensor(const std::string& name) const { return parameter(name).value; }

std::int64_t Model::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void Model::set_trainable_roles(const std::vector<LayerRole>& roles) {
  for (auto& p : params_) {
    const bool on = std::find(roles.begin(), roles.end(), p.role) != roles.end();
    p.value.set_requires_grad(on);
  }
}

void Model::set_all_trainable(bool flag) {
  for (auto& p : params_) p.value.set_requires_grad(flag);
}

bool Model::is_trainable(const std::string& name) const { return parameter(name).value.requires_grad(); }

void Model::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

ForwardResult Model::forward(const Tensor& x, ops::Mode mode) {
  if (x.shape().rank() != 4 || x.shape()[1] != spec_.input_channels || x.shape()[2] != spec_.resolution ||
      x.shape()[3] != spec_.resolution) {
    throw ShapeError("model expects input (N," + std::to_string(spec_.input_channels) + "," +
                     std::to_string(spec_.resolution) + "," + std::to_string(spec_.resolution) + "), got " +
                     x.shape().str());
  }
  if (x.dtype() != dtype_) throw ArgumentError("input precision does not match model precision");

  ForwardResult result;
  Tensor h = x;
  auto frozen = [&](const std::string& gamma) { return !tensor(gamma).requires_grad(); };

  for (const auto& layer : spec_.layers) {
    const std::string& n = layer.name;
    if (const auto* conv = std::get_if<ConvSpec>(&layer.body)) {
      if (conv->batchnorm) {
        h = ops::conv2d(h, tensor(n + ".conv.weight"), Tensor(), conv->stride, conv->kernel / 2);
        h = norm(h, tensor(n + ".bn.gamma"), tensor(n + ".bn.beta"), bn_.at(n + ".bn"), mode,
                 frozen(n + ".bn.gamma"));
      } else {
        h = ops::conv2d(h, tensor(n + ".conv.weight"), tensor(n + ".conv.bias"), conv->stride, conv->kernel / 2);
      }
      h = activate(h, conv->nl);
      if (layer.role == LayerRole::FeatureConv) result.feature_tap = h;
    } else if (const auto* b = std::get_if<BneckSpec>(&layer.body)) {
      BneckParams p;
      if (b->has_expansion()) {
        p.expand_w = tensor(n + ".expand.conv.weight");
        p.expand_gamma = tensor(n + ".expand.bn.gamma");
        p.expand_beta = tensor(n + ".expand.bn.beta");
        p.expand_bn = &bn_.at(n + ".expand.bn");
      }
      p.dw_w = tensor(n + ".dw.conv.weight");
      p.dw_gamma = tensor(n + ".dw.bn.gamma");
      p.dw_beta = tensor(n + ".dw.bn.beta");
      p.dw_bn = &bn_.at(n + ".dw.bn");
      if (b->se) {
        p.se = SEBlock{b->exp_channels, b->se_reduction, tensor(n + ".se.fc1.weight"),
                       tensor(n + ".se.fc2.weight")};
      }
      p.project_w = tensor(n + ".project.conv.weight");
      p.project_gamma = tensor(n + ".project.bn.gamma");
      p.project_beta = tensor(n + ".project.bn.beta");
      p.project_bn = &bn_.at(n + ".project.bn");
      p.frozen_bn = frozen(n + ".dw.bn.gamma");
      h = bneck_forward(h, *b, p, mode);
    } else if (const auto* se = std::get_if<SESpec>(&layer.body)) {
      h = se_forward(h, SEBlock{se->channels, se->reduction, tensor(n + ".se.fc1.weight"),
                                tensor(n + ".se.fc2.weight")});
    } else if (const auto* eca = std::get_if<ECASpec>(&layer.body)) {
      h = eca_forward(h, ECABlock{eca->channels, eca->kernel, tensor(n + ".eca.weight")});
    } else if (const auto* pool = std::get_if<PoolSpec>(&layer.body)) {
      h = ops::avg_pool(h, pool->kernel, pool->stride);
    } else if (std::holds_alternative<HeadSpec>(layer.body)) {
      h = ops::reshape(h, Shape{h.shape()[0], h.shape()[1] * h.shape()[2] * h.shape()[3]});
      h = ops::dense(h, tensor(n + ".weight"), tensor(n + ".bias"));
    }
    result.trace.emplace_back(n, h.shape());
  }
  result.logits = h;
  return result;
}

void Model::copy_matching_from(const Model& other) {
  for (auto& p : params_) {
    auto it = other.index_.find(p.name);
    if (it == other.index_.end()) continue;
    const Tensor& src = other.params_[it->second].value;
    if (!(src.shape() == p.value.shape())) continue;
    auto dst = p.value.mutable_data();
    std::copy(src.data().begin(), src.data().end(), dst.begin());
  }
  for (auto& [name, st] : bn_) {
    auto it = other.bn_.find(name);
    if (it != other.bn_.end() && it->second.running_mean.size() == st.running_mean.size()) st = it->second;
  }
}

Model Model::with_strategy(AttentionStrategy tag, std::uint64_t seed, const AttentionOptions& options) const {
  Model out(build_strategy(tag, spec_, options), seed, dtype_);
  out.copy_matching_from(*this);
  return out;
}

Model Model::with_head(int classes, std::uint64_t seed) const {
  if (classes < 2) throw ArgumentError("class count must be >= 2");
  NetworkSpec spec = spec_;
  spec.num_classes = classes;
  for (auto& layer : spec.layers) {
    if (auto* head = std::get_if<HeadSpec>(&layer.body)) head->classes = classes;
  }
  Model out(std::move(spec), seed, dtype_);
  out.copy_matching_from(*this);
  return out;
}

Checkpoint Model::to_checkpoint(const std::string& extra_metadata_json) const {
  nlohmann::json meta;
  meta["format"] = "mushroomnet-model";
  meta["dtype"] = dtype_name(dtype_);
  meta["spec"] = nlohmann::json::parse(spec_to_json(spec_));
  meta["extra"] = nlohmann::json::parse(extra_metadata_json);
  Checkpoint ckpt;
  ckpt.metadata_json = meta.dump();
  for (const auto& p : params_) {
    ckpt.arrays.push_back({p.name, dtype_, p.value.shape(),
                           std::vector<double>(p.value.data().begin(), p.value.data().end())});
  }
  for (const auto& [name, st] : bn_) {
    const auto c = static_cast<std::int64_t>(st.running_mean.size());
    ckpt.arrays.push_back({name + ".running_mean", DType::F64, Shape{c}, st.running_mean});
    ckpt.arrays.push_back({name + ".running_var", DType::F64, Shape{c}, st.running_var});
  }
  return ckpt;
}

Model Model::from_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ckpt.metadata_json);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint metadata: ") + e.what());
  }
  if (meta.value("format", "") != "mushroomnet-model") throw DataError("checkpoint does not hold a model");
  Model m(spec_from_json(meta.at("spec").dump()), 0, parse_dtype(meta.at("dtype").get<std::string>()));
  for (auto& p : m.params_) {
    const NamedArray* a = ckpt.find(p.name);
    if (!a) throw DataError("checkpoint lacks parameter '" + p.name + "'");
    if (!(a->shape == p.value.shape())) {
      throw DataError("checkpoint parameter '" + p.name + "' has shape " + a->shape.str() + ", expected " +
                      p.value.shape().str());
    }
    auto dst = p.value.mutable_data();
    std::copy(a->values.begin(), a->values.end(), dst.begin());
  }
  for (auto& [name, st] : m.bn_) {
    const NamedArray* mean = ckpt.find(name + ".running_mean");
    const NamedArray* var = ckpt.find(name + ".running_var");
    if (!mean || !var || mean->values.size() != st.running_mean.size() ||
        var->values.size() != st.running_var.size()) {
      throw DataError("checkpoint lacks batchnorm statistics for '" + name + "'");
    }
    st.running_mean = mean->values;
    st.running_var = var->values;
  }
  return m;
}

} // namespace mushroom

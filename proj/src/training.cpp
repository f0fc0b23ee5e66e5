#include "mushroom/training.hpp"

#include "mushroom/errors.hpp"
#include "mushroom/random.hpp"
#include "mushroom/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace mushroom {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Splitting

DatasetSplit split_dataset(std::span<const int> labels, const SplitRatios& ratios, std::uint64_t seed,
                           bool stratified) {
  if (ratios.train < 0.0 || ratios.val < 0.0 || ratios.test < 0.0 ||
      std::fabs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ArgumentError("split ratios must be nonnegative and sum to 1");
  }
  DatasetSplit split;
  split.seed = seed;
  split.ratios = ratios;
  std::mt19937_64 rng(seed);

  auto assign = [&](std::vector<std::size_t> group) {
    rnd::shuffle(group, rng);
    const double n = static_cast<double>(group.size());
    const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.val + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(n * ratios.test + 1e-9));
    for (std::size_t i = 0; i < group.size(); ++i) {
      const SampleRef ref{group[i], labels[group[i]]};
      if (i < n_val)
        split.val.push_back(ref);
      else if (i < n_val + n_test)
        split.test.push_back(ref);
      else
        split.train.push_back(ref);
    }
  };

  if (stratified) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (auto& [label, group] : by_class) assign(std::move(group));
  } else {
    std::vector<std::size_t> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    assign(std::move(all));
  }
  auto by_index = [](const SampleRef& a, const SampleRef& b) { return a.index < b.index; };
  std::sort(split.train.begin(), split.train.end(), by_index);
  std::sort(split.val.begin(), split.val.end(), by_index);
  std::sort(split.test.begin(), split.test.end(), by_index);
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double f = h * 6.0;
  const int sector = static_cast<int>(f) % 6;
  const double frac = f - std::floor(f);
  const double p = v * (1.0 - s), q = v * (1.0 - s * frac), t = v * (1.0 - s * (1.0 - frac));
  switch (sector) {
  case 0: return {v, t, p};
  case 1: return {q, v, p};
  case 2: return {p, v, t};
  case 3: return {p, q, v};
  case 4: return {t, p, v};
  default: return {v, p, q};
  }
}

Image synthetic_mushroom(int cls, int classes, int res, std::mt19937_64& rng) {
  Image img = Image::blank(3, res, res);
  const double r = res;
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const double base = rnd::uniform(rng, 0.2, 0.45);
      img.at(0, y, x) = base * 0.9;
      img.at(1, y, x) = base;
      img.at(2, y, x) = base * 0.7;
    }

  const double spread = classes > 1 ? static_cast<double>(cls) / (classes - 1) : 0.0;
  const auto cap = hsv_to_rgb(static_cast<double>(cls) / classes + rnd::uniform(rng, -0.03, 0.03), 0.8,
                              rnd::uniform(rng, 0.8, 0.95));
  const double cap_h = r * rnd::uniform(rng, 0.14, 0.18);
  const double cap_w = std::min(0.44 * r, cap_h * (1.1 + 1.4 * spread) * rnd::uniform(rng, 0.92, 1.08));
  const double cx = r * (0.5 + rnd::uniform(rng, -0.06, 0.06));
  const double cy = r * (0.42 + rnd::uniform(rng, -0.05, 0.05));
  const double stem_w = r * 0.07;
  const double stem_bottom = cy + r * 0.36;

  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double dx = (px - cx) / cap_w, dy = (py - cy) / cap_h;
      const double shade = rnd::uniform(rng, -0.05, 0.05);
      if (dx * dx + dy * dy <= 1.0 && dy <= 0.3) {
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(cap[c] + shade, 0.0, 1.0);
      } else if (std::fabs(px - cx) <= stem_w && py > cy && py <= stem_bottom) {
        const double stem[3] = {0.92, 0.87, 0.72};
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(stem[c] + shade, 0.0, 1.0);
      }
    }
  return img;
}

} // namespace

Dataset generate_synthetic_dataset(int classes, int per_class, int resolution, std::uint64_t seed) {
  if (classes < 1 || per_class < 1 || resolution < 8) {
    throw ArgumentError("synthetic dataset needs classes >= 1, per_class >= 1, resolution >= 8");
  }
  Dataset data;
  for (int c = 0; c < classes; ++c) data.class_names.push_back("class_" + std::to_string(c));
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      std::mt19937_64 rng(rnd::mix_seed(seed, static_cast<std::uint64_t>(c) * 1000003u + i));
      data.images.push_back(synthetic_mushroom(c, classes, resolution, rng));
      data.labels.push_back(c);
      char name[32];
      std::snprintf(name, sizeof name, "img_%04d.ppm", i);
      data.paths.push_back(data.class_names[c] + "/" + name);
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// Dataset I/O

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".ppm" || ext == ".pgm";
}

} // namespace

Dataset load_dataset(const fs::path& root, int resolution) {
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw DataError("dataset has no class subdirectories: " + root.string());

  Dataset data;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("class directory has no PPM/PGM images: " + dir.string());
    const int label = static_cast<int>(data.class_names.size());
    data.class_names.push_back(dir.filename().string());
    for (const auto& file : files) {
      data.images.push_back(resize_bilinear(to_rgb(read_image(file.string())), resolution, resolution));
      data.labels.push_back(label);
      data.paths.push_back(fs::relative(file, root).generic_string());
    }
  }
  return data;
}

void save_dataset(const Dataset& data, const fs::path& root) {
  for (const auto& name : data.class_names) fs::create_directories(root / name);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const fs::path rel = i < data.paths.size() && !data.paths[i].empty()
                             ? fs::path(data.paths[i])
                             : fs::path(data.class_names.at(data.labels[i])) / ("img_" + std::to_string(i) + ".ppm");
    write_image(data.images[i], (root / rel).string());
  }
}

// ---------------------------------------------------------------------------
// Augmentation

std::string_view augment_op_name(AugmentOp op) {
  switch (op) {
  case AugmentOp::Rotate: return "rotate";
  case AugmentOp::Crop: return "crop";
  case AugmentOp::Sharpen: return "sharpen";
  case AugmentOp::Contrast: return "contrast";
  case AugmentOp::Brightness: return "brightness";
  }
  return "?";
}

AugmentOp parse_augment_op(std::string_view name) {
  for (AugmentOp op : {AugmentOp::Rotate, AugmentOp::Crop, AugmentOp::Sharpen, AugmentOp::Contrast, AugmentOp::Brightness})
    if (augment_op_name(op) == name) return op;
  throw ArgumentError("unknown augmentation '" + std::string(name) + "'");
}

namespace {

Image rotate_quarter_turns(const Image& in, int turns) {
  const int h = in.height, w = in.width;
  const bool swap = turns % 2 == 1;
  Image out = Image::blank(in.channels, swap ? w : h, swap ? h : w);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        switch (turns) {
        case 1: out.at(c, y, x) = in.at(c, x, w - 1 - y); break;
        case 2: out.at(c, y, x) = in.at(c, h - 1 - y, w - 1 - x); break;
        case 3: out.at(c, y, x) = in.at(c, h - 1 - x, y); break;
        default: out.at(c, y, x) = in.at(c, y, x); break;
        }
      }
  return out;
}

Image rotate_bilinear(const Image& in, double degrees) {
  const double th = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(th), sn = std::sin(th);
  const double cy = (in.height - 1) / 2.0, cx = (in.width - 1) / 2.0;
  Image out = Image::blank(in.channels, in.height, in.width);
  auto sample = [&](int c, int y, int x) {
    return y < 0 || y >= in.height || x < 0 || x >= in.width ? 0.0 : in.at(c, y, x);
  };
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      const double dy = y - cy, dx = x - cx;
      const double sx = cx + dx * cs - dy * sn;
      const double sy = cy + dx * sn + dy * cs;
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double wx = sx - x0, wy = sy - y0;
      for (int c = 0; c < in.channels; ++c) {
        const double top = sample(c, y0, x0) * (1.0 - wx) + sample(c, y0, x0 + 1) * wx;
        const double bottom = sample(c, y0 + 1, x0) * (1.0 - wx) + sample(c, y0 + 1, x0 + 1) * wx;
        out.at(c, y, x) = top * (1.0 - wy) + bottom * wy;
      }
    }
  return out;
}

Image box_blur3(const Image& in) {
  Image out = Image::blank(in.channels, in.height, in.width);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            s += in.at(c, std::clamp(y + dy, 0, in.height - 1), std::clamp(x + dx, 0, in.width - 1));
        out.at(c, y, x) = s / 9.0;
      }
  return out;
}

} // namespace

Image augment(const Image& image, AugmentOp op, const AugmentParams& params) {
  switch (op) {
  case AugmentOp::Rotate: {
    const double turns = params.degrees / 90.0;
    if (turns == std::round(turns)) {
      const int t = static_cast<int>(((static_cast<long long>(std::llround(turns)) % 4) + 4) % 4);
      return rotate_quarter_turns(image, t);
    }
    return rotate_bilinear(image, params.degrees);
  }
  case AugmentOp::Crop: {
    if (params.crop_height <= 0 || params.crop_width <= 0 || params.crop_top < 0 || params.crop_left < 0 ||
        params.crop_top + params.crop_height > image.height || params.crop_left + params.crop_width > image.width) {
      throw ArgumentError("crop window " + std::to_string(params.crop_height) + "x" + std::to_string(params.crop_width) +
                          "+" + std::to_string(params.crop_top) + "+" + std::to_string(params.crop_left) +
                          " lies outside the " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                          " image");
    }
    Image window = Image::blank(image.channels, params.crop_height, params.crop_width);
    for (int c = 0; c < image.channels; ++c)
      for (int y = 0; y < params.crop_height; ++y)
        for (int x = 0; x < params.crop_width; ++x)
          window.at(c, y, x) = image.at(c, params.crop_top + y, params.crop_left + x);
    return resize_bilinear(window, image.height, image.width);
  }
  case AugmentOp::Sharpen: {
    if (params.sharpen == 0.0) return image;
    const Image blur = box_blur3(image);
    Image out = image;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = std::clamp(image.data[i] + params.sharpen * (image.data[i] - blur.data[i]), 0.0, 1.0);
    return out;
  }
  case AugmentOp::Contrast: {
    if (params.contrast == 1.0) return image;
    Image out = image;
    const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
    for (int c = 0; c < image.channels; ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < plane; ++i) mean += image.data[c * plane + i];
      mean /= static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) {
        double& v = out.data[c * plane + i];
        v = std::clamp(mean + params.contrast * (v - mean), 0.0, 1.0);
      }
    }
    return out;
  }
  case AugmentOp::Brightness: {
    Image out = image;
    for (auto& v : out.data) v = std::clamp(v + params.brightness, 0.0, 1.0);
    return out;
  }
  }
  throw ArgumentError("unknown augmentation");
}

Image random_augment(const Image& image, const AugmentConfig& cfg, std::mt19937_64& rng) {
  if (rnd::uniform01(rng) >= cfg.probability) return image;
  const auto op = static_cast<AugmentOp>(rnd::index(rng, 5));
  AugmentParams p;
  switch (op) {
  case AugmentOp::Rotate:
    p.degrees = rnd::index(rng, 2) == 0 ? 90.0 * static_cast<double>(rnd::index(rng, 4))
                                        : rnd::uniform(rng, -cfg.max_degrees, cfg.max_degrees);
    if (image.height != image.width) p.degrees = 180.0 * std::round(p.degrees / 180.0);
    break;
  case AugmentOp::Crop: {
    const double f = rnd::uniform(rng, cfg.min_crop_fraction, 1.0);
    p.crop_height = std::max(1, static_cast<int>(std::lround(f * image.height)));
    p.crop_width = std::max(1, static_cast<int>(std::lround(f * image.width)));
    p.crop_top = static_cast<int>(rnd::index(rng, static_cast<std::uint64_t>(image.height - p.crop_height + 1)));
    p.crop_left = static_cast<int>(rnd::index(rng, static_cast<std::uint64_t>(image.width - p.crop_width + 1)));
    break;
  }
  case AugmentOp::Sharpen: p.sharpen = rnd::uniform(rng, 0.0, cfg.max_sharpen); break;
  case AugmentOp::Contrast: p.contrast = rnd::uniform(rng, cfg.contrast_low, cfg.contrast_high); break;
  case AugmentOp::Brightness: p.brightness = rnd::uniform(rng, -cfg.max_brightness, cfg.max_brightness); break;
  }
  return augment(image, op, p);
}

// ---------------------------------------------------------------------------
// Adam

void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments, std::int64_t t,
                 const AdamConfig& cfg) {
  if (grad.size() != param.size()) throw ShapeError("adam_update: gradient size does not match parameter");
  if (t < 1) throw ArgumentError("adam_update: step count starts at 1");
  if (moments.m.empty()) {
    moments.m.assign(param.size(), 0.0);
    moments.v.assign(param.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * grad[i];
    moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    param[i] -= cfg.lr * (moments.m[i] / c1) / (std::sqrt(moments.v[i] / c2) + cfg.eps);
  }
}

void adam_step(Model& model, AdamState& state, const AdamConfig& cfg) {
  for (const auto& p : model.parameters()) {
    if (!p.value.requires_grad() || !p.value.has_grad()) continue;
    for (double g : p.value.grad())
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + p.name + "; optimizer step aborted");
  }
  ++state.step;
  for (auto& p : model.parameters()) {
    if (!p.value.requires_grad() || !p.value.has_grad()) continue;
    auto data = p.value.mutable_data();
    adam_update(data, p.value.grad(), state.moments[p.name], state.step, cfg);
    if (p.value.dtype() == DType::F32)
      for (double& v : data) v = static_cast<double>(static_cast<float>(v));
  }
}

// ---------------------------------------------------------------------------
// Training loop

int HeadSetup::predict(std::span<const double> output) const {
  if (variant == HeadVariant::Softmax) {
    if (output.empty()) throw ArgumentError("empty head output");
    return static_cast<int>(std::max_element(output.begin(), output.end()) - output.begin());
  }
  HeadConfig cfg;
  cfg.variant = variant;
  cfg.metric = metric;
  cfg.reference = reference;
  return classify_by_distance(output, cfg).predicted;
}

void apply_stage_mask(Model& model, int stage) {
  if (stage < 1 || stage > 3) throw ArgumentError("stage must be 1, 2 or 3, got " + std::to_string(stage));
  if (stage == 3) {
    const bool has_attention = std::any_of(model.parameters().begin(), model.parameters().end(), [](const Parameter& p) {
      return p.role == LayerRole::FirstAttention || p.role == LayerRole::LastAttention;
    });
    if (!has_attention) throw ArgumentError("stage 3 trains the attention blocks, but the model has none");
    model.set_trainable_roles(stage3_trainable_roles());
  } else {
    model.set_all_trainable(true);
  }
}

namespace {

Tensor batch_tensor(const Dataset& data, std::span<const SampleRef> refs, DType dtype, const AugmentConfig* aug,
                    std::mt19937_64* rng) {
  std::vector<Image> augmented;
  std::vector<const Image*> ptrs;
  if (aug != nullptr && aug->enabled) {
    augmented.reserve(refs.size());
    for (const auto& r : refs) augmented.push_back(random_augment(data.images.at(r.index), *aug, *rng));
    for (const auto& img : augmented) ptrs.push_back(&img);
  } else {
    for (const auto& r : refs) ptrs.push_back(&data.images.at(r.index));
  }
  return images_to_tensor(ptrs, dtype);
}

Tensor batch_loss(const Tensor& out, std::span<const int> labels, const HeadSetup& head) {
  if (head.variant == HeadVariant::Softmax) return ops::cross_entropy(out, labels);
  return head_loss(out, labels, head.targets, head.variant);
}

struct EvalSummary {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalSummary evaluate_split(Model& model, const Dataset& data, std::span<const SampleRef> refs, const HeadSetup& head,
                           int batch_size) {
  EvalSummary s;
  if (refs.empty()) return s;
  NoGradGuard guard;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < refs.size(); start += batch_size) {
    const auto chunk = refs.subspan(start, std::min<std::size_t>(batch_size, refs.size() - start));
    std::vector<int> labels;
    for (const auto& r : chunk) labels.push_back(r.label);
    const Tensor out = model.forward(batch_tensor(data, chunk, model.dtype(), nullptr, nullptr), ops::Mode::Eval).logits;
    s.loss += batch_loss(out, labels, head).item() * static_cast<double>(chunk.size());
    const auto k = static_cast<std::size_t>(out.shape()[1]);
    const auto values = out.data();
    for (std::size_t i = 0; i < chunk.size(); ++i)
      if (head.predict(values.subspan(i * k, k)) == labels[i]) ++correct;
  }
  s.loss /= static_cast<double>(refs.size());
  s.accuracy = static_cast<double>(correct) / static_cast<double>(refs.size());
  return s;
}

} // namespace

StageResult run_stage(Model& model, const Dataset& data, const DatasetSplit& split, const HeadSetup& head,
                      const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ArgumentError("epochs must be positive");
  if (cfg.batch_size < 1) throw ArgumentError("batch size must be positive");
  if (split.train.empty()) throw DataError("training split is empty");
  if (head.variant != HeadVariant::Softmax && static_cast<int>(head.targets.size()) != model.spec().num_classes) {
    throw ShapeError("head target set has " + std::to_string(head.targets.size()) + " classes, model outputs " +
                     std::to_string(model.spec().num_classes));
  }
  apply_stage_mask(model, cfg.stage);
  model.zero_grad();

  StageResult result;
  AdamState adam;
  double best_accuracy = -1.0;
  double best_loss = 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(rnd::mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::vector<SampleRef> order = split.train;
    rnd::shuffle(order, rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const SampleRef> chunk(order.data() + start,
                                             std::min<std::size_t>(cfg.batch_size, order.size() - start));
      std::vector<int> labels;
      for (const auto& r : chunk) labels.push_back(r.label);
      const Tensor x = batch_tensor(data, chunk, model.dtype(), &cfg.augment, &rng);
      const Tensor loss = batch_loss(model.forward(x, ops::Mode::Train).logits, labels, head);
      loss.backward();
      adam_step(model, adam, cfg.adam);
      model.zero_grad();
      loss_sum += loss.item() * static_cast<double>(chunk.size());
    }

    const EvalSummary val = evaluate_split(model, data, split.val, head, std::max(cfg.batch_size, 32));
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), val.loss, val.accuracy};
    result.log.push_back(rec);
    const bool last_without_val = split.val.empty() && epoch == cfg.epochs;
    const bool improved = val.accuracy > best_accuracy || (val.accuracy == best_accuracy && val.loss < best_loss);
    if ((!split.val.empty() && improved) || last_without_val) {
      best_accuracy = val.accuracy;
      best_loss = val.loss;
      result.best = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

std::vector<std::vector<double>> predict_outputs(Model& model, const Dataset& data, std::span<const SampleRef> samples,
                                                 int batch_size) {
  NoGradGuard guard;
  std::vector<std::vector<double>> rows;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto chunk = samples.subspan(start, std::min<std::size_t>(batch_size, samples.size() - start));
    const Tensor out = model.forward(batch_tensor(data, chunk, model.dtype(), nullptr, nullptr), ops::Mode::Eval).logits;
    const auto k = static_cast<std::size_t>(out.shape()[1]);
    const auto values = out.data();
    for (std::size_t i = 0; i < chunk.size(); ++i) rows.emplace_back(values.begin() + i * k, values.begin() + (i + 1) * k);
  }
  return rows;
}

std::string epoch_log_csv(const std::vector<EpochRecord>& log) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,val_accuracy\n";
  for (const auto& r : log)
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss) << ','
        << format_double(r.val_accuracy) << '\n';
  return out.str();
}

} // namespace mushroom

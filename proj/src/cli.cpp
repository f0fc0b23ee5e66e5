#include "mushroom/cli.hpp"

#include "mushroom/errors.hpp"
#include "mushroom/evaluation.hpp"
#include "mushroom/genetics.hpp"
#include "mushroom/interpret.hpp"
#include "mushroom/random.hpp"
#include "mushroom/text_io.hpp"
#include "mushroom/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>

namespace mushroom {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class KeyType { Int, Double, Bool, String, List };

struct KeySpec {
  std::string name;
  KeyType type;
  json fallback;
  std::string help;
};

const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = {
      {"seed", KeyType::Int, 0, "master seed (split, init, shuffling, synthetic data)"},
      {"out", KeyType::String, "run", "output directory; nothing is written outside it"},
      {"data", KeyType::String, "", "dataset root, one subdirectory of PPM/PGM images per class"},
      {"classes", KeyType::Int, 3, "synthetic classes"},
      {"per_class", KeyType::Int, 100, "synthetic images per class"},
      {"class_names", KeyType::List, json::array(), "synthetic class directory names (default class_<i>)"},
      {"resolution", KeyType::Int, 224, "input resolution, a multiple of 32"},
      {"alpha", KeyType::Double, 1.0, "width multiplier"},
      {"strategy", KeyType::String, "proposed", "attention placement: none, model1..model7, proposed"},
      {"dtype", KeyType::String, "f64", "parameter precision: f32 or f64"},
      {"stage", KeyType::Int, 2, "training stage: 1 pretrain/load, 2 fine-tune all, 3 attention + last conv + head"},
      {"epochs", KeyType::Int, 30, "epochs per stage"},
      {"batch_size", KeyType::Int, 12, "mini-batch size"},
      {"lr", KeyType::Double, 1e-4, "Adam learning rate"},
      {"beta1", KeyType::Double, 0.9, "Adam beta1"},
      {"beta2", KeyType::Double, 0.999, "Adam beta2"},
      {"eps", KeyType::Double, 1e-8, "Adam epsilon"},
      {"augment", KeyType::Bool, false, "random augmentation during training"},
      {"aug_probability", KeyType::Double, 0.5, "chance an image is augmented"},
      {"aug_max_degrees", KeyType::Double, 15.0, "largest free rotation angle"},
      {"aug_min_crop", KeyType::Double, 0.8, "smallest crop side fraction"},
      {"aug_max_sharpen", KeyType::Double, 1.0, "largest unsharp-mask amount"},
      {"aug_contrast_low", KeyType::Double, 0.8, "lowest contrast factor"},
      {"aug_contrast_high", KeyType::Double, 1.2, "highest contrast factor"},
      {"aug_max_brightness", KeyType::Double, 0.1, "largest brightness offset"},
      {"val_ratio", KeyType::Double, 0.1, "validation fraction per class"},
      {"test_ratio", KeyType::Double, 0.1, "test fraction per class"},
      {"split", KeyType::String, "test", "samples for eval/classify: train, val, test or all"},
      {"head", KeyType::String, "classes", "classes (softmax) or gendist (genetic-distance embedding)"},
      {"head_variant", KeyType::String, "mse_sum", "gendist loss: mse_sum, mse_mean or mae"},
      {"metric", KeyType::String, "cosine", "embedding distance: cosine or euclidean"},
      {"matrix", KeyType::String, "", "genetic distance matrix CSV"},
      {"normalize", KeyType::String, "none", "target normalization: none or minmax"},
      {"diag", KeyType::Double, -1.0, "target diagonal value"},
      {"drop", KeyType::List, json::array(), "species removed from the matrix"},
      {"checkpoint", KeyType::String, "", "model checkpoint to load"},
      {"image", KeyType::String, "", "single PPM/PGM image"},
      {"class", KeyType::String, "", "Grad-CAM target: class index or name (default: predicted)"},
      {"overlay_alpha", KeyType::Double, 0.5, "heatmap weight in the overlay"},
      {"fasta", KeyType::String, "", "aligned FASTA file"},
      {"model", KeyType::String, "tn93", "distance model: p, jc69 or tn93"},
      {"bootstrap", KeyType::Int, 0, "bootstrap replicates for distance standard deviations (0 = none)"},
  };
  return keys;
}

const KeySpec& key_spec(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return k;
  throw ArgumentError("unknown config key '" + name + "'");
}

bool type_matches(const json& v, KeyType t) {
  switch (t) {
  case KeyType::Int: return v.is_number_integer();
  case KeyType::Double: return v.is_number();
  case KeyType::Bool: return v.is_boolean();
  case KeyType::String: return v.is_string();
  case KeyType::List:
    return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
  }
  return false;
}

json flag_value(const KeySpec& k, const std::string& text) {
  try {
    switch (k.type) {
    case KeyType::Int: return parse_int(text, k.name);
    case KeyType::Double: return parse_double(text, k.name);
    case KeyType::Bool:
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw ArgumentError("--" + k.name + " expects true or false, got '" + text + "'");
    case KeyType::String: return text;
    case KeyType::List: break;
    }
  } catch (const DataError& e) {
    throw ArgumentError(e.what());
  }
  throw ArgumentError("bad flag " + k.name);
}

struct Run {
  json cfg;
  fs::path out;
  std::ostream& log;

  std::string str(const char* key) const { return cfg.at(key).get<std::string>(); }
  long long integer(const char* key) const { return cfg.at(key).get<long long>(); }
  double number(const char* key) const { return cfg.at(key).get<double>(); }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }
  std::vector<std::string> list(const char* key) const { return cfg.at(key).get<std::vector<std::string>>(); }

  std::string required(const char* key) const {
    std::string v = str(key);
    if (v.empty()) throw ArgumentError(std::string(cfg.at("command").get<std::string>()) + " needs --" + key);
    return v;
  }
  void write(const std::string& name, std::string_view text) const { write_text_file((out / name).string(), text); }
};

// ---------------------------------------------------------------------------
// Shared helpers

SplitRatios ratios(const Run& run) {
  SplitRatios r;
  r.val = run.number("val_ratio");
  r.test = run.number("test_ratio");
  r.train = 1.0 - r.val - r.test;
  return r;
}

std::vector<SampleRef> select_samples(const Run& run, const Dataset& data) {
  const std::string which = run.str("split");
  if (which == "all") {
    std::vector<SampleRef> all;
    for (std::size_t i = 0; i < data.size(); ++i) all.push_back({i, data.labels[i]});
    return all;
  }
  const DatasetSplit s = split_dataset(data.labels, ratios(run), run.seed());
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  throw ArgumentError("--split must be train, val, test or all, got '" + which + "'");
}

/// Rows and columns of `m` reordered so entry (i,j) belongs to (order[i], order[j]).
std::vector<std::vector<double>> permute(const std::vector<std::vector<double>>& m, const std::vector<std::size_t>& order) {
  std::vector<std::vector<double>> out(order.size(), std::vector<double>(order.size()));
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = 0; j < order.size(); ++j) out[i][j] = m[order[i]][order[j]];
  return out;
}

/// Targets and reference for `class_names` from the configured matrix.
void fill_distance_head(const Run& run, const std::vector<std::string>& class_names, HeadSetup& head) {
  const GeneticDistanceMatrix g = load_matrix_file(run.required("matrix"));
  const EmbeddingTargetSet t =
      build_targets(g, parse_normalization(run.str("normalize")), run.number("diag"), run.list("drop"));
  if (t.size() != class_names.size()) {
    throw DataError("matrix keeps " + std::to_string(t.size()) + " species but there are " +
                    std::to_string(class_names.size()) + " classes");
  }
  std::vector<std::size_t> order;
  for (const auto& name : class_names) {
    const auto it = std::find(t.names.begin(), t.names.end(), name);
    if (it == t.names.end()) throw DataError("class '" + name + "' has no row in the distance matrix");
    order.push_back(static_cast<std::size_t>(it - t.names.begin()));
  }
  head.targets = t;
  head.targets.names = class_names;
  head.targets.targets = permute(t.targets, order);
  head.reference = permute(reference_matrix(t), order);
  head.metric = parse_distance_metric(run.str("metric"));
}

HeadSetup head_from_config(const Run& run, const std::vector<std::string>& class_names) {
  HeadSetup head;
  const std::string type = run.str("head");
  if (type == "classes") return head;
  if (type != "gendist") throw ArgumentError("--head must be classes or gendist, got '" + type + "'");
  head.variant = parse_head_variant(run.str("head_variant"));
  if (head.variant == HeadVariant::Softmax) throw ArgumentError("the gendist head needs a distance loss, not softmax");
  fill_distance_head(run, class_names, head);
  return head;
}

json head_to_json(const HeadSetup& h) {
  if (h.variant == HeadVariant::Softmax) return {{"type", "classes"}};
  return {{"type", "gendist"},
          {"variant", head_variant_name(h.variant)},
          {"metric", distance_metric_name(h.metric)},
          {"normalization", normalization_name(h.targets.normalization)},
          {"targets", h.targets.targets},
          {"reference", h.reference}};
}

struct LoadedModel {
  Model model;
  std::vector<std::string> class_names;
  HeadSetup head;
};

LoadedModel load_model(const Run& run) {
  const Checkpoint ckpt = load_checkpoint(run.required("checkpoint"));
  LoadedModel lm{Model::from_checkpoint(ckpt), {}, {}};
  const int k = lm.model.spec().num_classes;
  json extra;
  try {
    extra = json::parse(ckpt.metadata_json).value("extra", json::object());
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint metadata: ") + e.what());
  }
  if (extra.contains("class_names")) {
    lm.class_names = extra.at("class_names").get<std::vector<std::string>>();
  } else {
    for (int c = 0; c < k; ++c) lm.class_names.push_back("class_" + std::to_string(c));
  }
  if (static_cast<int>(lm.class_names.size()) != k) throw DataError("checkpoint class names do not match its head width");
  if (extra.contains("head") && extra["head"].value("type", "classes") == "gendist") {
    const json& h = extra["head"];
    lm.head.variant = parse_head_variant(h.at("variant").get<std::string>());
    lm.head.metric = parse_distance_metric(h.at("metric").get<std::string>());
    lm.head.targets.names = lm.class_names;
    lm.head.targets.targets = h.at("targets").get<std::vector<std::vector<double>>>();
    lm.head.reference = h.at("reference").get<std::vector<std::vector<double>>>();
  }
  // an explicit matrix re-targets classification
  if (!run.str("matrix").empty()) {
    if (lm.head.variant == HeadVariant::Softmax) lm.head.variant = parse_head_variant(run.str("head_variant"));
    fill_distance_head(run, lm.class_names, lm.head);
  } else {
    lm.head.metric = parse_distance_metric(run.str("metric"));
  }
  return lm;
}

Dataset load_for_model(const Run& run, const LoadedModel& lm) {
  Dataset data = load_dataset(run.required("data"), lm.model.spec().resolution);
  if (data.class_names != lm.class_names) throw DataError("dataset classes do not match the checkpoint's classes");
  return data;
}

/// Per-class scores for ROC: softmax probabilities or negated embedding distances.
std::vector<double> class_scores(const HeadSetup& head, const std::vector<double>& output) {
  if (head.variant == HeadVariant::Softmax) {
    const double peak = *std::max_element(output.begin(), output.end());
    std::vector<double> p(output.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(output[i] - peak);
    for (auto& v : p) v /= z;
    return p;
  }
  HeadConfig cfg;
  cfg.variant = head.variant;
  cfg.metric = head.metric;
  cfg.reference = head.reference;
  std::vector<double> d = classify_by_distance(output, cfg).distances;
  for (auto& v : d) v = -v;
  return d;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_synth_data(const Run& run) {
  Dataset d = generate_synthetic_dataset(static_cast<int>(run.integer("classes")), static_cast<int>(run.integer("per_class")),
                                         static_cast<int>(run.integer("resolution")), run.seed());
  const auto names = run.list("class_names");
  if (!names.empty()) {
    if (names.size() != d.class_names.size()) throw ArgumentError("--class_names must list one name per class");
    for (std::size_t i = 0; i < d.paths.size(); ++i) {
      const auto& old = d.class_names[d.labels[i]];
      d.paths[i] = names[d.labels[i]] + d.paths[i].substr(old.size());
    }
    d.class_names = names;
  }
  save_dataset(d, run.out);
  run.log << "wrote " << d.size() << " images in " << d.class_names.size() << " classes to " << run.out.string() << "\n";
}

void cmd_train(const Run& run) {
  const int resolution = static_cast<int>(run.integer("resolution"));
  const Dataset data = load_dataset(run.required("data"), resolution);
  const int k = static_cast<int>(data.class_names.size());
  const HeadSetup head = head_from_config(run, data.class_names);
  const DatasetSplit split = split_dataset(data.labels, ratios(run), run.seed());
  const AttentionStrategy strategy = parse_strategy(run.str("strategy"));
  const int stage = static_cast<int>(run.integer("stage"));
  if (stage < 1 || stage > 3) throw ArgumentError("--stage must be 1, 2 or 3");

  Model model;
  std::string source;
  if (!run.str("checkpoint").empty()) {
    model = Model::from_checkpoint(load_checkpoint(run.str("checkpoint")));
    source = "checkpoint";
    if (model.spec().resolution != resolution) {
      throw ArgumentError("checkpoint resolution " + std::to_string(model.spec().resolution) + " differs from --resolution " +
                          std::to_string(resolution));
    }
    if (model.spec().strategy != strategy) model = model.with_strategy(strategy, rnd::mix_seed(run.seed(), 1));
    if (stage == 2 || model.spec().num_classes != k) model = model.with_head(k, rnd::mix_seed(run.seed(), 2));
  } else {
    model = Model(build_mushroomnet(k, strategy, run.number("alpha"), resolution), rnd::mix_seed(run.seed(), 0),
                  parse_dtype(run.str("dtype")));
    source = "scratch";
  }

  TrainConfig tc;
  tc.stage = stage;
  tc.epochs = static_cast<int>(run.integer("epochs"));
  tc.batch_size = static_cast<int>(run.integer("batch_size"));
  tc.adam = {run.number("lr"), run.number("beta1"), run.number("beta2"), run.number("eps")};
  tc.seed = rnd::mix_seed(run.seed(), 3);
  tc.augment.enabled = run.cfg.at("augment").get<bool>();
  tc.augment.probability = run.number("aug_probability");
  tc.augment.max_degrees = run.number("aug_max_degrees");
  tc.augment.min_crop_fraction = run.number("aug_min_crop");
  tc.augment.max_sharpen = run.number("aug_max_sharpen");
  tc.augment.contrast_low = run.number("aug_contrast_low");
  tc.augment.contrast_high = run.number("aug_contrast_high");
  tc.augment.max_brightness = run.number("aug_max_brightness");

  StageResult result;
  if (stage == 1 && source == "checkpoint") {
    source = "external-checkpoint";
    result.best = model;
  } else if (stage == 1) {
    // no ImageNet weights here: pretrain briefly on procedural images instead
    source = "synthetic-pretrain";
    const Dataset synth = generate_synthetic_dataset(k, static_cast<int>(run.integer("per_class")), resolution,
                                                     rnd::mix_seed(run.seed(), 4));
    result = run_stage(model, synth, split_dataset(synth.labels, ratios(run), run.seed()), HeadSetup{}, tc);
  } else {
    result = run_stage(model, data, split, head, tc);
  }

  json extra = {{"stage", stage},
                {"source", source},
                {"best_epoch", result.best_epoch},
                {"class_names", data.class_names},
                {"head", head_to_json(head)},
                {"split", {{"seed", run.seed()}, {"val", split.ratios.val}, {"test", split.ratios.test}}}};
  run.write("epochs.csv", epoch_log_csv(result.log));
  save_checkpoint(result.best.to_checkpoint(extra.dump()), run.out / "best.ckpt");
  save_checkpoint(model.to_checkpoint(extra.dump()), run.out / "last.ckpt");
  run.log << "stage " << stage << " (" << source << "): " << result.log.size() << " epochs, best epoch "
          << result.best_epoch << "\n";
}

void cmd_eval(const Run& run) {
  LoadedModel lm = load_model(run);
  const Dataset data = load_for_model(run, lm);
  const std::vector<SampleRef> samples = select_samples(run, data);
  if (samples.empty()) throw DataError("no samples in the selected split");
  const auto outputs = predict_outputs(lm.model, data, samples);
  const int k = static_cast<int>(lm.class_names.size());

  std::vector<int> truth, predicted;
  std::vector<std::vector<double>> scores(k);
  std::ostringstream preds;
  preds << "path,true,predicted\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    truth.push_back(samples[i].label);
    predicted.push_back(lm.head.predict(outputs[i]));
    const auto s = class_scores(lm.head, outputs[i]);
    for (int c = 0; c < k; ++c) scores[c].push_back(s[c]);
    preds << data.paths[samples[i].index] << ',' << lm.class_names[truth.back()] << ',' << lm.class_names[predicted.back()]
          << '\n';
  }
  const ConfusionMatrix cm = ConfusionMatrix::from_predictions(k, truth, predicted);
  run.write("predictions.csv", preds.str());
  run.write("confusion.csv", confusion_csv(cm, lm.class_names));
  run.write("metrics.csv", report_table(cm, lm.class_names));

  std::ostringstream aucs;
  aucs << "class,auc\n";
  for (int c = 0; c < k; ++c) {
    const bool has_pos = std::count(truth.begin(), truth.end(), c) > 0;
    const bool has_neg = std::count(truth.begin(), truth.end(), c) < static_cast<long>(truth.size());
    if (!has_pos || !has_neg) {
      aucs << lm.class_names[c] << ",\n";
      continue;
    }
    const auto roc = roc_curve(scores[c], truth, c);
    run.write("roc_" + std::to_string(c) + ".csv", roc_csv(roc));
    aucs << lm.class_names[c] << ',' << format_double(auc(roc)) << '\n';
  }
  run.write("auc.csv", aucs.str());
  run.log << "accuracy " << format_percent(overall_accuracy(cm)) << "% on " << samples.size() << " samples\n";
}

void cmd_gradcam(const Run& run) {
  LoadedModel lm = load_model(run);
  const Image image = to_rgb(read_image(run.required("image")));
  int target = -1;
  const std::string cls = run.str("class");
  if (cls.empty()) {
    const Image sized = resize_bilinear(image, lm.model.spec().resolution, lm.model.spec().resolution);
    NoGradGuard guard;
    const Tensor logits = lm.model.forward(images_to_tensor({&sized}, lm.model.dtype()), ops::Mode::Eval).logits;
    target = lm.head.predict(logits.data());
  } else if (const auto it = std::find(lm.class_names.begin(), lm.class_names.end(), cls); it != lm.class_names.end()) {
    target = static_cast<int>(it - lm.class_names.begin());
  } else {
    try {
      target = static_cast<int>(parse_int(cls, "class"));
    } catch (const DataError&) {
      throw ArgumentError("--class '" + cls + "' is neither a class name nor an index");
    }
  }
  const Heatmap h = grad_cam(lm.model, image, target);

  Image gray = Image::blank(1, h.out_height, h.out_width);
  gray.data = h.upsampled;
  write_image(gray, (run.out / "heatmap.pgm").string());
  write_image(colorize(h), (run.out / "heatmap_color.ppm").string());
  write_image(overlay(image, h, run.number("overlay_alpha")), (run.out / "overlay.ppm").string());
  std::ostringstream grid;
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) grid << (x ? "," : "") << format_double(h.values[static_cast<std::size_t>(y) * h.width + x]);
    grid << '\n';
  }
  run.write("heatmap.csv", grid.str());
  run.log << "grad-cam for class " << target << " (" << lm.class_names.at(target) << ")\n";
}

void cmd_gendist_compute(const Run& run) {
  const AlignedSequenceSet seqs = load_fasta(run.required("fasta"));
  const DistanceModel model = parse_distance_model(run.str("model"));
  save_matrix_file(distance_matrix(seqs, model), (run.out / "distance.csv").string());
  const auto reps = run.integer("bootstrap");
  if (reps > 0) {
    save_matrix_file(bootstrap_uncertainty(seqs, model, static_cast<int>(reps), run.seed()),
                     (run.out / "distance_sd.csv").string());
  }
  run.log << "distances for " << seqs.size() << " sequences (" << distance_model_name(model) << ")\n";
}

void cmd_gendist_targets(const Run& run) {
  const GeneticDistanceMatrix g = load_matrix_file(run.required("matrix"));
  const EmbeddingTargetSet t =
      build_targets(g, parse_normalization(run.str("normalize")), run.number("diag"), run.list("drop"));
  run.write("targets.csv", save_matrix_csv(as_matrix(t.names, t.targets)));
  run.write("reference.csv", save_matrix_csv(as_matrix(t.names, reference_matrix(t))));
  run.log << "targets for " << t.size() << " species\n";
}

void cmd_classify(const Run& run) {
  LoadedModel lm = load_model(run);
  Dataset data;
  std::vector<SampleRef> samples;
  if (!run.str("image").empty()) {
    const int res = lm.model.spec().resolution;
    data.class_names = lm.class_names;
    data.images.push_back(resize_bilinear(to_rgb(read_image(run.str("image"))), res, res));
    data.labels.push_back(-1);
    data.paths.push_back(fs::path(run.str("image")).filename().string());
    samples.push_back({0, -1});
  } else {
    data = load_for_model(run, lm);
    samples = select_samples(run, data);
  }
  const auto outputs = predict_outputs(lm.model, data, samples);
  const bool distances = lm.head.variant != HeadVariant::Softmax;

  std::ostringstream csv;
  csv << "path,true,predicted";
  for (const auto& n : lm.class_names) csv << ",e_" << n;
  if (distances)
    for (const auto& n : lm.class_names) csv << ",d_" << n;
  csv << '\n';
  for (std::size_t i = 0; i < samples.size(); ++i) {
    csv << data.paths[samples[i].index] << ',' << (samples[i].label >= 0 ? lm.class_names[samples[i].label] : "");
    LabelEmbedding le;
    if (distances) {
      HeadConfig cfg;
      cfg.variant = lm.head.variant;
      cfg.metric = lm.head.metric;
      cfg.reference = lm.head.reference;
      le = classify_by_distance(outputs[i], cfg);
    } else {
      le.predicted = lm.head.predict(outputs[i]);
    }
    csv << ',' << lm.class_names[le.predicted];
    for (double v : outputs[i]) csv << ',' << format_double(v);
    for (double v : le.distances) csv << ',' << format_double(v);
    csv << '\n';
  }
  run.write("classify.csv", csv.str());
  run.log << "classified " << samples.size() << " images\n";
}

// ---------------------------------------------------------------------------

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  std::replace(text.begin(), text.end(), '\r', ' ');
  return text;
}

int fail(std::ostream& err, int code, const std::string& message) {
  static const char* kinds[] = {"ok", "usage", "data", "numeric"};
  err << "error: kind=" << kinds[code] << " code=" << code << " message=" << one_line(message) << '\n';
  return code;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mushroom classification with channel attention and genetic-distance heads", "mushroomnet"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON run config; flags override its values");

  std::map<std::string, std::string> scalar;
  std::map<std::string, std::vector<std::string>> lists;
  std::map<std::string, CLI::Option*> options;
  for (const auto& k : config_keys()) {
    CLI::Option* o = k.type == KeyType::List ? app.add_option("--" + k.name, lists[k.name], k.help)
                                             : app.add_option("--" + k.name, scalar[k.name], k.help);
    static const char* type_names[] = {"INT", "FLOAT", "BOOL", "TEXT", "TEXT ..."};
    o->type_name(type_names[static_cast<int>(k.type)]);
    o->default_str(k.fallback.is_string() ? k.fallback.get<std::string>() : k.fallback.dump());
    options[k.name] = o;
  }

  app.add_subcommand("synth-data", "write a procedural class-per-directory dataset");
  app.add_subcommand("train", "run one training stage; writes checkpoints and the epoch CSV");
  app.add_subcommand("eval", "confusion matrix, metrics table and ROC curves");
  app.add_subcommand("gradcam", "Grad-CAM heatmap and overlay for one image");
  CLI::App* gendist = app.add_subcommand("gendist", "genetic distance matrices and embedding targets");
  gendist->require_subcommand(1);
  gendist->fallthrough();
  gendist->add_subcommand("compute", "pairwise distances from an aligned FASTA file")->fallthrough();
  gendist->add_subcommand("targets", "embedding targets from a distance matrix")->fallthrough();
  app.add_subcommand("classify", "label-embedding rows and predicted classes");
  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, kExitUsage, e.what());
  }

  std::string command;
  for (CLI::App* sub : app.get_subcommands()) {
    command = sub->get_name();
    for (CLI::App* leaf : sub->get_subcommands()) command += " " + leaf->get_name();
  }

  try {
    json cfg = json::object();
    for (const auto& k : config_keys()) cfg[k.name] = k.fallback;
    if (!config_path.empty()) {
      json file;
      try {
        file = json::parse(read_text_file(config_path));
      } catch (const json::parse_error& e) {
        throw ArgumentError(config_path + ": " + e.what());
      }
      if (!file.is_object()) throw ArgumentError(config_path + ": config must be a JSON object");
      for (const auto& [key, value] : file.items()) {
        if (key == "command") continue;
        const KeySpec& k = key_spec(key);
        if (!type_matches(value, k.type)) throw ArgumentError(config_path + ": wrong type for '" + key + "'");
        cfg[key] = value;
      }
    }
    for (const auto& k : config_keys()) {
      if (options[k.name]->count() == 0) continue;
      cfg[k.name] = k.type == KeyType::List ? json(lists[k.name]) : flag_value(k, scalar[k.name]);
    }
    cfg["command"] = command;

    const Run run{cfg, fs::path(cfg.at("out").get<std::string>()), out};
    fs::create_directories(run.out);
    run.write("config.json", cfg.dump(2) + "\n");

    if (command == "synth-data") cmd_synth_data(run);
    else if (command == "train") cmd_train(run);
    else if (command == "eval") cmd_eval(run);
    else if (command == "gradcam") cmd_gradcam(run);
    else if (command == "gendist compute") cmd_gendist_compute(run);
    else if (command == "gendist targets") cmd_gendist_targets(run);
    else if (command == "classify") cmd_classify(run);
    else return fail(err, kExitUsage, "unknown command '" + command + "'");
  } catch (const ArgumentError& e) {
    return fail(err, kExitUsage, e.what());
  } catch (const NumericError& e) {
    return fail(err, kExitNumeric, e.what());
  } catch (const std::exception& e) {
    return fail(err, kExitData, e.what());
  }
  return kExitOk;
}

} // namespace mushroom

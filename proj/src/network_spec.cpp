#include "mushroom/network_spec.hpp"

#include "mushroom/errors.hpp"

#include <json.hpp>

namespace mushroom {

using nlohmann::json;

namespace {

struct StrategyName {
  AttentionStrategy tag;
  std::string_view name;
};

constexpr StrategyName kStrategies[] = {
    {AttentionStrategy::None, "none"},     {AttentionStrategy::Model1, "model1"},
    {AttentionStrategy::Model2, "model2"}, {AttentionStrategy::Model3, "model3"},
    {AttentionStrategy::Model4, "model4"}, {AttentionStrategy::Model5, "model5"},
    {AttentionStrategy::Model6, "model6"}, {AttentionStrategy::Model7, "model7"},
    {AttentionStrategy::Proposed, "proposed"},
};

constexpr std::pair<LayerRole, std::string_view> kRoles[] = {
    {LayerRole::Stem, "stem"},
    {LayerRole::FirstAttention, "first_attention"},
    {LayerRole::Bneck, "bneck"},
    {LayerRole::FeatureConv, "feature_conv"},
    {LayerRole::Pool, "pool"},
    {LayerRole::LastConv, "last_conv"},
    {LayerRole::LastAttention, "last_attention"},
    {LayerRole::Head, "head"},
};

LayerRole parse_role(std::string_view name) {
  for (auto [r, n] : kRoles)
    if (n == name) return r;
  throw DataError("unknown layer role '" + std::string(name) + "'");
}

Nonlinearity parse_nl(std::string_view name) {
  if (name == "none") return Nonlinearity::None;
  if (name == "RE") return Nonlinearity::ReLU;
  if (name == "HS") return Nonlinearity::HSwish;
  throw DataError("unknown nonlinearity '" + std::string(name) + "'");
}

json body_to_json(const LayerBody& body) {
  return std::visit(
      [](const auto& b) -> json {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, ConvSpec>) {
          return {{"type", "conv"},         {"in", b.in_channels},
                  {"out", b.out_channels},  {"kernel", b.kernel},
                  {"stride", b.stride},     {"nl", nonlinearity_name(b.nl)},
                  {"batchnorm", b.batchnorm}};
        } else if constexpr (std::is_same_v<T, BneckSpec>) {
          return {{"type", "bneck"},         {"kernel", b.kernel},   {"in", b.in_channels},
                  {"exp", b.exp_channels},   {"out", b.out_channels}, {"se", b.se},
                  {"nl", nonlinearity_name(b.nl)}, {"stride", b.stride},
                  {"se_reduction", b.se_reduction}};
        } else if constexpr (std::is_same_v<T, SESpec>) {
          return {{"type", "se"}, {"channels", b.channels}, {"reduction", b.reduction}};
        } else if constexpr (std::is_same_v<T, ECASpec>) {
          return {{"type", "eca"}, {"channels", b.channels}, {"kernel", b.kernel}};
        } else if constexpr (std::is_same_v<T, PoolSpec>) {
          return {{"type", "pool"}, {"kernel", b.kernel}, {"stride", b.stride}};
        } else {
          return {{"type", "head"}, {"in", b.in_features}, {"classes", b.classes}};
        }
      },
      body);
}

LayerBody body_from_json(const json& j) {
  const std::string type = j.at("type");
  if (type == "conv") {
    return ConvSpec{j.at("in"), j.at("out"), j.at("kernel"), j.at("stride"),
                    parse_nl(j.at("nl").get<std::string>()), j.at("batchnorm")};
  }
  if (type == "bneck") {
    BneckSpec b;
    b.kernel = j.at("kernel");
    b.in_channels = j.at("in");
    b.exp_channels = j.at("exp");
    b.out_channels = j.at("out");
    b.se = j.at("se");
    b.nl = parse_nl(j.at("nl").get<std::string>());
    b.stride = j.at("stride");
    b.se_reduction = j.at("se_reduction");
    return b;
  }
  if (type == "se") return SESpec{j.at("channels"), j.at("reduction")};
  if (type == "eca") return ECASpec{j.at("channels"), j.at("kernel")};
  if (type == "pool") return PoolSpec{j.at("kernel"), j.at("stride")};
  if (type == "head") return HeadSpec{j.at("in"), j.at("classes")};
  throw DataError("unknown layer type '" + type + "'");
}

} // namespace

bool LayerSpec::operator==(const LayerSpec& o) const {
  return name == o.name && role == o.role && body_to_json(body) == body_to_json(o.body);
}

bool NetworkSpec::operator==(const NetworkSpec& o) const {
  return layers == o.layers && width_multiplier == o.width_multiplier &&
         resolution == o.resolution && input_channels == o.input_channels &&
         num_classes == o.num_classes && strategy == o.strategy;
}

std::string_view strategy_name(AttentionStrategy s) {
  for (auto [tag, name] : kStrategies)
    if (tag == s) return name;
  return "unknown";
}

AttentionStrategy parse_strategy(std::string_view name) {
  for (auto [tag, n] : kStrategies)
    if (n == name) return tag;
  throw ArgumentError("unknown attention strategy '" + std::string(name) + "'");
}

std::string_view role_name(LayerRole r) {
  for (auto [role, n] : kRoles)
    if (role == r) return n;
  return "unknown";
}

std::string_view nonlinearity_name(Nonlinearity nl) {
  switch (nl) {
  case Nonlinearity::ReLU: return "RE";
  case Nonlinearity::HSwish: return "HS";
  case Nonlinearity::None: break;
  }
  return "none";
}

std::string spec_to_json(const NetworkSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) {
    layers.push_back({{"name", l.name}, {"role", role_name(l.role)}, {"body", body_to_json(l.body)}});
  }
  json j = {{"width_multiplier", spec.width_multiplier},
            {"resolution", spec.resolution},
            {"input_channels", spec.input_channels},
            {"num_classes", spec.num_classes},
            {"strategy", strategy_name(spec.strategy)},
            {"layers", layers}};
  return j.dump();
}

NetworkSpec spec_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    NetworkSpec spec;
    spec.width_multiplier = j.at("width_multiplier");
    spec.resolution = j.at("resolution");
    spec.input_channels = j.at("input_channels");
    spec.num_classes = j.at("num_classes");
    spec.strategy = parse_strategy(j.at("strategy").get<std::string>());
    for (const auto& l : j.at("layers")) {
      spec.layers.push_back({l.at("name"), parse_role(l.at("role").get<std::string>()),
                             body_from_json(l.at("body"))});
    }
    return spec;
  } catch (const json::exception& e) {
    throw DataError(std::string("network spec: ") + e.what());
  }
}

} // namespace mushroom

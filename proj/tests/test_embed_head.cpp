#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mushroom/embed_head.hpp"
#include "mushroom/errors.hpp"
#include "mushroom/random.hpp"

#include <cmath>
#include <random>

using namespace mushroom;

namespace {

const std::string kSpeciesMatrix = std::string(MUSHROOM_SOURCE_DIR) + "/data/species_distance.csv";

GeneticDistanceMatrix toy() {
  return {{"a", "b", "c"}, {{0, .2, .9}, {.2, 0, .8}, {.9, .8, 0}}};
}

} // namespace

TEST_CASE("build_targets on the species matrix") {
  const auto d = load_matrix_file(kSpeciesMatrix);
  const auto t = build_targets(d, Normalization::None, -1.0);
  REQUIRE(t.size() == 18);
  for (std::size_t i = 0; i < 18; ++i) CHECK(t.targets[i][i] == -1.0);
  const auto a = d.index_of("Amanita pruitii"), b = d.index_of("Armillaria mellea");
  CHECK(t.targets[a][b] == 0.66);

  const auto sub = build_targets(d, Normalization::None, -1.0, {"Cantharellus cibarius"});
  CHECK(sub.size() == 17);
  CHECK(std::find(sub.names.begin(), sub.names.end(), "Cantharellus cibarius") == sub.names.end());
  CHECK(sub.targets[0][1] == 0.66);

  CHECK_THROWS_AS(build_targets(d, Normalization::None, std::nullopt, {"Homo sapiens"}), DataError);
  CHECK_THROWS_AS(build_targets(toy(), Normalization::None, std::nullopt, {"a", "b"}), ArgumentError);
}

TEST_CASE("min-max normalization") {
  const auto d = load_matrix_file(kSpeciesMatrix);
  const auto t = build_targets(d, Normalization::MinMax);
  double lo = 1e9, hi = -1e9;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (i == j) {
        CHECK(t.targets[i][j] == 0.0);
        continue;
      }
      lo = std::min(lo, t.targets[i][j]);
      hi = std::max(hi, t.targets[i][j]);
      // argsort of off-diagonal entries is preserved
      for (std::size_t p = 0; p < t.size(); ++p)
        for (std::size_t q = 0; q < t.size(); ++q)
          if (p != q && d.values[i][j] < d.values[p][q]) CHECK(t.targets[i][j] < t.targets[p][q]);
    }
  CHECK(lo == 0.0);
  CHECK(hi == 1.0);

  const auto with_diag = build_targets(toy(), Normalization::MinMax, -1.0);
  CHECK(with_diag.targets[0][0] == -1.0);
  CHECK(with_diag.targets[0][1] == 0.0);
  CHECK(with_diag.targets[0][2] == 1.0);
  CHECK(with_diag.targets[1][2] == doctest::Approx(6.0 / 7.0));
}

TEST_CASE("head_loss variants") {
  const auto t = build_targets(toy(), Normalization::None, -1.0);
  const int c1[] = {1};
  Tensor exact = Tensor::from_data(Shape{3}, t.targets[1]);
  CHECK(head_loss(exact, c1, t, HeadVariant::MseSum).item() == 0.0);
  CHECK(head_loss(exact, c1, t, HeadVariant::Mae).item() == 0.0);

  std::vector<double> bumped = t.targets[1];
  bumped[2] += 1.0;
  Tensor b = Tensor::from_data(Shape{3}, bumped);
  CHECK(head_loss(b, c1, t, HeadVariant::MseSum).item() == doctest::Approx(1.0));
  CHECK(head_loss(b, c1, t, HeadVariant::MseMean).item() == doctest::Approx(1.0 / 3.0));

  const auto d = load_matrix_file(kSpeciesMatrix);
  const auto t18 = build_targets(d);
  const int c5[] = {5};
  CHECK(head_loss(Tensor::zeros(Shape{18}), c5, t18, HeadVariant::Softmax).item() == doctest::Approx(std::log(18.0)));

  // batch loss is the mean of per-sample losses
  const int both[] = {1, 1};
  std::vector<double> two = t.targets[1];
  two.insert(two.end(), bumped.begin(), bumped.end());
  CHECK(head_loss(Tensor::from_data(Shape{2, 3}, two), both, t, HeadVariant::MseSum).item() == doctest::Approx(0.5));

  CHECK_THROWS_AS(head_loss(Tensor::zeros(Shape{4}), c1, t, HeadVariant::MseSum), ShapeError);
}

TEST_CASE("classify_by_distance") {
  const auto t = build_targets(toy());
  HeadConfig cfg{HeadVariant::MseSum, DistanceMetric::Cosine, reference_matrix(t)};
  for (int i = 0; i < 3; ++i) {
    const auto e = classify_by_distance(cfg.reference[i], cfg);
    CHECK(e.predicted == i);
    CHECK(std::fabs(e.distances[i]) < 1e-15);
    std::vector<double> scaled = cfg.reference[i];
    for (auto& v : scaled) v *= 2.5;
    CHECK(classify_by_distance(scaled, cfg).predicted == i);
  }

  HeadConfig euc{HeadVariant::MseSum, DistanceMetric::Euclidean, reference_matrix(t)};
  const std::vector<double> pred = {.1, .1, .85};
  const auto e = classify_by_distance(pred, euc);
  int best = 0;
  double best_d = 1e300;
  for (int r = 0; r < 3; ++r) {
    double ss = 0.0;
    for (int j = 0; j < 3; ++j) ss += std::pow(pred[j] - euc.reference[r][j], 2);
    if (std::sqrt(ss) < best_d) {
      best_d = std::sqrt(ss);
      best = r;
    }
    CHECK(e.distances[r] == doctest::Approx(std::sqrt(ss)).epsilon(1e-15));
  }
  CHECK(e.predicted == best);

  HeadConfig tie{HeadVariant::MseSum, DistanceMetric::Euclidean, {{0, 1}, {1, 0}}};
  CHECK(classify_by_distance(std::vector<double>{0.5, 0.5}, tie).predicted == 0);

  CHECK_THROWS_AS(classify_by_distance(std::vector<double>{0, 0, 0}, cfg), NumericError);
  CHECK_THROWS_AS(classify_by_distance(std::vector<double>{1, 0}, cfg), ShapeError);

  SUBCASE("cosine argmin is scale invariant") {
    std::mt19937_64 rng(5);
    const auto d18 = build_targets(load_matrix_file(kSpeciesMatrix));
    HeadConfig c18{HeadVariant::MseSum, DistanceMetric::Cosine, reference_matrix(d18)};
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> p(18);
      for (auto& v : p) v = rnd::uniform(rng, -1.0, 1.0);
      const int base = classify_by_distance(p, c18).predicted;
      for (double s : {0.01, 3.0, 1e4}) {
        std::vector<double> q = p;
        for (auto& v : q) v *= s;
        CHECK(classify_by_distance(q, c18).predicted == base);
      }
    }
  }
}

TEST_CASE("diagonal -1 targets separate the own row under cosine") {
  for (const auto& d : {toy(), load_matrix_file(kSpeciesMatrix)}) {
    const auto t = build_targets(d, Normalization::None, -1.0);
    HeadConfig cfg{HeadVariant::MseSum, DistanceMetric::Cosine, reference_matrix(t)};
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(t.targets[i][i] < 0.0);
      const auto e = classify_by_distance(t.targets[i], cfg);
      for (std::size_t r = 0; r < t.size(); ++r)
        if (r != i) CHECK(e.distances[i] < e.distances[r]);
    }
  }
}

TEST_CASE("evaluate_distance_prediction") {
  const auto t = build_targets(toy(), Normalization::None, -1.0);
  std::vector<std::vector<double>> preds;
  std::vector<int> labels;
  for (int rep = 0; rep < 4; ++rep)
    for (int c = 0; c < 3; ++c) {
      preds.push_back(t.targets[c]);
      labels.push_back(c);
    }
  const auto oracle = evaluate_distance_prediction(preds, labels, t);
  for (const auto& row : oracle.error)
    for (double v : row) CHECK(v == 0.0);

  std::vector<std::vector<double>> constant(preds.size(), std::vector<double>{0.3, -0.2, 0.5});
  const auto flat = evaluate_distance_prediction(constant, labels, t);
  for (int i = 0; i < 3; ++i) CHECK(flat.predicted[i] == flat.predicted[0]);

  std::mt19937_64 rng(6);
  for (auto& p : preds)
    for (auto& v : p) v += rnd::uniform(rng, -0.3, 0.3);
  const auto noisy = evaluate_distance_prediction(preds, labels, t);
  // second pass: accumulate per (class, component) directly
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      int n = 0;
      for (std::size_t k = 0; k < preds.size(); ++k)
        if (labels[k] == i) {
          s += preds[k][j];
          ++n;
        }
      CHECK(std::fabs(noisy.error[i][j] - std::fabs(s / n - t.targets[i][j])) < 1e-9);
    }

  std::vector<int> missing(labels.size(), 0);
  CHECK_THROWS_AS(evaluate_distance_prediction(preds, missing, t), DataError);
}

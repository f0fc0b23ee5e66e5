#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mushroom/errors.hpp"
#include "mushroom/genetics.hpp"
#include "mushroom/random.hpp"
#include "mushroom/text_io.hpp"

#include <cmath>
#include <cstring>
#include <random>

using namespace mushroom;

namespace {

const std::string kSpeciesMatrix = std::string(MUSHROOM_SOURCE_DIR) + "/data/species_distance.csv";

// Kimura two-parameter distance: the equal-frequency, equal-transition case of TN93.
double k2p(double transitions, double transversions) {
  return -0.5 * std::log(1.0 - 2.0 * transitions - transversions) - 0.25 * std::log(1.0 - 2.0 * transversions);
}

std::string mutate(std::mt19937_64& rng, std::string s, double rate) {
  for (auto& c : s)
    if (rnd::uniform01(rng) < rate) c = "ACGT"[rnd::index(rng, 4)];
  return s;
}

std::string random_sequence(std::mt19937_64& rng, std::size_t n) {
  std::string s(n, 'A');
  for (auto& c : s) c = "ACGT"[rnd::index(rng, 4)];
  return s;
}

AlignedSequenceSet toy_alignment(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::string root = random_sequence(rng, 120);
  AlignedSequenceSet s;
  for (int i = 0; i < 5; ++i) {
    std::string seq = mutate(rng, root, 0.08 * (i + 1) / 2.0);
    seq[static_cast<std::size_t>(i) * 7] = '-';
    seq[static_cast<std::size_t>(i) * 11 + 3] = 'N';
    s.records.push_back({"sp" + std::to_string(i), seq});
  }
  return s;
}

} // namespace

TEST_CASE("parse_fasta") {
  const auto s = parse_fasta(">a\nACGT\n>b\nac-t\n");
  REQUIRE(s.size() == 2);
  CHECK(s.length() == 4);
  CHECK(s.records[1].sequence == "AC-T");
  CHECK_THROWS_AS(parse_fasta(">a\nACGT\n>b\nACG"), DataError);
  CHECK_THROWS_AS(parse_fasta(">a\nACXT\n"), DataError);
  CHECK_THROWS_AS(parse_fasta(">a\nACGT\n>a\nACGT\n"), DataError);

  const auto multi = parse_fasta(">first one\nACGTN\nAC\n\n>second\nACGTNAC\n");
  CHECK(multi.length() == 7);
  const auto again = parse_fasta(emit_fasta(multi, 3));
  REQUIRE(again.size() == multi.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again.records[i].name == multi.records[i].name);
    CHECK(again.records[i].sequence == multi.records[i].sequence);
  }
}

TEST_CASE("p-distance and JC69") {
  CHECK(p_distance("ACGT", "ACGT") == 0.0);
  CHECK(p_distance("ACGT", "ACGA") == 0.25);
  CHECK(p_distance("AC-T", "ACGT") == 0.0);
  CHECK(p_distance("ACNT", "AGGA") == 2.0 / 3.0);
  CHECK_THROWS_AS(p_distance("--", "AC"), DataError);
  CHECK_THROWS_AS(p_distance("ACG", "AC"), DataError);

  CHECK(std::fabs(jc69_from_p(0.25) - 0.304099) < 1e-6);
  CHECK(jc69_distance("ACGT", "ACGA") == doctest::Approx(-0.75 * std::log(2.0 / 3.0)).epsilon(1e-15));
  CHECK(jc69_distance("ACGT", "ACGT") == 0.0);
  CHECK_THROWS_AS(jc69_from_p(0.75), NumericError);

  for (int i = 1; i < 75; ++i) {
    const double p = i / 100.0;
    CHECK(jc69_from_p(p) >= p);
  }
}

TEST_CASE("TN93") {
  CHECK(tn93_distance("ACGTACGT", "ACGTACGT") == 0.0);
  CHECK(tn93_distance("AAAA", "AAAA") == 0.0);
  CHECK(tn93_distance("AC-T", "ACGT") == 0.0);

  // equal base frequencies, two transversions in eight sites
  CHECK(tn93_distance("ACGTACGT", "CAGTACGT") == doctest::Approx(k2p(0.0, 0.25)).epsilon(1e-14));
  // hand evaluation of the three log terms for the same pair
  const double hand = -0.25 * std::log(0.75) - 0.25 * std::log(0.75) - 0.25 * std::log(0.5);
  CHECK(tn93_distance("ACGTACGT", "CAGTACGT") == doctest::Approx(hand).epsilon(1e-14));

  // balanced swaps A<->G, C<->T, A<->C, G<->T keep all four frequencies at 1/4
  const std::string a = std::string("AGCTACGT") + "ACGTACGTACGT";
  const std::string b = std::string("GATCCATG") + "ACGTACGTACGT";
  CHECK(tn93_distance(a, b) == doctest::Approx(k2p(0.2, 0.2)).epsilon(1e-14));

  CHECK_THROWS_AS(tn93_distance("ACGT", "CATG"), NumericError);

  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const std::string x = random_sequence(rng, 200);
    const std::string y = mutate(rng, x, 0.2);
    const double d = tn93_distance(x, y);
    CHECK(std::isfinite(d));
    CHECK(d >= 0.0);
    CHECK(d == tn93_distance(y, x));
  }
}

TEST_CASE("distance matrices") {
  const AlignedSequenceSet seqs = toy_alignment(3);
  for (auto model : {DistanceModel::P, DistanceModel::JC69, DistanceModel::TN93}) {
    const auto m = distance_matrix(seqs, model);
    REQUIRE(m.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(m.at(i, i) == 0.0);
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(m.at(i, j) == m.at(j, i));
        if (i != j) {
          CHECK(m.at(i, j) == pairwise_distance(seqs.records[i].sequence, seqs.records[j].sequence, model));
        }
      }
    }
    CHECK_NOTHROW(load_matrix_csv(save_matrix_csv(m)));
  }

  AlignedSequenceSet same;
  for (int i = 0; i < 4; ++i) same.records.push_back({"s" + std::to_string(i), "ACGTTGCA"});
  for (const auto& row : distance_matrix(same, DistanceModel::TN93).values)
    for (double v : row) CHECK(v == 0.0);

  SUBCASE("column permutation leaves distances unchanged") {
    std::mt19937_64 rng(9);
    std::vector<std::size_t> perm(seqs.length());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rnd::shuffle(perm, rng);
    AlignedSequenceSet shuffled = seqs;
    for (std::size_t r = 0; r < seqs.size(); ++r)
      for (std::size_t k = 0; k < perm.size(); ++k) shuffled.records[r].sequence[k] = seqs.records[r].sequence[perm[k]];
    for (auto model : {DistanceModel::P, DistanceModel::JC69, DistanceModel::TN93}) {
      const auto a = distance_matrix(seqs, model);
      const auto b = distance_matrix(shuffled, model);
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) CHECK(a.at(i, j) == doctest::Approx(b.at(i, j)).epsilon(1e-14));
    }
  }
  CHECK(parse_distance_model("tn93") == DistanceModel::TN93);
  CHECK_THROWS_AS(parse_distance_model("mcl"), ArgumentError);
}

TEST_CASE("bootstrap uncertainty") {
  const AlignedSequenceSet seqs = toy_alignment(4);
  const auto a = bootstrap_uncertainty(seqs, DistanceModel::P, 100, 42);
  const auto b = bootstrap_uncertainty(seqs, DistanceModel::P, 100, 42);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::memcmp(a.values[i].data(), b.values[i].data(), a.size() * sizeof(double)) == 0);
    for (double v : a.values[i]) CHECK(v >= 0.0);
  }
  CHECK_THROWS_AS(bootstrap_uncertainty(seqs, DistanceModel::P, 1, 42), ArgumentError);

  AlignedSequenceSet same;
  for (int i = 0; i < 3; ++i) same.records.push_back({"s" + std::to_string(i), "ACGTTGCAAC"});
  for (const auto& row : bootstrap_uncertainty(same, DistanceModel::JC69, 20, 1).values)
    for (double v : row) CHECK(v == 0.0);

  SUBCASE("exhaustive enumeration of all 27 resamples of a 3-site alignment") {
    AlignedSequenceSet toy;
    toy.records = {{"x", "AAA"}, {"y", "AAC"}};
    std::vector<std::vector<std::size_t>> all;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t k = 0; k < 3; ++k) all.push_back({i, j, k});
    // distance is (number of draws of column 2)/3 with binomial weights 8,12,6,1;
    // squared deviations from the mean 1/3 sum to 2, over 26 degrees of freedom
    const auto sd = bootstrap_uncertainty(toy, DistanceModel::P, all);
    CHECK(sd.at(0, 1) == doctest::Approx(std::sqrt(1.0 / 13.0)).epsilon(1e-14));
    CHECK(sd.at(0, 0) == 0.0);
  }
}

TEST_CASE("matrix CSV") {
  SUBCASE("species matrix") {
    const auto m = load_matrix_file(kSpeciesMatrix);
    CHECK(m.size() == 18);
    CHECK(m.between("Amanita pruitii", "Armillaria mellea") == 0.66);
    CHECK(m.between("Cantharellus cibarius", "Thelephora ganbajun") == 1.18);
    for (std::size_t i = 0; i < m.size(); ++i) {
      CHECK(m.at(i, i) == 0.0);
      for (std::size_t j = 0; j < m.size(); ++j) {
        CHECK(m.at(i, j) == m.at(j, i));
        CHECK(m.at(i, j) >= 0.0);
      }
    }
  }
  SUBCASE("round trip") {
    GeneticDistanceMatrix m{{"a", "b", "c"}, {{0, 0.1234567891234, 0.3}, {0.1234567891234, 0, 1e-7}, {0.3, 1e-7, 0}}};
    const auto back = load_matrix_csv(save_matrix_csv(m));
    CHECK(back.names == m.names);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(std::fabs(back.at(i, j) - m.at(i, j)) <= 1e-9);
  }
  SUBCASE("lower-triangle input and tolerance") {
    const auto m = load_matrix_csv("species,a,b,c\na,0,,\nb,0.5,0,\nc,0.25,0.75,0\n");
    CHECK(m.between("a", "b") == 0.5);
    CHECK(m.between("b", "c") == 0.75);
    const auto avg = load_matrix_csv("species,a,b\na,0,0.5000004\nb,0.4999996,0\n");
    CHECK(avg.between("a", "b") == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(avg.between("a", "b") == avg.between("b", "a"));
    CHECK_THROWS_AS(load_matrix_csv("species,a,b\na,0,0.5\nb,0.6,0\n"), DataError);
    CHECK_THROWS_AS(load_matrix_csv("species,a,b\na,0.2,0.5\nb,0.5,0\n"), DataError);
    CHECK_THROWS_AS(load_matrix_csv("species,a,b\na,0,x\nb,0.5,0\n"), DataError);
    CHECK_THROWS_AS(load_matrix_csv("species,a,b\nb,0,0.5\na,0.5,0\n"), DataError);
    CHECK_THROWS_AS(load_matrix_csv("name,a,b\na,0,0.5\nb,0.5,0\n"), DataError);
  }
}

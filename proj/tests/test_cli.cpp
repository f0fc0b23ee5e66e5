#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mushroom/checkpoint.hpp"
#include "mushroom/cli.hpp"
#include "mushroom/genetics.hpp"
#include "mushroom/image.hpp"
#include "mushroom/text_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <set>
#include <sstream>

using namespace mushroom;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string kMatrix = std::string(MUSHROOM_SOURCE_DIR) + "/data/species_distance.csv";

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mushroom_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& line : split(slurp(p), '\n'))
    if (!line.empty()) rows.push_back(split(line, ','));
  return rows;
}

std::set<std::string> files_under(const fs::path& root) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) out.insert(fs::relative(e.path(), root).generic_string());
  return out;
}

/// Shared tiny synthetic dataset.
fs::path dataset(const fs::path& base) {
  const fs::path data = base / "data";
  const Result r = run({"synth-data", "--out", data.string(), "--classes", "3", "--per_class", "10", "--resolution", "32",
                        "--seed", "2"});
  REQUIRE(r.code == 0);
  return data;
}

std::vector<std::string> train_args(const fs::path& data, const fs::path& out) {
  return {"train", "--data", data.string(), "--out", out.string(), "--resolution", "32", "--alpha", "0.25",
          "--epochs", "2", "--lr", "1e-3", "--seed", "4"};
}

} // namespace

TEST_CASE("help lists defaults") {
  const Result r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("--lr FLOAT [0.0001]") != std::string::npos);
  CHECK(r.out.find("--batch_size INT [12]") != std::string::npos);
  CHECK(r.out.find("--epochs INT [30]") != std::string::npos);
  CHECK(r.out.find("synth-data") != std::string::npos);
}

TEST_CASE("usage errors exit 1 with one machine-readable line") {
  const fs::path base = scratch("usage");
  for (const auto& args : std::vector<std::vector<std::string>>{
           {},
           {"train", "--epochs", "abc", "--out", (base / "a").string()},
           {"train", "--no-such-flag", "1"},
           {"gendist", "--out", (base / "b").string()},
           {"gendist", "targets", "--out", (base / "c").string()},
           {"gendist", "targets", "--matrix", kMatrix, "--normalize", "sideways", "--out", (base / "d").string()},
           {"train", "--augment", "maybe", "--out", (base / "e").string()}}) {
    const Result r = run(args);
    CHECK(r.code == 1);
    CHECK(r.err.starts_with("error: kind=usage code=1 message="));
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  }
}

TEST_CASE("data and numeric errors") {
  const fs::path base = scratch("errors");
  Result r = run({"train", "--data", (base / "missing").string(), "--out", (base / "o1").string()});
  CHECK(r.code == 2);
  CHECK(r.err.starts_with("error: kind=data code=2"));

  write_text_file((base / "bad.csv").string(), "species,a,b\na,0,1\nb,2,0\n");
  r = run({"gendist", "targets", "--matrix", (base / "bad.csv").string(), "--out", (base / "o2").string()});
  CHECK(r.code == 2);

  // a pair past the TN93 saturation point
  write_text_file((base / "far.fa").string(), ">a\nACGT\n>b\nCATG\n");
  r = run({"gendist", "compute", "--fasta", (base / "far.fa").string(), "--out", (base / "o3").string()});
  CHECK(r.code == 3);
  CHECK(r.err.starts_with("error: kind=numeric code=3"));
}

TEST_CASE("config file, flag precedence and resolved config") {
  const fs::path base = scratch("config");
  write_text_file((base / "run.json").string(),
                  json{{"epochs", 7}, {"lr", 0.003}, {"drop", {"Boletus edulis"}}, {"normalize", "minmax"}}.dump());
  const fs::path out = base / "out";
  const Result r = run({"gendist", "targets", "--config", (base / "run.json").string(), "--matrix", kMatrix, "--epochs",
                        "2", "--out", out.string()});
  REQUIRE(r.code == 0);
  const json resolved = json::parse(slurp(out / "config.json"));
  CHECK(resolved["epochs"] == 2);
  CHECK(resolved["lr"] == 0.003);
  CHECK(resolved["batch_size"] == 12);
  CHECK(resolved["command"] == "gendist targets");
  CHECK(resolved["drop"] == json{"Boletus edulis"});
  CHECK(csv_rows(out / "targets.csv").size() == 18);

  write_text_file((base / "unknown.json").string(), R"({"epoch": 3})");
  CHECK(run({"train", "--config", (base / "unknown.json").string(), "--out", (base / "x").string()}).code == 1);
  write_text_file((base / "typed.json").string(), R"({"epochs": "3"})");
  CHECK(run({"train", "--config", (base / "typed.json").string(), "--out", (base / "y").string()}).code == 1);
}

TEST_CASE("gendist targets sets the diagonal") {
  const fs::path out = scratch("targets");
  const Result r = run({"gendist", "targets", "--matrix", kMatrix, "--diag", "-1", "--normalize", "minmax", "--drop",
                        "Cantharellus cibarius", "--out", out.string()});
  REQUIRE(r.code == 0);
  const auto rows = csv_rows(out / "targets.csv");
  REQUIRE(rows.size() == 18);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i][i] == "-1");
    CHECK(rows[i][0] != "Cantharellus cibarius");
  }
  const auto ref = csv_rows(out / "reference.csv");
  for (std::size_t i = 1; i < ref.size(); ++i) CHECK(ref[i][i] == "0");
  // min-max: off-diagonal targets span exactly [0, 1]
  double lo = 1e9, hi = -1e9;
  for (std::size_t i = 1; i < rows.size(); ++i)
    for (std::size_t j = 1; j < rows.size(); ++j)
      if (i != j) {
        const double v = parse_double(rows[i][j], "target");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  CHECK(lo == 0.0);
  CHECK(hi == 1.0);
}

TEST_CASE("gendist compute matches the library") {
  const fs::path base = scratch("compute");
  const std::string fasta = ">s1\nACGTACGTACGTACGTAC\n>s2\nACGTACGAACGTACGTAC\n>s3\nACGAACGTACCTACGTTC\n";
  write_text_file((base / "s.fa").string(), fasta);
  const Result r = run({"gendist", "compute", "--fasta", (base / "s.fa").string(), "--model", "jc69", "--bootstrap", "10",
                        "--out", (base / "out").string()});
  REQUIRE(r.code == 0);
  const GeneticDistanceMatrix m = load_matrix_file((base / "out" / "distance.csv").string());
  const GeneticDistanceMatrix expect = distance_matrix(parse_fasta(fasta), DistanceModel::JC69);
  CHECK(m.names == expect.names);
  CHECK(m.values == expect.values);
  CHECK(fs::exists(base / "out" / "distance_sd.csv"));
}

TEST_CASE("train, eval, classify and gradcam on synthetic data") {
  const fs::path base = scratch("pipeline");
  const fs::path data = dataset(base);
  const auto before = files_under(base);

  REQUIRE(run(train_args(data, base / "train")).code == 0);
  for (const char* f : {"best.ckpt", "last.ckpt", "epochs.csv", "config.json"}) CHECK(fs::exists(base / "train" / f));
  CHECK(csv_rows(base / "train" / "epochs.csv").size() == 3);

  REQUIRE(run({"eval", "--data", data.string(), "--checkpoint", (base / "train" / "best.ckpt").string(), "--seed", "4",
               "--out", (base / "eval").string()})
              .code == 0);
  const auto metrics = csv_rows(base / "eval" / "metrics.csv");
  CHECK(metrics.size() == 5); // header, three classes, totals
  CHECK(metrics[0][0] == "ID");
  CHECK(metrics[4][0] == "-");
  for (const char* f : {"confusion.csv", "predictions.csv", "auc.csv", "roc_0.csv", "roc_2.csv"})
    CHECK(fs::exists(base / "eval" / f));

  const Result cls = run({"classify", "--data", data.string(), "--checkpoint", (base / "train" / "best.ckpt").string(),
                          "--split", "all", "--out", (base / "classify").string()});
  REQUIRE(cls.code == 0);
  const auto rows = csv_rows(base / "classify" / "classify.csv");
  CHECK(rows.size() == 31);
  CHECK(rows[0].size() == 6);

  const fs::path image = data / "class_1" / "img_0003.ppm";
  REQUIRE(run({"gradcam", "--checkpoint", (base / "train" / "best.ckpt").string(), "--image", image.string(), "--class",
               "class_1", "--out", (base / "cam").string()})
              .code == 0);
  const Image heat = read_image((base / "cam" / "heatmap.pgm").string());
  CHECK(heat.channels == 1);
  CHECK(heat.height == 32);
  CHECK(heat.width == 32);
  CHECK(read_image((base / "cam" / "overlay.ppm").string()).channels == 3);
  CHECK(run({"gradcam", "--checkpoint", (base / "train" / "best.ckpt").string(), "--image", image.string(), "--class",
             "7", "--out", (base / "cam2").string()})
            .code == 1);

  // everything new lives under the four output directories
  for (const auto& f : files_under(base)) {
    if (before.count(f)) continue;
    const std::string top = f.substr(0, f.find('/'));
    CHECK_MESSAGE((top == "train" || top == "eval" || top == "classify" || top == "cam" || top == "cam2"), f);
  }
}

TEST_CASE("runs reproduce from seed and from the resolved config") {
  const fs::path base = scratch("determinism");
  const fs::path data = dataset(base);
  REQUIRE(run(train_args(data, base / "a")).code == 0);
  REQUIRE(run(train_args(data, base / "b")).code == 0);
  CHECK(slurp(base / "a" / "epochs.csv") == slurp(base / "b" / "epochs.csv"));
  CHECK(slurp(base / "a" / "best.ckpt") == slurp(base / "b" / "best.ckpt"));

  fs::copy_file(base / "a" / "config.json", base / "a.json");
  const std::string first = slurp(base / "a" / "epochs.csv");
  fs::remove_all(base / "a");
  REQUIRE(run({"train", "--config", (base / "a.json").string()}).code == 0);
  CHECK(slurp(base / "a" / "epochs.csv") == first);
}

TEST_CASE("stages and the genetic-distance head") {
  const fs::path base = scratch("stages");
  const std::vector<std::string> species = {"Amanita pruitii", "Morchella pulchella", "Ophiocordyceps sinensis"};
  REQUIRE(run({"synth-data", "--out", (base / "data").string(), "--classes", "3", "--per_class", "10", "--resolution",
               "32", "--class_names", species[0], species[1], species[2]})
              .code == 0);
  CHECK(fs::exists(base / "data" / "Morchella pulchella" / "img_0000.ppm"));

  std::vector<std::string> drop;
  for (const auto& name : load_matrix_file(kMatrix).names)
    if (std::find(species.begin(), species.end(), name) == species.end()) drop.push_back(name);
  write_text_file((base / "head.json").string(),
                  json{{"head", "gendist"}, {"matrix", kMatrix}, {"drop", drop}, {"resolution", 32}, {"alpha", 0.25},
                       {"epochs", 1}, {"data", (base / "data").string()}}
                      .dump());
  const std::string cfg = (base / "head.json").string();

  Result r = run({"train", "--config", cfg, "--stage", "1", "--out", (base / "s1").string()});
  REQUIRE(r.code == 0);
  auto meta = json::parse(load_checkpoint(base / "s1" / "best.ckpt").metadata_json)["extra"];
  CHECK(meta["source"] == "synthetic-pretrain");

  r = run({"train", "--config", cfg, "--stage", "1", "--checkpoint", (base / "s1" / "best.ckpt").string(), "--out",
           (base / "s1b").string()});
  REQUIRE(r.code == 0);
  meta = json::parse(load_checkpoint(base / "s1b" / "best.ckpt").metadata_json)["extra"];
  CHECK(meta["source"] == "external-checkpoint");
  CHECK(csv_rows(base / "s1b" / "epochs.csv").size() == 1);

  r = run({"train", "--config", cfg, "--stage", "3", "--checkpoint", (base / "s1" / "best.ckpt").string(), "--out",
           (base / "s3").string()});
  REQUIRE(r.code == 0);
  meta = json::parse(load_checkpoint(base / "s3" / "best.ckpt").metadata_json)["extra"];
  CHECK(meta["head"]["type"] == "gendist");
  CHECK(meta["head"]["targets"][1][1] == -1.0);
  CHECK(meta["head"]["reference"][1][1] == 0.0);

  r = run({"classify", "--checkpoint", (base / "s3" / "best.ckpt").string(), "--image",
           (base / "data" / species[2] / "img_0004.ppm").string(), "--out", (base / "cls").string()});
  REQUIRE(r.code == 0);
  const auto rows = csv_rows(base / "cls" / "classify.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].size() == 9); // path, true, predicted, 3 embedding values, 3 distances
  CHECK(rows[0][6] == "d_Amanita pruitii");
  CHECK(std::find(species.begin(), species.end(), rows[1][2]) != species.end());

  r = run({"train", "--config", cfg, "--stage", "3", "--strategy", "none", "--out", (base / "none").string()});
  CHECK(r.code == 1);
  r = run({"train", "--config", cfg, "--class_names", "x", "--drop", "Amanita pruitii", "--out", (base / "mismatch").string()});
  CHECK(r.code == 2);
}

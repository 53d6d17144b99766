#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "eurnet/graphbuild.hpp"
#include "json.hpp"

using namespace eurnet;
namespace fs = std::filesystem;

namespace {

const fs::path kData = EURNET_TEST_DATA_DIR;
const fs::path kToyKg = EURNET_TOY_KG_DIR;

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("eurnet_cli_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("cli: usage errors exit 2") {
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"no-such-command"}).code == cli::kUsage);
  CHECK(run({"build-graph", "--domain", "video", "--input", "x", "--out", "y"}).code == cli::kUsage);
  CHECK(run({"--threads", "0", "bench-flops"}).code == cli::kUsage);
  CHECK(run({"--help"}).code == cli::kOk);
}

TEST_CASE("cli build-graph: protein fixture") {
  TempDir tmp;
  auto r = run({"build-graph", "--domain", "protein", "--input", (kData / "protein_3res.txt").string(), "--out",
                tmp / "g"});
  REQUIRE(r.code == 0);
  CHECK(line_count(tmp / "g/edges.tsv") == 18);
  auto reg = nlohmann::json::parse(slurp(tmp / "g/registry.json"));
  CHECK(reg["num_residues"] == 3);
  CHECK(reg["virtual_node"] == 3);
  CHECK(reg["num_nodes"] == 4);
  CHECK(reg["relations"].size() == 9);
}

TEST_CASE("cli build-graph: 4x4 image grid without medium edges") {
  TempDir tmp;
  PatchGrid<float> grid{4, 4, Tensor<float>::zeros({16, 2})};
  {
    std::ofstream f(tmp / "grid.bin", std::ios::binary);
    write_patch_grid(f, grid);
  }
  auto r = run({"build-graph", "--domain", "image", "--input", tmp / "grid.bin", "--k", "0", "--out", tmp / "g"});
  REQUIRE(r.code == 0);
  CHECK(line_count(tmp / "g/edges.tsv") == 48);
  auto reg = nlohmann::json::parse(slurp(tmp / "g/registry.json"));
  CHECK(reg["long_edges"]["global_edges"] == 16);
  CHECK(reg["long_edges"]["context_edges"] == 16);
  CHECK(reg["long_edges"]["total_nodes"] == 33);
  CHECK(reg["relations"].size() == 6);

  std::mt19937_64 rng(1);
  std::normal_distribution<float> normal;
  PatchGrid<float> feat{4, 4, Tensor<float>::zeros({16, 3})};
  for (auto& v : feat.features.mutable_data()) v = normal(rng);
  {
    std::ofstream f(tmp / "feat.bin", std::ios::binary);
    write_patch_grid(f, feat);
  }
  REQUIRE(run({"build-graph", "--domain", "image", "--input", tmp / "feat.bin", "--k", "3", "--out", tmp / "m"}).code ==
          0);
  CHECK(line_count(tmp / "m/edges.tsv") == 48 + 16 * 3);
}

TEST_CASE("cli build-graph: kg inputs") {
  TempDir tmp;
  std::ofstream(tmp / "empty.txt").close();
  auto empty = run({"build-graph", "--domain", "kg", "--input", tmp / "empty.txt", "--out", tmp / "g"});
  CHECK(empty.code == cli::kDataError);
  CHECK(run({"build-graph", "--domain", "kg", "--input", tmp / "missing.txt", "--out", tmp / "g"}).code ==
        cli::kDataError);

  {
    std::ofstream bad(tmp / "bad.txt");
    bad << "a\tr\tb\nc\td\n";
  }
  auto bad = run({"build-graph", "--domain", "kg", "--input", tmp / "bad.txt", "--out", tmp / "g"});
  CHECK(bad.code == cli::kDataError);
  CHECK(bad.err.find("line 2") != std::string::npos);

  for (const char* name : {"fb15k_style_train.txt", "wn18rr_style_train.txt"}) {
    CAPTURE(name);
    auto ok = run({"build-graph", "--domain", "kg", "--input", (kData / name).string(), "--out", tmp / name});
    CHECK(ok.code == 0);
  }
  CHECK(line_count(tmp / "fb15k_style_train.txt/edges.tsv") == 12);

  REQUIRE(run({"build-graph", "--domain", "kg", "--input", kToyKg.string(), "--out", tmp / "toy"}).code == 0);
  auto reg = nlohmann::json::parse(slurp(tmp / "toy/registry.json"));
  CHECK(reg["num_nodes"] == 100);
  CHECK(reg["relations"].size() == 12);
}

TEST_CASE("cli bench-flops: 24 rows, GRMP marginal constant") {
  TempDir tmp;
  REQUIRE(run({"bench-flops", "--out", tmp / "sweep.csv"}).code == 0);
  std::ifstream in(tmp / "sweep.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "K,rgconv_flops,grmp_flops");
  std::vector<std::array<std::uint64_t, 3>> rows;
  for (std::string line; std::getline(in, line);) {
    std::array<std::uint64_t, 3> row{};
    char comma;
    std::istringstream(line) >> row[0] >> comma >> row[1] >> comma >> row[2];
    rows.push_back(row);
  }
  REQUIRE(rows.size() == 24);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i][0] == i + 1);
    CHECK(rows[i][2] - rows[i - 1][2] == rows[1][2] - rows[0][2]);
  }
  CHECK(run({"bench-flops", "--k-min", "0"}).code == cli::kUsage);
}

TEST_CASE("cli verify: report shape, exit codes and the fault hook") {
  auto ok = run({"verify", "--suite", "oracles"});
  CHECK(ok.code == 0);
  auto report = nlohmann::json::parse(ok.out);
  CHECK(report["passed"] == true);
  CHECK(report["suites"][0]["suite"] == "oracles");

  auto broken = run({"verify", "--suite", "flops-exact", "--fault-inject"});
  CHECK(broken.code == cli::kVerifyFailed);
  auto br = nlohmann::json::parse(broken.out);
  CHECK(br["passed"] == false);
  for (const auto& c : br["suites"][0]["checks"]) {
    const std::string name = c["name"];
    if (name.starts_with("rgconv/")) CHECK(c["passed"] == true);
  }

  auto e3 = nlohmann::json::parse(run({"verify", "--suite", "e3"}).out);
  CHECK(e3["suites"][0]["checks"][0]["detail"].get<std::string>().starts_with("100 transforms"));
}

TEST_CASE("cli train-kg and eval: schema, determinism, config precedence") {
  TempDir tmp;
  {
    std::ofstream cfg(tmp / "run.toml");
    cfg << "seed = 4\n[train-kg]\nepochs = 3\nlayers = 1\nchannels = 4\nnegatives = 2\nbatch-size = 128\n";
  }
  const std::vector<std::string> base{"--config", tmp / "run.toml", "train-kg", "--data", kToyKg.string()};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };
  REQUIRE(with({"--epochs", "1", "--out", tmp / "a"}).code == 0);
  REQUIRE(with({"--epochs", "1", "--out", tmp / "b"}).code == 0);
  CHECK(slurp(tmp / "a/metrics.csv") == slurp(tmp / "b/metrics.csv"));
  CHECK(slurp(tmp / "a/model.ckpt") == slurp(tmp / "b/model.ckpt"));

  const auto resolved = slurp(tmp / "a/config.toml");
  CHECK(resolved.find("epochs=1") != std::string::npos);     // flag beats config
  CHECK(resolved.find("channels=4") != std::string::npos);   // config beats default
  CHECK(resolved.find("lr=0.005") != std::string::npos);     // default
  CHECK(resolved.find("seed=4") != std::string::npos);

  const auto metrics = slurp(tmp / "a/metrics.csv");
  CHECK(metrics.starts_with("epoch,split,metric,value\n"));
  for (const char* m : {",test,mr,", ",test,mrr,", ",test,hits@1,", ",test,hits@3,", ",test,hits@10,"})
    CHECK(metrics.find(m) != std::string::npos);

  // The echoed config reproduces the run.
  REQUIRE(run({"--config", tmp / "a/config.toml", "train-kg", "--out", tmp / "c"}).code == 0);
  CHECK(slurp(tmp / "c/metrics.csv") == metrics);

  // Zero epochs: only the untrained baseline.
  REQUIRE(with({"--epochs", "0", "--out", tmp / "z"}).code == 0);
  const auto zero = slurp(tmp / "z/metrics.csv");
  CHECK(zero.find(",train,loss,") == std::string::npos);
  CHECK(zero.find("0,valid,mrr,") != std::string::npos);

  auto ev = run({"eval", "--data", kToyKg.string(), "--checkpoint", tmp / "a/model.ckpt"});
  REQUIRE(ev.code == 0);
  // Same numbers as the test rows written at the end of training.
  std::istringstream lines(ev.out);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) CHECK(metrics.find(line) != std::string::npos);

  CHECK(run({"eval", "--data", kToyKg.string(), "--checkpoint", tmp / "nothing.ckpt"}).code == cli::kDataError);
  CHECK(run({"train-kg", "--out", tmp / "x"}).code == cli::kUsage);
}

TEST_CASE("cli gen-toy-kg is deterministic") {
  TempDir tmp;
  REQUIRE(run({"gen-toy-kg", "--seed", "0", "--out", tmp / "kg"}).code == 0);
  for (const char* name : {"train.txt", "valid.txt", "test.txt"})
    CHECK(slurp(tmp.path / "kg" / name) == slurp(kToyKg / name));
}

TEST_CASE("cli fmax") {
  TempDir tmp;
  {
    std::ofstream s(tmp / "scores.csv");
    s << "protein_id,task_id,value\np1,t1,0.9\np1,t2,0.2\np2,t1,0.4\np2,t2,0.7\n";
    std::ofstream l(tmp / "labels.csv");
    l << "protein_id,task_id,value\np1,t1,1\np2,t2,1\n";
  }
  auto r = run({"fmax", "--scores", tmp / "scores.csv", "--labels", tmp / "labels.csv"});
  REQUIRE(r.code == 0);
  auto j = nlohmann::json::parse(r.out);
  CHECK(j["fmax"].get<double>() == doctest::Approx(1.0));
  CHECK(j["proteins"] == 2);
  CHECK(run({"fmax", "--scores", tmp / "none.csv", "--labels", tmp / "labels.csv"}).code == cli::kDataError);
}

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "ttlora/cli.hpp"
#include "ttlora/ttlf.hpp"

using namespace ttlora;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ttlora");
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "ttlora_cli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("count prints exact accounting") {
  const auto r = cli({"count", "--m", "768", "--n", "2304", "--shape", "12,8,8,3,8,8,12", "--rank", "5"});
  CHECK(r.code == 0);
  CHECK(r.out.find("1769472") != std::string::npos);
  CHECK(r.out.find("995") != std::string::npos);
  CHECK(r.out.find("1,135") != std::string::npos);

  const auto j = cli({"count", "--m", "64", "--n", "64", "--shape", "8,8,8,8", "--rank", "4", "--wrapped", "2", "--json"});
  CHECK(j.code == 0);
  CHECK(j.out.find("\"adapter_params\": 640") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"count", "--m", "8"}).code == 1);  // missing required flags
  CHECK(cli({"count", "--m", "8", "--n", "8", "--shape", "3,3", "--rank", "2"}).code == 1);
  CHECK(cli({"reconstruct", "--input", "/nonexistent/a.ttlf", "--output", "/tmp/x.bin"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"gradcheck", "--preset", "small"}).code == 0);
}

TEST_CASE("init, reconstruct, decompose and merge round trip") {
  const auto d = dir("roundtrip");
  const auto a = (d / "a.ttlf").string(), dense = (d / "dw.bin").string(), b = (d / "b.ttlf").string(),
             dense2 = (d / "dw2.bin").string();
  REQUIRE(cli({"init", "--m", "8", "--n", "6", "--shape", "2,4,3,2", "--rank", "3", "--output", a, "--init",
               "gaussian", "--sigma", "1", "--alpha", "2", "--dtype", "f64"})
              .code == 0);
  REQUIRE(cli({"reconstruct", "--input", a, "--output", dense, "--dtype", "f64"}).code == 0);
  const auto dec = cli({"decompose", "--input", dense, "--output", b, "--shape", "2,4,3,2", "--max-rank", "3",
                        "--dtype", "f64"});
  REQUIRE(dec.code == 0);
  CHECK(dec.out.find("ranks: [1,2,3,2,1]") != std::string::npos);
  REQUIRE(cli({"reconstruct", "--input", b, "--output", dense2, "--dtype", "f64"}).code == 0);
  CHECK(oracle::rel_err(read_dense(dense2), read_dense(dense)) < 1e-10);

  // merge = base + alpha * dW
  Matrix base = Matrix::Constant(8, 6, 0.5);
  write_dense(d / "base.bin", base, DType::f64);
  const auto merged = (d / "merged.bin").string();
  REQUIRE(cli({"merge", "--adapter", a, "--base", (d / "base.bin").string(), "--output", merged, "--dtype", "f64"})
              .code == 0);
  CHECK(oracle::rel_err(read_dense(merged), base + 2.0 * read_dense(dense)) < 1e-14);

  // shape mismatch against the base is a contract violation
  write_dense(d / "small.bin", Matrix::Zero(4, 4), DType::f64);
  CHECK(cli({"merge", "--adapter", a, "--base", (d / "small.bin").string(), "--output", merged}).code == 1);
}

TEST_CASE("train writes reproducible artifacts") {
  const auto d = dir("train");
  put(d / "cfg.json", R"({"task": {"kind": "teacher-student", "m": 16, "n": 16, "teacher_shape": [4, 4, 4, 4],
  "true_rank": 2, "samples": 256, "seed": 1},
  "adapter": {"shape": [4, 4, 4, 4], "rank": 2, "seed": 3},
  "train": {"learning_rate": 0.01, "max_epochs": 10}})");
  const auto r1 = cli({"train", "--config", (d / "cfg.json").string(), "--out", (d / "a").string()});
  const auto r2 = cli({"train", "--config", (d / "cfg.json").string(), "--out", (d / "b").string()});
  REQUIRE(r1.code == 0);
  REQUIRE(r2.code == 0);
  for (const auto* f : {"history.csv", "summary.json", "adapter.ttlf", "base.bin"}) {
    CHECK(fs::exists(d / "a" / f));
    CHECK(slurp(d / "a" / f) == slurp(d / "b" / f));
  }
  put(d / "bad.json", R"({"task": {"kind": "teacher-student"}, "adapter": {}, "train": {"learning_rat": 1}})");
  CHECK(cli({"train", "--config", (d / "bad.json").string(), "--out", (d / "c").string()}).code == 1);
}

TEST_CASE("sweep writes byte-identical CSVs for any worker count") {
  const auto d = dir("sweep");
  put(d / "spec.json", R"({"task": {"kind": "teacher-student", "m": 8, "n": 8, "teacher_shape": [2, 4, 4, 2],
  "true_rank": 2, "samples": 128, "seed": 2},
  "adapter": {"seed": 5},
  "train": {"max_epochs": 4},
  "shapes": [[2, 4, 4, 2], [8, 8], [3, 3]], "ranks": [1, 2], "alphas": [1, 2], "learning_rates": [0.01],
  "schedule": [1, 2, 4]})");
  std::string base;
  for (const char* w : {"1", "2", "4"}) {
    const auto out = d / (std::string("w") + w);
    const auto r = cli({"sweep", "--spec", (d / "spec.json").string(), "--out", out.string(), "--workers", w});
    REQUIRE(r.code == 0);
    const auto all = slurp(out / "sweep_results.csv") + slurp(out / "pareto.csv") + slurp(out / "tradeoff.csv");
    if (base.empty()) base = all;
    CHECK(all == base);
  }
  // 2 valid shapes x 2 ranks x 2 alphas, plus the header
  CHECK(std::count(base.begin(), base.begin() + static_cast<long>(slurp(d / "w1" / "sweep_results.csv").size()), '\n') == 9);
}

TEST_CASE("sweep where every trial diverges exits with 2") {
  const auto d = dir("diverge");
  put(d / "spec.json", R"({"task": {"kind": "teacher-student", "m": 8, "n": 8, "teacher_shape": [2, 4, 4, 2],
  "true_rank": 2, "samples": 64, "seed": 2},
  "adapter": {"init": "gaussian", "sigma": 1.0},
  "train": {"max_epochs": 3, "optimizer": "sgd"},
  "shapes": [[2, 4, 4, 2]], "ranks": [2], "alphas": [1], "learning_rates": [1e8],
  "schedule": [3]})");
  const auto r = cli({"sweep", "--spec", (d / "spec.json").string(), "--out", (d / "o").string()});
  CHECK(r.code == 2);
  CHECK(slurp(d / "o" / "sweep_results.csv").find("failed") != std::string::npos);
}

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "support.hpp"

using rstd::testing::read_text;
using rstd::testing::TempDir;

namespace {

struct RunResult {
  int status;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args, const TempDir& dir) {
  const auto out = dir.str("stdout.txt"), err = dir.str("stderr.txt");
  const std::string cmd = std::string(RSTD_CLI_PATH) + " " + args + " >" + out + " 2>" + err;
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, read_text(out), read_text(err)};
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST_CASE("invalid config exits nonzero with a field diagnostic") {
  TempDir dir;
  write(dir.str("bad.json"), R"({"model": {"compression": {"kind": "TR", "ranks": [1, 1]}}})");
  const auto r = run_cli("sweep --config " + dir.str("bad.json") + " --ranks 1 --dry-run", dir);
  CHECK(r.status == 2);
  CHECK(r.err.find("model.compression.ranks") != std::string::npos);

  write(dir.str("syntax.json"), "{\n\"model\": {\n\"channels\": }\n}");
  const auto s = run_cli("train --config " + dir.str("syntax.json"), dir);
  CHECK(s.status == 2);
  CHECK(s.err.find("line 3") != std::string::npos);
}

TEST_CASE("train without a dataset path names dataset.path") {
  TempDir dir;
  write(dir.str("c.json"), "{}");
  const auto r = run_cli("train --config " + dir.str("c.json"), dir);
  CHECK(r.status == 2);
  CHECK(r.err.find("dataset.path") != std::string::npos);
}

TEST_CASE("sweep without ranks is a usage error") {
  TempDir dir;
  write(dir.str("c.json"), R"({"model": {"compression": {"kind": "TR", "ranks": 1}}})");
  CHECK(run_cli("sweep --config " + dir.str("c.json") + " --dry-run", dir).status != 0);
}

TEST_CASE("unknown precision is rejected") {
  TempDir dir;
  write(dir.str("c.json"), "{}");
  CHECK(run_cli("train --config " + dir.str("c.json") + " --precision f16", dir).status != 0);
}

TEST_CASE("train, rerun and report through the command line") {
  TempDir dir;
  rstd::testing::write_synthetic_cifar(dir.path() / "data", 10, 20, 6);
  write(dir.str("c.json"), R"({
    "dataset": {"path": ")" + dir.str("data") + R"(", "train_per_class": 2, "test_per_class": 1},
    "model": {"channels": 4, "compression": {"kind": "TR", "ranks": 1, "shuffled": true}},
    "training": {"epochs": 1, "lr_milestones": [], "batch_size": 8, "repetitions": 1}
  })");
  const auto a = run_cli("train --quiet --config " + dir.str("c.json") + " --out " + dir.str("a") + " --seed 4", dir);
  REQUIRE(a.status == 0);
  CHECK(a.out.find("mean_accuracy=") != std::string::npos);
  CHECK(a.out.find("r_c=") != std::string::npos);
  const auto b = run_cli("train --quiet --config " + dir.str("c.json") + " --out " + dir.str("b") + " --seed 4", dir);
  REQUIRE(b.status == 0);
  CHECK(read_text(dir.str("a/train.csv")) == read_text(dir.str("b/train.csv")));
  CHECK(std::filesystem::exists(dir.path() / "a" / "rep0.ckpt"));
  CHECK(std::filesystem::exists(dir.path() / "a" / "rep0_conv7.rspm"));

  const auto rep = run_cli("report " + dir.str("a/train.csv"), dir);
  CHECK(rep.status == 0);
  CHECK(rep.out.find("repetition 0") != std::string::npos);

  const auto noisy = run_cli("make-noisy --config " + dir.str("c.json") + " --dev 0 --out " + dir.str("n"), dir);
  CHECK(noisy.status == 0);
  CHECK(read_text(dir.str("n/test_batch.bin")) == read_text(dir.str("data/test_batch.bin")));
}

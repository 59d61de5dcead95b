#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "graphbert/synthetic.hpp"
#include "test_util.hpp"

using namespace graphbert;
using graphbert::testutil::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

// Runs the installed CLI binary with the working directory pinned to `cwd`
// so relative defaults (./data, ./cache, runs/) stay inside the sandbox.
CliResult run_cli(const fs::path& cwd, const std::string& args) {
  fs::path log = cwd / "cli-output.log";
  std::string cmd = "cd '" + cwd.string() + "' && '" + GRAPHBERT_CLI_PATH + "' " + args + " > '" +
                    log.string() + "' 2>&1";
  int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  r.output = ss.str();
  return r;
}

// A small synthetic dataset in planetoid layout under <dir>/data/custom/.
void install_dataset(const fs::path& dir, std::uint64_t seed = 21) {
  SbmConfig cfg;
  cfg.classes = 2;
  cfg.nodes_per_class = 14;
  cfg.feature_dim = 12;
  cfg.p_in = 0.3;
  cfg.p_out = 0.02;
  cfg.seed = seed;
  Graph g = make_sbm(cfg);
  fs::path ddir = dir / "data" / "custom";
  fs::create_directories(ddir);
  write_planetoid(g, (ddir / "custom.content").string(), (ddir / "custom.cites").string());
}

// Options sized for a graph with 28 nodes and 2 classes.
const std::string kSmall =
    "--dataset custom --k 3 --hidden-size 8 --intermediate-size 8 --epochs 8 "
    "--train-per-class 6 --val-size 5 --test-size 8 --lr 0.01";

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli: missing dataset is a config error naming the expected paths") {
  TempDir tmp;
  CliResult r = run_cli(tmp.path, "preprocess --dataset custom");
  CHECK(r.exit_code == 7);
  CHECK(r.output.find("dataset files not found") != std::string::npos);
  CHECK(r.output.find("custom.content") != std::string::npos);
  CHECK(r.output.find("\"error\":\"config\"") != std::string::npos);
}

TEST_CASE("cli: training without a cache points at the preprocess subcommand") {
  TempDir tmp;
  install_dataset(tmp.path);
  CliResult r = run_cli(tmp.path, "finetune " + kSmall);
  CHECK(r.exit_code == 7);
  CHECK(r.output.find("graphbert preprocess") != std::string::npos);
}

TEST_CASE("cli: full pipeline on a synthetic dataset") {
  TempDir tmp;
  install_dataset(tmp.path);

  CliResult pre = run_cli(tmp.path, "preprocess --dataset custom --k 3");
  CHECK(pre.exit_code == 0);
  CHECK(pre.output.find("built cache") != std::string::npos);
  CHECK(fs::exists(tmp.path / "cache" / "custom-k3-a0.15" / "manifest.json"));

  // a second invocation is an idempotent cache hit
  CliResult pre2 = run_cli(tmp.path, "preprocess --dataset custom --k 3");
  CHECK(pre2.exit_code == 0);
  CHECK(pre2.output.find("cache hit") != std::string::npos);

  CliResult ft = run_cli(tmp.path, "finetune " + kSmall + " --out runs/a");
  CHECK(ft.exit_code == 0);
  REQUIRE(fs::exists(tmp.path / "runs/a/summary.json"));
  CHECK(fs::exists(tmp.path / "runs/a/metrics.csv"));
  CHECK(fs::exists(tmp.path / "runs/a/checkpoint.bin"));
  CHECK(fs::exists(tmp.path / "runs/a/config.json"));

  // identical seeds give bit-identical metric logs
  CliResult ft2 = run_cli(tmp.path, "finetune " + kSmall + " --out runs/b");
  CHECK(ft2.exit_code == 0);
  std::string ma = slurp(tmp.path / "runs/a/metrics.csv");
  REQUIRE(!ma.empty());
  CHECK(ma == slurp(tmp.path / "runs/b/metrics.csv"));

  CliResult pt = run_cli(tmp.path,
                         "pretrain " + kSmall +
                             " --reconstruct-epochs 6 --recover-epochs 6 --out runs/pt");
  CHECK(pt.exit_code == 0);
  REQUIRE(fs::exists(tmp.path / "runs/pt/checkpoint.bin"));

  CliResult ft3 = run_cli(
      tmp.path, "finetune " + kSmall + " --from-checkpoint runs/pt/checkpoint.bin --out runs/c");
  CHECK(ft3.exit_code == 0);

  CliResult cl = run_cli(tmp.path, "cluster " + kSmall + " --raw-features --out runs/cl");
  CHECK(cl.exit_code == 0);
  std::string ccsv = slurp(tmp.path / "runs/cl/metrics.csv");
  CHECK(ccsv.find("rand,") != std::string::npos);
  CHECK(ccsv.find("normalized_mi,") != std::string::npos);

  CliResult cl2 = run_cli(
      tmp.path, "cluster " + kSmall + " --checkpoint runs/pt/checkpoint.bin --out runs/cl2");
  CHECK(cl2.exit_code == 0);

  CliResult rep = run_cli(tmp.path, "report runs/a runs/pt runs/cl");
  CHECK(rep.exit_code == 0);
  CHECK(rep.output.find("test accuracy") != std::string::npos);
  CHECK(rep.output.find("recon") != std::string::npos);
  CHECK(rep.output.find("rand") != std::string::npos);
}

TEST_CASE("cli: missing checkpoint for fine-tuning names the pretrain subcommand") {
  TempDir tmp;
  install_dataset(tmp.path);
  REQUIRE(run_cli(tmp.path, "preprocess --dataset custom --k 3").exit_code == 0);
  CliResult r = run_cli(tmp.path, "finetune " + kSmall + " --from-checkpoint nope.bin");
  CHECK(r.exit_code == 7);
  CHECK(r.output.find("graphbert pretrain") != std::string::npos);
}

TEST_CASE("cli: malformed dataset files map to the parse exit code") {
  TempDir tmp;
  fs::path ddir = tmp.path / "data" / "custom";
  fs::create_directories(ddir);
  std::ofstream(ddir / "custom.content") << "a\t1\tx\nb\n";
  std::ofstream(ddir / "custom.cites") << "";
  CliResult r = run_cli(tmp.path, "preprocess --dataset custom --k 2");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("\"error\":\"parse\"") != std::string::npos);
}

TEST_CASE("cli: config file supplies defaults, flags override it") {
  TempDir tmp;
  install_dataset(tmp.path);
  std::ofstream(tmp.path / "cfg.json")
      << R"({"dataset":"custom","k":3,"hidden_size":8,"intermediate_size":8,)"
      << R"("epochs":5,"train_per_class":6,"val_size":5,"test_size":8,"lr":0.01})";
  REQUIRE(run_cli(tmp.path, "preprocess --config cfg.json").exit_code == 0);
  CliResult ft = run_cli(tmp.path, "finetune --config cfg.json --epochs 3 --out runs/cfg");
  CHECK(ft.exit_code == 0);
  std::ifstream is(tmp.path / "runs/cfg/config.json");
  std::stringstream ss;
  ss << is.rdbuf();
  // the snapshot reflects the merged configuration
  CHECK(ss.str().find("\"epochs\": 3") != std::string::npos);
  CHECK(ss.str().find("\"dataset\": \"custom\"") != std::string::npos);
}

TEST_CASE("cli: sweeps write one sub-run per point plus a summary table") {
  TempDir tmp;
  install_dataset(tmp.path);
  REQUIRE(run_cli(tmp.path, "preprocess --dataset custom --k 3").exit_code == 0);
  CliResult sw = run_cli(
      tmp.path,
      "sweep-residual --dataset custom --k 3 --hidden-size 8 --intermediate-size 8 --epochs 3 "
      "--train-per-class 6 --val-size 5 --test-size 8 --lr 0.01 --jobs 1 --out runs/sr");
  CHECK(sw.exit_code == 0);
  std::string csv = slurp(tmp.path / "runs/sr/summary.csv");
  CHECK(csv.rfind("point,test_accuracy,total_seconds\n", 0) == 0);
  for (const char* mode : {"none", "raw", "graph_raw"}) {
    CHECK(csv.find(std::string(mode) + ",") != std::string::npos);
    CHECK(fs::exists(tmp.path / "runs/sr" / mode / "summary.json"));
  }
  CliResult rep = run_cli(tmp.path, "report runs/sr");
  CHECK(rep.exit_code == 0);
  CHECK(rep.output.find("graph_raw") != std::string::npos);
}

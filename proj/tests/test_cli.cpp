#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string cli = REACTA_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// header line carries provenance (paths, config hash); the payload is the model
std::string payload_after_header(const fs::path& p) {
  const std::string all = slurp(p);
  const std::size_t nl = all.find('\n');
  return nl == std::string::npos ? all : all.substr(nl + 1);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& sub) const { return (path / sub).string(); }
};

}  // namespace

TEST_CASE("pipeline commands succeed and rerunning with one seed is bitwise identical") {
  TempDir dir("reacta_cli_det");
  const std::string base = " --users 10 --tracks 36 --sessions 9 --k 4 --audio-dim 8 --seed 11";
  REQUIRE(run("gen-data --out-dir " + (dir / "data") + base) == 0);
  REQUIRE(run("build --events " + (dir / "data/events.tsv") + " --audio " + (dir / "data/audio.bin") +
              " --out-dir " + (dir / "art") + " --l 4 --n-val 2 --n-test 2 --svd-dim 8 --k 4 --seed 11") == 0);
  REQUIRE(run("train --artifacts " + (dir / "art") + " --out-dir " + (dir / "run1") +
              " --model reacta-u --epochs 3 --k-rec 4 --blocks 1 --heads 1 --seed 7") == 0);
  REQUIRE(run("evaluate --artifacts " + (dir / "art") + " --model reacta-u=" + (dir / "run1/checkpoint.bin") +
              " actr-repeat --split test --k 4 --out " + (dir / "rep1/report.json")) == 0);

  // full second pass with the same seeds
  REQUIRE(run("gen-data --out-dir " + (dir / "data2") + base) == 0);
  REQUIRE(run("build --events " + (dir / "data2/events.tsv") + " --audio " + (dir / "data2/audio.bin") +
              " --out-dir " + (dir / "art2") + " --l 4 --n-val 2 --n-test 2 --svd-dim 8 --k 4 --seed 11") == 0);
  REQUIRE(run("train --artifacts " + (dir / "art2") + " --out-dir " + (dir / "run2") +
              " --model reacta-u --epochs 3 --k-rec 4 --blocks 1 --heads 1 --seed 7") == 0);
  REQUIRE(run("evaluate --artifacts " + (dir / "art2") + " --model reacta-u=" + (dir / "run2/checkpoint.bin") +
              " actr-repeat --split test --k 4 --out " + (dir / "rep2/report.json")) == 0);

  CHECK(slurp(dir / "data/events.tsv") == slurp(dir / "data2/events.tsv"));
  CHECK(payload_after_header(dir / "run1/checkpoint.bin") == payload_after_header(dir / "run2/checkpoint.bin"));
  CHECK(slurp(dir / "rep1/report.json") == slurp(dir / "rep2/report.json"));
  CHECK(!slurp(dir / "rep1/report.json").empty());
}

TEST_CASE("commands write resolved config snapshots with a hash") {
  TempDir dir("reacta_cli_snap");
  REQUIRE(run("gen-data --out-dir " + (dir / "data") + " --users 4 --tracks 12 --sessions 4 --k 3 --seed 2") == 0);
  const std::string snap = slurp(dir / "data/gen-data.config.json");
  CHECK(snap.find("config_hash") != std::string::npos);
  CHECK(snap.find("\"seed\": 2") != std::string::npos);
}

TEST_CASE("missing artifacts produce a nonzero exit and name the path") {
  TempDir dir("reacta_cli_missing");
  const std::string cmd = cli + " train --artifacts " + (dir / "nowhere") + " --out-dir " + (dir / "out") +
                          " 2> " + (dir / "err.txt");
  CHECK(std::system(cmd.c_str()) != 0);
  const std::string err = slurp(dir / "err.txt");
  CHECK(err.find("manifest") != std::string::npos);
  CHECK(err.find("nowhere") != std::string::npos);
}

TEST_CASE("malformed events abort the build with a line number") {
  TempDir dir("reacta_cli_badline");
  {
    std::ofstream ev(dir / "events.tsv");
    ev << "u1\ta\t0\n";
    ev << "broken line without tabs\n";
  }
  {
    std::ofstream au(dir / "audio.bin");
    au << "{}\n";
  }
  const std::string cmd = cli + " build --events " + (dir / "events.tsv") + " --audio " + (dir / "audio.bin") +
                          " --out-dir " + (dir / "art") + " 2> " + (dir / "err.txt");
  CHECK(std::system(cmd.c_str()) != 0);
  CHECK(slurp(dir / "err.txt").find("line 2") != std::string::npos);
}

TEST_CASE("config file fields are overridden by explicit flags") {
  TempDir dir("reacta_cli_config");
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << R"({"users": 6, "tracks": 14, "sessions": 4, "k": 3, "seed": 9})";
  }
  REQUIRE(run("--config " + (dir / "cfg.json") + " gen-data --out-dir " + (dir / "a")) == 0);
  REQUIRE(run("--config " + (dir / "cfg.json") + " gen-data --out-dir " + (dir / "b") + " --users 3") == 0);
  const std::string snap_a = slurp(dir / "a/gen-data.config.json");
  const std::string snap_b = slurp(dir / "b/gen-data.config.json");
  CHECK(snap_a.find("\"users\": 6") != std::string::npos);
  CHECK(snap_b.find("\"users\": 3") != std::string::npos);
}

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

// one scratch directory per process so parallel ctest runs do not collide
const fs::path kRoot = fs::temp_directory_path() / ("odn_cli_test_" + std::to_string(::getpid()));

struct Result {
  int code;
  std::string out;
};

Result odn(const std::string& args) {
  const fs::path log = kRoot / "stdout.txt";
  const std::string cmd = std::string("\"") + ODN_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t data_rows(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++n;
  return n;
}

// small world so each session finishes quickly
const std::string kData = " --classes 8 --per-class 24 --dim 8 --known 4";
const std::string kSmall = kData + " --epochs 15";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { fs::create_directories(kRoot); }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
  static std::string p(const std::string& rel) { return (kRoot / rel).string(); }
};

}  // namespace

TEST_F(Cli, SynthIsDeterministic) {
  auto a = odn("--out " + p("a.csv") + " synth");
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(odn("--out " + p("b.csv") + " synth").code, 0);
  EXPECT_EQ(data_rows(p("a.csv")), 1200u + 1);  // header
  EXPECT_EQ(slurp(p("a.csv")), slurp(p("b.csv")));
  ASSERT_EQ(odn("--seed 3 --out " + p("c.csv") + " synth").code, 0);
  EXPECT_NE(slurp(p("a.csv")), slurp(p("c.csv")));
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(odn("synth").code, 2);
  EXPECT_EQ(odn("").code, 2);
  EXPECT_EQ(odn("run --no-such-flag").code, 2);
  EXPECT_EQ(odn("run --epsilon 3 --out " + p("bad")).code, 2);
  EXPECT_EQ(odn("run --set epsilon").code, 2);
  std::ofstream(p("bad.conf")) << "epsilon = 0.5\nmystery = 1\n";
  auto r = odn("--config " + p("bad.conf") + " run");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("bad.conf:2"), std::string::npos) << r.out;
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  auto r = odn("run --data " + p("missing.csv") + " --out " + p("m"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("data"), std::string::npos) << r.out;
  EXPECT_EQ(odn("eval --closed --model " + p("missing.ckpt") + " --test " + p("missing.csv")).code, 1);
}

TEST_F(Cli, RunWritesArtifactsReproducibly) {
  ASSERT_EQ(odn("--quiet --out " + p("r1") + " run" + kSmall).code, 0);
  ASSERT_EQ(odn("--quiet --out " + p("r2") + " run" + kSmall).code, 0);
  for (const char* f : {"session.json", "metrics.csv", "iterations.csv", "model.ckpt", "thresholds.json"}) {
    ASSERT_TRUE(fs::exists(kRoot / "r1" / f)) << f;
  }
  // the out directory is echoed, so compare everything else
  auto strip = [](std::string s, const std::string& dir) {
    for (auto pos = s.find(dir); pos != std::string::npos; pos = s.find(dir)) s.erase(pos, dir.size());
    return s;
  };
  EXPECT_EQ(strip(slurp(kRoot / "r1" / "session.json"), p("r1")), strip(slurp(kRoot / "r2" / "session.json"), p("r2")));
  EXPECT_EQ(slurp(kRoot / "r1" / "model.ckpt"), slurp(kRoot / "r2" / "model.ckpt"));
  const auto metrics = slurp(kRoot / "r1" / "metrics.csv");
  EXPECT_NE(metrics.find("# epsilon=0.5"), std::string::npos);
  EXPECT_NE(metrics.find("scope,category,correct,total,accuracy"), std::string::npos);
  EXPECT_EQ(data_rows(kRoot / "r1" / "iterations.csv"), 1u + 1 + 4);  // header, initial, 4 unknowns
}

TEST_F(Cli, ZeroUnknownsReportsInitialOnly) {
  auto r = odn("--out " + p("z") + " run --n-unknown 0" + kSmall);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("no_unknowns"), std::string::npos) << r.out;
  EXPECT_EQ(data_rows(kRoot / "z" / "iterations.csv"), 2u);
}

TEST_F(Cli, SwitchesAreEchoed) {
  ASSERT_EQ(odn("--quiet --format json --out " + p("sw") + " run --no-allometry --no-emphasis --n-unknown 1" + kSmall).code, 0);
  const auto text = slurp(kRoot / "sw" / "metrics.json");
  EXPECT_NE(text.find("\"allometry\": false"), std::string::npos);
  EXPECT_NE(text.find("\"emphasis\": false"), std::string::npos);
  EXPECT_NE(text.find("\"rows\""), std::string::npos);
}

TEST_F(Cli, StagewisePipeline) {
  ASSERT_EQ(odn("--quiet --out " + p("sp") + " split" + kData).code, 0);
  EXPECT_EQ(data_rows(kRoot / "sp" / "train.csv"), 1u + 4 * 12);
  ASSERT_EQ(odn("--quiet --out " + p("sp/model.ckpt") + " train --epochs 15 --train " + p("sp/train.csv")).code, 0);
  ASSERT_EQ(odn("--quiet --out " + p("sp/thr.json") + " calibrate --model " + p("sp/model.ckpt") + " --train " +
                p("sp/train.csv"))
                .code,
            0);
  auto closed = odn("eval --closed --model " + p("sp/model.ckpt") + " --test " + p("sp/known_test.csv"));
  ASSERT_EQ(closed.code, 0) << closed.out;
  EXPECT_NE(closed.out.find("overall,,48,48,1"), std::string::npos) << closed.out;
  auto open = odn("eval --model " + p("sp/model.ckpt") + " --thresholds " + p("sp/thr.json") + " --test " +
                  p("sp/known_test.csv") + " --unknown-test " + p("sp/unknown_pool.csv"));
  ASSERT_EQ(open.code, 0) << open.out;
  EXPECT_NE(open.out.find("unknown,,0,96,0"), std::string::npos) << open.out;
  EXPECT_EQ(odn("eval --model " + p("sp/model.ckpt") + " --test " + p("sp/known_test.csv")).code, 2);
}

TEST_F(Cli, Experiments) {
  auto s = odn("--quiet --out " + p("sweep") + " sweep --unknowns 1,2" + kSmall);
  ASSERT_EQ(s.code, 0) << s.out;
  EXPECT_EQ(data_rows(kRoot / "sweep" / "sweep.csv"), 3u);
  EXPECT_EQ(odn("--out " + p("sweep") + " sweep --unknowns 1,x" + kSmall).code, 2);
  auto c = odn("--out " + p("cmp") + " compare --seeds 2 --n-unknown 2" + kSmall);
  ASSERT_EQ(c.code, 0) << c.out;
  EXPECT_NE(c.out.find("stochastic: final accuracy"), std::string::npos);
  EXPECT_EQ(data_rows(kRoot / "cmp" / "compare.csv"), 1u + 2 * 2);
  auto a = odn("--quiet --out " + p("abl") + " ablate --seeds 1 --n-unknown 1" + kSmall);
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(data_rows(kRoot / "abl" / "ablation.csv"), 1u + 4);
}

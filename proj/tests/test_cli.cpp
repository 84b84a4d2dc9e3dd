#include "support.hpp"

#include "wayfinder/hashing.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>

using wayfinder::read_file;
using wayfinder::write_file_atomic;
using wayfinder::test::fixture;
using wayfinder::test::TempDir;

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(WAYFINDER_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (const std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::string& s) { return "'" + s + "'"; }

}  // namespace

TEST(Cli, SimulateOracle) {
  const auto r = cli("simulate --map " + q(fixture("maps/corridor5.map")) + " --translator oracle");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("S=1 L=6 R=0"), std::string::npos) << r.out;
}

TEST(Cli, SimulateWritesTrajectory) {
  TempDir dir;
  const auto r = cli("simulate --map " + q(fixture("maps/corridor5.map")) +
                     " --translator oracle --out " + q(dir.str("out")));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto at = r.out.find("trajectory: ");
  ASSERT_NE(at, std::string::npos) << r.out;
  const std::string path = r.out.substr(at + 12, r.out.find('\n', at) - at - 12);
  EXPECT_TRUE(fs::exists(path)) << path;
  const auto replay = cli("replay " + q(path));
  EXPECT_EQ(replay.code, 0) << replay.out;
  EXPECT_NE(replay.out.find('@'), std::string::npos);
}

TEST(Cli, BadFlagIsUsageError) {
  EXPECT_EQ(cli("simulate --no-such-flag").code, 1);
  EXPECT_EQ(cli("frobnicate").code, 1);
}

TEST(Cli, BadDataIsDataError) {
  TempDir dir;
  write_file_atomic(dir.str("broken.map"), "###\n#S#\n###\n");
  EXPECT_EQ(cli("simulate --map " + q(dir.str("broken.map")) + " --translator oracle").code, 2);
  write_file_atomic(dir.str("c.jsonl"), "{\"id\": 1}\n");
  EXPECT_EQ(cli("score --maps " + q(fixture("maps")) + " --corpus " + q(dir.str("c.jsonl")) + " --out " +
                q(dir.str("out")))
                .code,
            2);
}

TEST(Cli, MissingPathIsUsageError) {
  TempDir dir;
  EXPECT_EQ(cli("simulate --map " + q(dir.str("missing.map")) + " --translator oracle").code, 1);
}

TEST(Cli, DeadEndpointIsRemoteError) {
  TempDir dir;
  write_file_atomic(dir.str("c.json"),
                    R"({"translator": {"retry_attempts": 1, "retry_backoff_ms": 1}})");
  const auto r = cli("score --config " + q(dir.str("c.json")) + " --maps " + q(fixture("maps")) +
                     " --corpus " + q(fixture("corpus/three.jsonl")) + " --translator remote" +
                     " --endpoint http://127.0.0.1:1/v1/chat/completions --model m -n 1 --out " +
                     q(dir.str("out")));
  EXPECT_EQ(r.code, 3) << r.out;
}

TEST(Cli, RankGivesATriple) {
  TempDir dir;
  const auto r = cli("rank --maps " + q(fixture("maps")) + " --corpus " + q(fixture("corpus/three.jsonl")) +
                     " -n 2 --out " + q(dir.str("out")));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto bins = read_file(dir.str("out/bins.csv"));
  for (const char* label : {"open-room,Good,", "open-room,Medium,", "open-room,Bad,"}) {
    EXPECT_NE(bins.find(label), std::string::npos) << bins;
  }
  EXPECT_TRUE(fs::exists(dir.str("out/speaker.csv")));
}

TEST(Cli, ScoreIsIndependentOfParallelism) {
  TempDir dir;
  const std::string common = "score --maps " + q(fixture("maps")) + " --corpus " +
                             q(fixture("corpus/synthetic.jsonl")) + " -n 3 --seed 5";
  ASSERT_EQ(cli(common + " --parallelism 1 --out " + q(dir.str("a"))).code, 0);
  ASSERT_EQ(cli(common + " --parallelism 8 --out " + q(dir.str("b"))).code, 0);
  EXPECT_EQ(read_file(dir.str("a/scores.csv")), read_file(dir.str("b/scores.csv")));
}

TEST(Cli, AnalyzeWritesCsv) {
  TempDir dir;
  const auto r = cli("analyze --maps " + q(fixture("maps")) + " --corpus " +
                     q(fixture("corpus/synthetic.jsonl")) + " -n 2 --out " + q(dir.str("out")));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir.str("out/analysis.csv")));
}

TEST(Cli, ValidateMaps) {
  const auto ok = cli("validate-maps " + q(fixture("maps")));
  EXPECT_EQ(ok.code, 0) << ok.out;
  TempDir dir;
  fs::copy_file(fixture("maps/corridor5.map"), dir.str("corridor5.map"));
  write_file_atomic(dir.str("bad.map"), "#####\n#S#G#\n#####\n");
  const auto bad = cli("validate-maps " + q(dir.str()));
  EXPECT_EQ(bad.code, 2) << bad.out;
  EXPECT_NE(bad.out.find("bad"), std::string::npos);
}

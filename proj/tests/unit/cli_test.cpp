#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "commands.hpp"

using namespace gpufirst;

namespace {

struct run_result {
  int status = -1;
  std::string out;
};

// Runs the installed CLI binary and captures stdout.
run_result run_cli(const std::string& args) {
  run_result r;
  std::string cmd = std::string(GPUFIRST_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

}  // namespace

TEST(Demo, DefaultInputMatchesHost) {
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_demo("3.5 7 9", out, err), cli::ok) << err.str();
  auto text = out.str();
  for (auto line : {"r=3\n", "s.f=3.5\n", "i=7\n", "p[1]=9\n", "oracle: match\n"})
    EXPECT_NE(text.find(line), std::string::npos) << line << " in\n" << text;
}

TEST(Demo, MalformedInputLeavesWriteObjectsZero) {
  auto v = cli::run_demo_program("abc");
  EXPECT_EQ(v.r, 0);
  EXPECT_EQ(v.i, 0);
  EXPECT_EQ(v.f, 0.0f);
  EXPECT_EQ(v.p1, 0);
  auto want = cli::demo_oracle("abc");
  EXPECT_EQ(v.r, want.r);
}

TEST(Demo, AgreesWithHostOnAssortedInputs) {
  for (std::string in : {"", "  ", "2", "-1.5e2 -3 12", "9 8 7 6", "0.1x", "7\n8\n9"}) {
    auto got = cli::run_demo_program(in);
    auto want = cli::demo_oracle(in);
    EXPECT_EQ(got.r, want.r) << in;
    EXPECT_EQ(got.f, want.f) << in;
    EXPECT_EQ(got.i, want.i) << in;
    EXPECT_EQ(got.p1, want.p1) << in;
    EXPECT_EQ(got.b, 0) << in;
  }
}

TEST(Demo, BinaryUsesBuiltInDefault) {
  auto r = run_cli("demo");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("input \"3.5 7 9\""), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("oracle: match"), std::string::npos);
}

TEST(Lower, CorpusFileGolden) {
  auto r = run_cli("lower " GPUFIRST_SOURCE_DIR "/corpus/fscanf_callsite.ir");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out,
            "site 0 pad=__fscanf_ip_fp_ip callee=1 args=[Value, StaticRef(fmt,0,8,Read), StaticRef(s,8,12,ReadWrite), "
            "Dispatch{(i,0,4,Write),(s,4,12,ReadWrite)}, DynamicLookup(ReadWrite)]\n");
}

TEST(Lower, BadInputExitsWithUsage) {
  auto path = testing::TempDir() + "bad.ir";
  std::ofstream(path) << "func f() {\n  %a = alloca\n}\n";
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_lower(path, out, err), cli::usage);
  EXPECT_NE(err.str().find("2:"), std::string::npos) << err.str();
  EXPECT_EQ(cli::cmd_lower(path + ".missing", out, err), cli::usage);
  EXPECT_EQ(run_cli("lower " + path).status, cli::usage);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_cli("").status, cli::usage);
  EXPECT_EQ(run_cli("bench-alloc --allocator balanced:0,1").status, cli::usage);
  EXPECT_EQ(run_cli("bench-alloc --reps 2 --teams 1 --threads 1").status, cli::usage);
  EXPECT_EQ(run_cli("bench-rpc --calls 0").status, cli::usage);
  EXPECT_EQ(run_cli("--help").status, 0);
}

TEST(BenchResult, JsonRoundTrip) {
  bench_result r;
  r.name = "alloc";
  r.params = {{"teams", 4}, {"allocator", "generic"}};
  r.repetitions = 3;
  r.durations_ns = {3, 1, 2};
  r.summary = summarize(r.durations_ns);
  EXPECT_EQ(r.summary, (bench_summary{1, 2, 2}));
  EXPECT_EQ(bench_result_from_json(nlohmann::json::parse(to_json(r).dump())), r);
  r.failed = true;
  r.error = "out_of_memory: chunk (0,0)";
  EXPECT_EQ(bench_result_from_json(nlohmann::json::parse(to_json(r).dump())), r);
  EXPECT_EQ(summarize({4, 1, 3, 2}).median, 2.5);
}

TEST(BenchAlloc, JsonLinesSchema) {
  auto r = run_cli("bench-alloc --allocator generic --allocator balanced:4,2 --teams 1,3 --threads 2 --reps 3 --json");
  ASSERT_EQ(r.status, 0);
  std::istringstream lines(r.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);
    for (auto key : {"benchmark", "params", "repetitions", "durations_ns", "summary", "failed"})
      ASSERT_TRUE(j.contains(key)) << key << " in " << line;
    auto back = bench_result_from_json(j);
    EXPECT_FALSE(back.failed) << back.error;
    EXPECT_EQ(back.durations_ns.size(), 3u);
    for (auto d : back.durations_ns) EXPECT_GT(d, 0);
    EXPECT_LE(back.summary.min, back.summary.median);
    EXPECT_EQ(j["params"]["threads"], 2);
    ++n;
  }
  EXPECT_EQ(n, 4);
}

TEST(BenchAlloc, TableOutput) {
  cli::alloc_grid g;
  g.allocators = {"balanced:32,16"};
  g.teams = {2};
  g.threads = {8};
  g.reps = 3;
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_bench_alloc(g, out, err), cli::ok);
  EXPECT_NE(out.str().find("median_us"), std::string::npos);
  EXPECT_NE(out.str().find("balanced:32,16,4"), std::string::npos) << out.str();
}

TEST(BenchAlloc, OutOfMemoryIsAFailedPoint) {
  alloc_bench_config c;
  c.allocator = parse_allocator_config("balanced:1,1");
  c.heap_size = 4096;
  c.teams = 2;
  c.threads = 64;
  c.reps = 3;
  auto r = bench_alloc_point(c);
  EXPECT_TRUE(r.failed);
  EXPECT_NE(r.error.find("out-of-memory"), std::string::npos) << r.error;
}

TEST(BenchAlloc, BalancedLargestPointFits) {
  alloc_bench_config c;
  c.allocator = parse_allocator_config("balanced:32,16");
  c.teams = 256;
  c.threads = 32;
  c.reps = 3;
  auto r = bench_alloc_point(c);
  EXPECT_FALSE(r.failed) << r.error;
}

TEST(BenchRpc, JsonLinesPerCall) {
  auto r = run_cli("bench-rpc --calls 5 --json");
  ASSERT_EQ(r.status, 0);
  std::istringstream lines(r.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    auto t = call_timing_from_json(nlohmann::json::parse(line));
    EXPECT_EQ(t.callee, 1u);
    ++n;
  }
  EXPECT_EQ(n, 5);
}

TEST(BenchRpc, TableSumsToOne) {
  auto r = run_cli("bench-rpc --calls 50");
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("device sum 1.0000, host sum 1.0000"), std::string::npos) << r.out;
}

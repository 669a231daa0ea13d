// SPDX-License-Identifier: Apache-2.0
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace sherry;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string &args) {
  const std::string cmd = std::string("'") + SHERRY_CLI_PATH + "' " + args + " 2>/dev/null";
  RunResult r;
  FILE *pipe = ::popen(cmd.c_str(), "r");
  if (!pipe)
    return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0)
    r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<double> parse_lines(const std::string &text) {
  std::vector<double> v;
  std::istringstream in(text);
  for (double x; in >> x;)
    v.push_back(x);
  return v;
}

std::string quoted(const fs::path &p) { return "'" + p.string() + "'"; }

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sherry_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path path(const std::string &name) const { return dir_ / name; }

  void write_text(const fs::path &p, const std::string &text) const {
    std::ofstream(p) << text;
  }

  fs::path dir_;
};

double mean_final_trap(const std::vector<TraceRecord> &records) {
  const auto &last = records.back();
  double s = 0;
  for (const auto &h : last.hist_per_layer)
    s += trap_score(h).score;
  return s / static_cast<double>(last.hist_per_layer.size());
}

} // namespace

TEST_F(Cli, QuantizeInferMatchesInMemory) {
  ASSERT_EQ(run("gen-weights " + quoted(path("w.wf32")) + " --shape 64x16 --seed 3").exit_code, 0);
  std::mt19937_64 rng(5);
  const auto x = sherry::testing::random_vector(64, rng);
  std::ostringstream xs;
  xs.precision(9);
  for (float v : x)
    xs << v << ' ';
  write_text(path("x.txt"), xs.str());

  const auto wf = read_weight_file(path("w.wf32"));
  for (const char *pack_name : {"sherry125", "dense2bit", "tl2ref"}) {
    for (const char *gran : {"tensor", "channel", "group:16"}) {
      const auto shry = path("m.shry");
      const auto q = run("quantize " + quoted(path("w.wf32")) + " " + quoted(shry) +
                         " --scheme sparse34 --pack " + pack_name + " --granularity " + gran);
      ASSERT_EQ(q.exit_code, 0) << pack_name << ' ' << gran;
      EXPECT_NE(q.out.find("tensor0," + std::string(pack_name)), std::string::npos);

      const auto g = parse_granularity(gran, 128);
      const auto t = sparse34_quantize(wf.tensors[0].values, g);
      const auto ref = ref_matvec<double>(t, x, reference_segment_width(parse_pack_scheme(pack_name)));
      const auto lut = parse_lines(run("infer " + quoted(shry) + " --input " + quoted(path("x.txt")) +
                                       " --precision double")
                                       .out);
      EXPECT_EQ(lut, ref) << pack_name << ' ' << gran;
      const auto lut_f = parse_lines(run("infer " + quoted(shry) + " --input " +
                                         quoted(path("x.txt")) + " --engine lut --threads 3")
                                         .out);
      ASSERT_EQ(lut_f.size(), ref.size());
      for (std::size_t j = 0; j < ref.size(); ++j)
        EXPECT_LE(std::abs(lut_f[j] - ref[j]), 1e-5 * std::abs(ref[j]) + 1e-30);
    }
  }
}

TEST_F(Cli, ExitCodes) {
  const auto wf = quoted(path("w.wf32"));
  ASSERT_EQ(run("gen-weights " + wf + " --shape 16x4").exit_code, 0);
  EXPECT_EQ(run("quantize " + quoted(path("missing.wf32")) + " " + quoted(path("o.shry"))).exit_code, 3);
  EXPECT_EQ(run("quantize " + wf + " " + quoted(path("o.shry")) + " --granularity group:6").exit_code, 2);
  EXPECT_EQ(run("quantize " + wf + " " + quoted(path("o.shry")) + " --scheme nope").exit_code, 2);
  EXPECT_EQ(run("quantize " + wf + " " + quoted(path("o.shry")) + " --scheme absmean --pack sherry125")
                .exit_code,
            2);
  EXPECT_EQ(run("quantize --bogus").exit_code, 2);
  EXPECT_EQ(run("").exit_code, 2);

  write_text(path("junk.shry"), "SHRYgarbage");
  write_text(path("x.txt"), "1 2 3");
  EXPECT_EQ(run("infer " + quoted(path("junk.shry")) + " --input " + quoted(path("x.txt"))).exit_code, 1);
  ASSERT_EQ(run("quantize " + wf + " " + quoted(path("o.shry")) + " --granularity channel").exit_code, 0);
  EXPECT_EQ(run("infer " + quoted(path("o.shry")) + " --input " + quoted(path("x.txt"))).exit_code, 2);
  write_text(path("bad.txt"), "1 two 3");
  EXPECT_EQ(run("infer " + quoted(path("o.shry")) + " --input " + quoted(path("bad.txt"))).exit_code, 1);
  EXPECT_EQ(run("infer " + quoted(path("o.shry")) + " --input " + quoted(path("none.txt"))).exit_code, 3);

  // flip the scheme byte of the first tensor
  auto bytes = read_file_bytes(path("o.shry"));
  bytes[4 + 4 + 4 + 4 + 7 + 4 + 4 + 4] = 5;
  write_file_atomic(path("o.shry"), bytes);
  EXPECT_EQ(run("infer " + quoted(path("o.shry")) + " --input " + quoted(path("x.txt"))).exit_code, 1);
}

TEST_F(Cli, BenchWritesCsv) {
  const auto r = run("bench --schemes sherry125,tl2ref --sizes 64 --repeats 3 --granularity channel");
  ASSERT_EQ(r.exit_code, 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kBenchCsvHeader);
  int rows = 0;
  while (std::getline(in, line))
    rows += !line.empty();
  EXPECT_EQ(rows, 2);
  EXPECT_EQ(run("bench --sizes 10").exit_code, 2);
}

TEST_F(Cli, TrainAnalyzeExport) {
  const auto trace = path("run.jsonl");
  const auto r = run("train-toy --steps 100 --cadence 25 --trace " + quoted(trace) + " --export " +
                     quoted(path("student.shry")));
  ASSERT_EQ(r.exit_code, 0);
  const auto records = read_trace(trace);
  ASSERT_EQ(records.size(), 5u);

  const auto er = run("analyze --trace " + quoted(trace) + " --emit er-csv");
  ASSERT_EQ(er.exit_code, 0);
  EXPECT_EQ(std::count(er.out.begin(), er.out.end(), '\n'), 1 + 5);
  EXPECT_EQ(er.out.substr(0, er.out.find('\n')), "step,lambda,loss,eval_loss,er_layer0,er_layer1");

  const auto hist = run("analyze --trace " + quoted(trace) + " --emit hist-csv");
  EXPECT_EQ(std::count(hist.out.begin(), hist.out.end(), '\n'), 1 + 5 * 2 * 64);
  const auto trap = run("analyze --trace " + quoted(trace) + " --emit trap-summary --out " +
                        quoted(path("trap.csv")));
  EXPECT_EQ(trap.exit_code, 0);
  EXPECT_TRUE(fs::exists(path("trap.csv")));

  const auto model = read_packed_model(path("student.shry"));
  ASSERT_EQ(model.tensors.size(), 2u);
  EXPECT_EQ(model.tensors[0].tensor.rows, 64u);
  EXPECT_EQ(model.tensors[0].tensor.cols, 256u);

  write_text(path("empty.jsonl"), "");
  EXPECT_EQ(run("analyze --trace " + quoted(path("empty.jsonl"))).exit_code, 1);
  EXPECT_EQ(run("analyze --trace " + quoted(path("none.jsonl"))).exit_code, 3);
  EXPECT_EQ(run("analyze --trace " + quoted(trace) + " --emit pie").exit_code, 2);
  EXPECT_EQ(run("train-toy --steps 10 --arenas maybe --trace " + quoted(trace)).exit_code, 2);
}

TEST_F(Cli, BothArmsWriteSeparateTraces) {
  ASSERT_EQ(run("train-toy --steps 20 --cadence 10 --arenas both --trace " + quoted(path("r.jsonl")))
                .exit_code,
            0);
  EXPECT_TRUE(fs::exists(path("r.arenas.jsonl")));
  EXPECT_TRUE(fs::exists(path("r.naive.jsonl")));
  const auto naive = read_trace(path("r.naive.jsonl"));
  for (const auto &rec : naive)
    EXPECT_EQ(rec.lambda, 0.0);
}

// Synthetic traces: the naive arm is drawn from two modes at -1/+1, the
// arenas arm from three modes at -1/0/+1 (see fixtures/make_synthetic_traces.py).
TEST(Fixture, NaiveArmIsMoreTrapped) {
  const fs::path dir = SHERRY_FIXTURE_DIR;
  const auto naive = read_trace(dir / "synthetic.naive.jsonl");
  const auto arenas = read_trace(dir / "synthetic.arenas.jsonl");
  ASSERT_FALSE(naive.empty());
  ASSERT_FALSE(arenas.empty());
  EXPECT_GT(mean_final_trap(naive), mean_final_trap(arenas));
}

TEST(Fixture, TrainedTracesAnalyze) {
  const fs::path dir = SHERRY_FIXTURE_DIR;
  for (const char *arm : {"toy.naive.jsonl", "toy.arenas.jsonl"}) {
    const auto records = read_trace(dir / arm);
    ASSERT_EQ(records.size(), 41u) << arm;
    EXPECT_EQ(records.back().step, 2000u);
    EXPECT_EQ(records.back().lambda, 0.0);
    const auto r = run("analyze --trace " + quoted(dir / arm) + " --emit er-csv");
    ASSERT_EQ(r.exit_code, 0);
    EXPECT_EQ(static_cast<std::size_t>(std::count(r.out.begin(), r.out.end(), '\n')), 1 + records.size());
  }
}

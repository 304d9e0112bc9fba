#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "d2dfl/checks.hpp"
#include "d2dfl/sweep.hpp"

using namespace d2dfl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("d2dfl_sweep_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(MetricsCsv, HeaderAndEmptyDiagnostics) {
  RoundRecord a{0, 2.5, 0.25, 0.125, std::nullopt, std::nullopt};
  RoundRecord b{1, 2.0, 0.5, 0.0, 0.75, -1.5};
  EXPECT_EQ(metrics_csv({a, b}), "round,train_loss,test_acc,latency_s,h_bar_mc,g_value\n"
                                 "0,2.5,0.25,0.125,,\n"
                                 "1,2,0.5,0,0.75,-1.5\n");
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}

TEST(Sweep, SingleCellOneRound) {
  ExperimentConfig cfg = checks::tiny_config();
  cfg.rounds = 1;
  const fs::path out = scratch("single");
  const SweepResult r = run_sweep(cfg, {Method::tolrdul}, {2}, {1}, out);
  ASSERT_EQ(r.runs.size(), 1u);
  ASSERT_EQ(r.summary.rows.size(), 1u);
  const auto csv = lines(slurp(out / "tolrdul_r2_seed1.csv"));
  ASSERT_EQ(csv.size(), 2u);
  EXPECT_EQ(csv[0], metrics_header);
  EXPECT_EQ(csv[1].substr(0, 2), "0,");
  EXPECT_TRUE(fs::exists(out / "summary.csv"));
  EXPECT_TRUE(fs::exists(out / "runs.csv"));
  fs::remove_all(out);
}

TEST(Sweep, TwoSeedsTwoFiles) {
  ExperimentConfig cfg = checks::tiny_config();
  cfg.rounds = 3;
  const fs::path out = scratch("seeds");
  run_sweep(cfg, {Method::random_regular}, {2}, {1, 2}, out);
  const std::string a = slurp(out / "random_regular_r2_seed1.csv"), b = slurp(out / "random_regular_r2_seed2.csv");
  EXPECT_NE(a, b);
  EXPECT_EQ(lines(a)[0], lines(b)[0]);
  fs::remove_all(out);
}

TEST(Sweep, FullyConnectedSlowerThanRegular) {
  ExperimentConfig cfg = checks::tiny_config();
  cfg.rounds = 6;
  const SweepResult r = run_sweep(cfg, {Method::random_regular, Method::fully_connected}, {2}, {1, 2, 3});
  EXPECT_GE(r.summary.find(Method::fully_connected, 2)->mean_latency_s,
            r.summary.find(Method::random_regular, 2)->mean_latency_s);
  // per seed as well: the FC link set is a superset under the same fading
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t t = 0; t < 6; ++t) EXPECT_GE(r.runs[3 + s].records[t].latency_s, r.runs[s].records[t].latency_s);
}

TEST(Sweep, SummaryMatchesFinalRounds) {
  ExperimentConfig cfg = checks::tiny_config();
  cfg.rounds = 4;
  const fs::path out = scratch("summary");
  const SweepResult r = run_sweep(cfg, {Method::stl_fw_like, Method::fully_connected}, {2, 4}, {1, 2}, out);
  ASSERT_EQ(r.summary.rows.size(), 4u);
  for (const auto& row : r.summary.rows) {
    double acc = 0.0;
    for (const auto& run : r.runs)
      if (run.method == row.method && run.degree == row.degree) acc += run.records.back().test_acc / 2.0;
    EXPECT_DOUBLE_EQ(row.final_test_acc, acc);
    EXPECT_EQ(row.runs_ok, 2u);
  }
  // FC trained once per seed, reported under both degrees with its own file
  EXPECT_EQ(slurp(out / "fully_connected_r2_seed1.csv"), slurp(out / "fully_connected_r4_seed1.csv"));
  const auto summary = lines(slurp(out / "summary.csv"));
  EXPECT_EQ(summary[0], "method,degree,runs_ok,runs_failed,final_test_acc,mean_latency_s");
  EXPECT_EQ(summary.size(), 5u);
  fs::remove_all(out);
}

TEST(Sweep, FailedCellReportedNotThrown) {
  ExperimentConfig cfg = checks::tiny_config();
  cfg.rounds = 2;
  // degree must stay below the client count (N = 6)
  const SweepResult r = run_sweep(cfg, {Method::random_regular}, {6}, {1});
  EXPECT_FALSE(r.runs[0].ok);
  EXPECT_FALSE(r.runs[0].error.empty());
  EXPECT_EQ(r.summary.rows[0].runs_failed, 1u);
  EXPECT_NE(summary_csv(r.summary).find("random_regular,6,0,1,,"), std::string::npos);
}

TEST(Sweep, RerunIsByteIdentical) {
  ExperimentConfig cfg = checks::tiny_config();
  cfg.rounds = 3;
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  run_sweep(cfg, {Method::tolrdul, Method::fully_connected}, {2}, {5}, a);
  run_sweep(cfg, {Method::tolrdul, Method::fully_connected}, {2}, {5}, b);
  for (const char* f : {"tolrdul_r2_seed5.csv", "fully_connected_r2_seed5.csv", "summary.csv", "runs.csv"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Sweep, EmptyGridRejected) {
  EXPECT_THROW(run_sweep(checks::tiny_config(), {}, {2}, {1}), std::invalid_argument);
}

// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
// if any fails. Criterion 8 trains the full scaled sweep (a few minutes).

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "d2dfl/checks.hpp"
#include "d2dfl/config.hpp"
#include "d2dfl/sweep.hpp"

#ifndef D2DFL_CONFIG_DIR
#define D2DFL_CONFIG_DIR "configs"
#endif

using namespace d2dfl;
using checks::CheckResult;

namespace {

namespace fs = std::filesystem;

CheckResult with_runtime_limit(CheckResult r, double limit_s) {
  if (r.seconds >= limit_s) {
    r.passed = false;
    r.detail += "; runtime over " + std::to_string(limit_s) + " s";
  }
  return r;
}

CheckResult both(std::string name, const CheckResult& a, const CheckResult& b) {
  return {std::move(name), a.passed && b.passed,
          a.name + ": " + (a.passed ? "ok" : "FAIL") + " (" + a.detail + "); " + b.name + ": " +
              (b.passed ? "ok" : "FAIL") + " (" + b.detail + ")",
          a.seconds + b.seconds};
}

struct OrderingReport {
  bool accuracy = true, latency_vs_fc = true, latency_monotone = true;
  std::ostringstream detail;
};

void check_ordering(const std::string& label, const SummaryTable& t, const std::vector<std::size_t>& degrees,
                    OrderingReport& rep) {
  const Method baselines[] = {Method::stl_fw_like, Method::random_regular, Method::fully_connected};
  double prev_latency = -1.0;
  for (std::size_t r : degrees) {
    const SummaryRow* ours = t.find(Method::tolrdul, r);
    const SummaryRow* fc = t.find(Method::fully_connected, r);
    char buf[256];
    std::snprintf(buf, sizeof buf, "  %s r=%zu: tolrdul acc %.4f lat %.4fs |", label.c_str(), r, ours->final_test_acc,
                  ours->mean_latency_s);
    rep.detail << buf;
    for (Method b : baselines) {
      const SummaryRow* row = t.find(b, r);
      const bool ok = row->runs_ok > 0 && ours->final_test_acc >= row->final_test_acc - 0.005;
      if (!ok) rep.accuracy = false;
      std::snprintf(buf, sizeof buf, " %s %.4f%s lat %.4fs |", to_string(b), row->final_test_acc, ok ? "" : " (acc FAIL)",
                    row->mean_latency_s);
      rep.detail << buf;
    }
    if (ours->runs_failed > 0) {
      rep.accuracy = false;
      rep.detail << " tolrdul runs failed: " << ours->runs_failed;
    }
    if (!(ours->mean_latency_s < fc->mean_latency_s)) {
      rep.latency_vs_fc = false;
      rep.detail << " (latency vs FC FAIL)";
    }
    if (ours->mean_latency_s < prev_latency) {
      rep.latency_monotone = false;
      rep.detail << " (latency decreased in r)";
    }
    prev_latency = ours->mean_latency_s;
    rep.detail << '\n';
  }
}

CheckResult scaled_ordering(const fs::path& out_root) {
  return checks::timed("scaled end-to-end ordering", [&](CheckResult& r) {
    const std::vector<Method> methods{Method::tolrdul, Method::stl_fw_like, Method::random_regular,
                                      Method::fully_connected};
    const std::vector<std::size_t> degrees{2, 4, 10};
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    OrderingReport rep;
    bool shape_ok = true;
    for (const char* name : {"scaled_dirichlet", "scaled_rotation"}) {
      const ExperimentConfig cfg = parse_config(std::string(D2DFL_CONFIG_DIR) + "/" + name + ".cfg");
      if (cfg.clients != 16 || cfg.rounds != 300) shape_ok = false;
      const SweepResult res = run_sweep(cfg, methods, degrees, seeds, out_root / name);
      check_ordering(name, res.summary, degrees, rep);
    }
    r.passed = shape_ok && rep.accuracy && rep.latency_vs_fc && rep.latency_monotone;
    r.detail = std::string("(a) accuracy within 0.5 points of every baseline: ") + (rep.accuracy ? "yes" : "NO") +
               "; (b) latency below fully_connected: " + (rep.latency_vs_fc ? "yes" : "NO") +
               "; (c) latency nondecreasing in r: " + (rep.latency_monotone ? "yes" : "NO") + "\n" + rep.detail.str();
  });
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out_root = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_out";
  fs::create_directories(out_root);

  std::vector<CheckResult> results;
  auto run = [&](int id, CheckResult r) {
    std::printf("[%s] %d. %s (%.1fs): %s\n", r.passed ? "PASS" : "FAIL", id, r.name.c_str(), r.seconds,
                r.detail.c_str());
    std::fflush(stdout);
    results.push_back(std::move(r));
  };

  run(1, with_runtime_limit(checks::mask_variance_identity(100000), 5.0));
  run(2, with_runtime_limit(checks::discrepancy_bound_holds(100), 5.0));
  run(3, with_runtime_limit(checks::discrepancy_monte_carlo(20, 10000), 10.0));
  run(4, checks::closed_form_at_uniform(50));
  run(5, with_runtime_limit(checks::gradients_match_differences(20), 30.0));
  run(6, checks::assignment_matches_brute_force(200, 6));
  run(7, both("Frank-Wolfe feasibility and progress", checks::frank_wolfe_feasible_and_monotone(50),
              checks::frank_wolfe_near_best_sample(20, 10000)));
  {
    CheckResult r = scaled_ordering(out_root);
    // 15 minutes per cell; the whole sweep finishing in that time bounds every cell
    run(8, with_runtime_limit(std::move(r), 15.0 * 60.0));
  }
  {
    ExperimentConfig cfg = parse_config(std::string(D2DFL_CONFIG_DIR) + "/scaled_dirichlet.cfg");
    run(9, checks::runs_are_deterministic(cfg, out_root / "determinism"));
  }
  run(10, checks::convergence_bound_evaluator());

  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.passed;
  std::printf("%zu of %zu criteria passed\n", results.size() - failed, results.size());
  return failed == 0 ? 0 : 1;
}

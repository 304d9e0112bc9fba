#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "d2dfl/config.hpp"
#include "d2dfl/experiment.hpp"

namespace d2dfl {

inline constexpr const char* metrics_header = "round,train_loss,test_acc,latency_s,h_bar_mc,g_value";

/// Round-trip decimal; the same double always prints the same bytes.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline void write_metrics_csv(std::ostream& out, const std::vector<RoundRecord>& records) {
  out << metrics_header << '\n';
  for (const auto& r : records)
    out << r.round << ',' << format_double(r.train_loss) << ',' << format_double(r.test_acc) << ','
        << format_double(r.latency_s) << ',' << format_optional(r.h_bar_mc) << ',' << format_optional(r.g_value)
        << '\n';
}

inline std::string metrics_csv(const std::vector<RoundRecord>& records) {
  std::ostringstream s;
  write_metrics_csv(s, records);
  return s.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string run_file_name(Method m, std::size_t degree, std::uint64_t seed) {
  return std::string(to_string(m)) + "_r" + std::to_string(degree) + "_seed" + std::to_string(seed) + ".csv";
}

struct RunOutcome {
  Method method = Method::tolrdul;
  std::size_t degree = 0;
  std::uint64_t seed = 0;
  std::string file;
  bool ok = false;
  std::string error;
  std::vector<RoundRecord> records;

  double final_accuracy() const { return records.empty() ? 0.0 : records.back().test_acc; }
  double mean_latency() const {
    if (records.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : records) s += r.latency_s;
    return s / static_cast<double>(records.size());
  }
};

struct SummaryRow {
  Method method = Method::tolrdul;
  std::size_t degree = 0;
  std::size_t runs_ok = 0;
  std::size_t runs_failed = 0;
  /// Means over successful seeds.
  double final_test_acc = 0.0;
  double mean_latency_s = 0.0;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;

  const SummaryRow* find(Method m, std::size_t degree) const {
    for (const auto& r : rows)
      if (r.method == m && r.degree == degree) return &r;
    return nullptr;
  }
};

struct SweepResult {
  SummaryTable summary;
  std::vector<RunOutcome> runs;
};

inline std::string summary_csv(const SummaryTable& t) {
  std::ostringstream s;
  s << "method,degree,runs_ok,runs_failed,final_test_acc,mean_latency_s\n";
  for (const auto& r : t.rows) {
    s << to_string(r.method) << ',' << r.degree << ',' << r.runs_ok << ',' << r.runs_failed << ',';
    if (r.runs_ok > 0) s << format_double(r.final_test_acc) << ',' << format_double(r.mean_latency_s);
    else s << ',';
    s << '\n';
  }
  return s.str();
}

inline std::string runs_csv(const std::vector<RunOutcome>& runs) {
  std::ostringstream s;
  s << "method,degree,seed,status,rounds,final_test_acc,mean_latency_s,file,error\n";
  for (const auto& r : runs) {
    std::string err = r.error;
    for (char& c : err)
      if (c == ',' || c == '\n' || c == '"') c = ' ';
    s << to_string(r.method) << ',' << r.degree << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ','
      << r.records.size() << ',';
    if (!r.records.empty()) s << format_double(r.final_accuracy()) << ',' << format_double(r.mean_latency());
    else s << ',';
    s << ',' << r.file << ',' << err << '\n';
  }
  return s.str();
}

/// Executes one cell with the config's overrides applied. Failures are
/// reported in the outcome rather than thrown; aborted runs keep their
/// partial records.
inline RunOutcome run_cell(ExperimentConfig cfg, Method m, std::size_t degree, std::uint64_t seed) {
  RunOutcome out;
  out.method = m;
  out.degree = degree;
  out.seed = seed;
  out.file = run_file_name(m, degree, seed);
  cfg.method = m;
  cfg.degree = degree;
  cfg.seed = seed;
  try {
    out.records = run_training(cfg).records;
    out.ok = true;
  } catch (const TrainingAborted& e) {
    out.records = e.records;
    out.error = e.what();
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

/// Runs every (method, degree, seed) cell and writes one metrics CSV per run,
/// `runs.csv` and `summary.csv` into out_dir (when non-empty). The fully
/// connected topology does not depend on r, so it is trained once per seed
/// and its results are reported under every configured degree.
inline SweepResult run_sweep(const ExperimentConfig& base, const std::vector<Method>& methods,
                             const std::vector<std::size_t>& degrees, const std::vector<std::uint64_t>& seeds,
                             const std::filesystem::path& out_dir = {}) {
  if (methods.empty() || degrees.empty() || seeds.empty())
    throw std::invalid_argument("run_sweep: methods, degrees and seeds must be nonempty");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  SweepResult res;
  std::map<std::uint64_t, RunOutcome> fc_cache;
  for (Method m : methods)
    for (std::size_t r : degrees) {
      SummaryRow row;
      row.method = m;
      row.degree = r;
      for (std::uint64_t s : seeds) {
        RunOutcome run;
        if (m == Method::fully_connected) {
          auto it = fc_cache.find(s);
          if (it == fc_cache.end()) it = fc_cache.emplace(s, run_cell(base, m, r, s)).first;
          run = it->second;
          run.degree = r;
          run.file = run_file_name(m, r, s);
        } else {
          run = run_cell(base, m, r, s);
        }
        if (!out_dir.empty() && !run.records.empty()) write_file(out_dir / run.file, metrics_csv(run.records));
        if (run.records.empty()) run.file.clear();
        if (run.ok) {
          ++row.runs_ok;
          row.final_test_acc += run.final_accuracy();
          row.mean_latency_s += run.mean_latency();
        } else {
          ++row.runs_failed;
        }
        res.runs.push_back(std::move(run));
      }
      if (row.runs_ok > 0) {
        row.final_test_acc /= static_cast<double>(row.runs_ok);
        row.mean_latency_s /= static_cast<double>(row.runs_ok);
      }
      res.summary.rows.push_back(row);
    }
  if (!out_dir.empty()) {
    write_file(out_dir / "runs.csv", runs_csv(res.runs));
    write_file(out_dir / "summary.csv", summary_csv(res.summary));
  }
  return res;
}

}  // namespace d2dfl

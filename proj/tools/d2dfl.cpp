// d2dfl: run, sweep and self-check the decentralized training simulator.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "d2dfl/checks.hpp"
#include "d2dfl/config.hpp"
#include "d2dfl/experiment.hpp"
#include "d2dfl/serialize.hpp"
#include "d2dfl/sweep.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_runtime = 2;

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& csv) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = std::min(csv.find(',', start), csv.size());
    const std::string item = d2dfl::detail::trim(std::string_view(csv).substr(start, comma - start));
    if (item.empty()) throw d2dfl::ConfigError(key, "empty list entry");
    if constexpr (std::is_same_v<T, d2dfl::Method>) out.push_back(d2dfl::parse_method(item));
    else out.push_back(static_cast<T>(d2dfl::detail::parse_uint(key, item)));
    start = comma + 1;
  }
  return out;
}

int cmd_run(const std::string& config, const std::optional<std::string>& method, const std::optional<std::size_t>& degree,
            const std::optional<std::uint64_t>& seed, const std::string& out_dir) {
  d2dfl::ExperimentConfig cfg = d2dfl::parse_config(config);
  if (method) cfg.method = d2dfl::parse_method(*method);
  if (degree) cfg.degree = *degree;
  if (seed) cfg.seed = *seed;
  cfg.validate();

  d2dfl::TrainingResult res;
  int code = exit_ok;
  std::string error;
  try {
    res = d2dfl::run_training(cfg);
  } catch (const d2dfl::TrainingAborted& e) {
    res.records = e.records;
    error = e.what();
    code = exit_runtime;
  }

  const std::string csv = d2dfl::metrics_csv(res.records);
  if (out_dir.empty()) {
    std::cout << csv;
  } else {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::string file = d2dfl::run_file_name(cfg.method, cfg.degree, cfg.seed);
    d2dfl::write_file(fs::path(out_dir) / file, csv);
    if (code == exit_ok) {
      const std::string stem = file.substr(0, file.size() - 4);
      d2dfl::write_file(fs::path(out_dir) / (stem + "_theta.json"), d2dfl::to_json(res.final_theta).dump() + "\n");
      d2dfl::save_model(d2dfl::ClientModel{res.layout, res.final_average}, fs::path(out_dir) / (stem + "_model"));
      double latency = 0.0;
      for (const auto& r : res.records) latency += r.latency_s;
      latency /= static_cast<double>(res.records.size());
      std::printf("%s: %zu rounds, final test_acc %.4f, mean latency %.6g s\n", file.c_str(), res.records.size(),
                  res.records.back().test_acc, latency);
    }
  }
  if (code != exit_ok) std::cerr << "run failed: " << error << '\n';
  return code;
}

int cmd_sweep(const std::string& config, const std::string& methods, const std::string& degrees,
              const std::string& seeds, const std::string& out_dir) {
  const d2dfl::ExperimentConfig cfg = d2dfl::parse_config(config);
  const auto ms = parse_list<d2dfl::Method>("methods", methods);
  const auto rs = parse_list<std::size_t>("degrees", degrees);
  const auto ss = parse_list<std::uint64_t>("seeds", seeds);
  const d2dfl::SweepResult res = d2dfl::run_sweep(cfg, ms, rs, ss, out_dir);
  std::cout << d2dfl::summary_csv(res.summary);
  std::size_t failed = 0;
  for (const auto& r : res.runs)
    if (!r.ok) {
      ++failed;
      std::cerr << d2dfl::to_string(r.method) << " r=" << r.degree << " seed=" << r.seed << " failed: " << r.error
                << '\n';
    }
  return failed == 0 ? exit_ok : exit_runtime;
}

int cmd_check() {
  const auto scratch = std::filesystem::temp_directory_path() / "d2dfl_check";
  bool ok = true;
  for (const auto& r : d2dfl::checks::quick_suite(scratch)) {
    std::printf("[%s] %s (%.2fs): %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds, r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? exit_ok : exit_runtime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized learning over unreliable D2D links"};
  app.require_subcommand(1);

  std::string config, out_dir, methods, degrees, seeds;
  std::optional<std::string> method;
  std::optional<std::size_t> degree;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "train one configuration and write its metrics CSV");
  run->add_option("--config", config, "config file")->required();
  run->add_option("--method", method, "tolrdul | stl_fw_like | random_regular | fully_connected");
  run->add_option("--degree", degree, "topology degree r");
  run->add_option("--seed", seed, "master seed");
  run->add_option("--out", out_dir, "output directory (stdout when omitted)");

  auto* sweep = app.add_subcommand("sweep", "method x degree x seed grid with summary table");
  std::string sweep_config;
  sweep->add_option("--config", sweep_config, "config file")->required();
  sweep->add_option("--methods", methods, "comma-separated methods")->required();
  sweep->add_option("--degrees", degrees, "comma-separated degrees")->required();
  sweep->add_option("--seeds", seeds, "comma-separated seeds")->required();
  std::string sweep_out;
  sweep->add_option("--out", sweep_out, "output directory")->required();

  auto* check = app.add_subcommand("check", "run the oracle suite on tiny instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    if (run->parsed()) return cmd_run(config, method, degree, seed, out_dir);
    if (sweep->parsed()) return cmd_sweep(sweep_config, methods, degrees, seeds, sweep_out);
    if (check->parsed()) return cmd_check();
  } catch (const d2dfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_runtime;
  }
  return exit_runtime;
}

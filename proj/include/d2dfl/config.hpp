#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "d2dfl/channel.hpp"
#include "d2dfl/solver.hpp"

namespace d2dfl {

enum class Method { tolrdul, stl_fw_like, random_regular, fully_connected };
enum class DatasetKind { digits8, gaussian, idx };
enum class Partitioner { dirichlet, rotation, iid };
enum class LrSchedule { constant, inv_sqrt_t };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::tolrdul: return "tolrdul";
    case Method::stl_fw_like: return "stl_fw_like";
    case Method::random_regular: return "random_regular";
    case Method::fully_connected: return "fully_connected";
  }
  return "?";
}

inline const char* to_string(Partitioner p) {
  switch (p) {
    case Partitioner::dirichlet: return "dirichlet";
    case Partitioner::rotation: return "rotation";
    case Partitioner::iid: return "iid";
  }
  return "?";
}

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t clients = 0;
  std::size_t rounds = 0;
  std::size_t exchange_period = 3;
  double lambda = 0.001;
  std::size_t degree = 2;
  Method method = Method::tolrdul;
  /// Fire the first topology relearning at t = 0 instead of t = K.
  bool relearn_at_round_zero = false;

  ChannelParams channel;
  double min_separation_m = 0.0;

  std::size_t hidden_dim = 16;
  std::size_t rep_dim = 4;

  DatasetKind dataset = DatasetKind::digits8;
  std::size_t train_examples = 2000;
  std::size_t test_examples = 500;
  double digit_noise = 0.3;
  std::size_t gaussian_dim = 16;
  std::size_t gaussian_classes = 10;
  double gaussian_separation = 3.0;
  std::string idx_train_images, idx_train_labels, idx_test_images, idx_test_labels;

  Partitioner partitioner = Partitioner::dirichlet;
  double dirichlet_alpha = 0.1;

  double learning_rate = 0.1;
  LrSchedule lr_schedule = LrSchedule::constant;
  std::size_t batch_size = 128;

  StepRule fw_step_rule = StepRule::line_search;
  std::size_t fw_grid_points = 64;
  double fw_tol = 1e-9;

  bool diag_h_bar_mc = false;
  std::size_t h_bar_samples = 32;
  bool diag_g_value = false;

  /// Throws ConfigError on the first violated constraint.
  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

inline void ExperimentConfig::validate() const {
  auto require = [](bool ok, const char* key, const char* what) {
    if (!ok) throw ConfigError(key, what);
  };
  require(clients >= 1, "clients", "must be >= 1");
  require(rounds >= 1, "rounds", "must be >= 1");
  require(exchange_period >= 1, "exchange_period", "must be >= 1");
  require(lambda >= 0.0, "lambda", "must be >= 0");
  require(learning_rate > 0.0, "learning_rate", "must be > 0");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(hidden_dim >= 1, "hidden_dim", "must be >= 1");
  require(rep_dim >= 1, "rep_dim", "must be >= 1");
  require(train_examples >= clients, "train_examples", "must be at least the number of clients");
  require(test_examples >= 1, "test_examples", "must be >= 1");
  require(dirichlet_alpha > 0.0, "dirichlet_alpha", "must be > 0");
  require(min_separation_m >= 0.0, "min_separation_m", "must be >= 0");
  require(fw_grid_points >= 2, "fw_grid_points", "must be >= 2");
  require(h_bar_samples >= 1, "h_bar_samples", "must be >= 1");
  require(gaussian_classes >= 2, "gaussian_classes", "must be >= 2");
  if (method == Method::tolrdul || method == Method::stl_fw_like || method == Method::random_regular)
    require(degree >= 1, "degree", "must be >= 1 for this method");
  if (method == Method::random_regular) {
    require(degree < clients, "degree", "must be below the number of clients");
    require((degree * clients) % 2 == 0, "degree", "clients * degree must be even for random_regular");
  }
  if (partitioner == Partitioner::rotation) require(dataset != DatasetKind::gaussian, "partitioner", "rotation needs image data");
  if (dataset == DatasetKind::idx)
    require(!idx_train_images.empty() && !idx_train_labels.empty() && !idx_test_images.empty() &&
                !idx_test_labels.empty(),
            "dataset", "idx needs idx_train_images, idx_train_labels, idx_test_images, idx_test_labels");
  try {
    channel.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("channel", e.what());
  }
}

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError(key, "expected a nonnegative integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  const std::string l = lower(v);
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  throw ConfigError(key, "expected a boolean, got '" + v + "'");
}

// Splits "10dBm" into (10, "dbm").
inline std::pair<double, std::string> split_unit(const std::string& key, const std::string& v) {
  std::size_t k = 0;
  while (k < v.size() && (std::isdigit(static_cast<unsigned char>(v[k])) || v[k] == '.' || v[k] == '-' ||
                          v[k] == '+' || v[k] == 'e' || v[k] == 'E')) {
    // stop at an exponent marker that is not followed by a digit or sign
    if ((v[k] == 'e' || v[k] == 'E') &&
        !(k + 1 < v.size() && (std::isdigit(static_cast<unsigned char>(v[k + 1])) || v[k + 1] == '-' || v[k + 1] == '+')))
      break;
    ++k;
  }
  return {parse_double(key, trim(v.substr(0, k))), lower(trim(v.substr(k)))};
}

inline double parse_power_watts(const std::string& key, const std::string& v) {
  auto [x, unit] = split_unit(key, v);
  if (unit == "dbm") return dbm_to_watts(x);
  if (unit == "w" || unit.empty()) return x;
  if (unit == "mw") return x * 1e-3;
  throw ConfigError(key, "unknown power unit '" + unit + "' (use dBm, mW or W)");
}

inline double parse_ratio(const std::string& key, const std::string& v) {
  auto [x, unit] = split_unit(key, v);
  if (unit == "db") return db_to_linear(x);
  if (unit.empty()) return x;
  throw ConfigError(key, "unknown ratio unit '" + unit + "' (use dB or a bare linear value)");
}

}  // namespace detail

inline Method parse_method(const std::string& v) {
  const std::string l = detail::lower(v);
  if (l == "tolrdul") return Method::tolrdul;
  if (l == "stl_fw" || l == "stl_fw_like") return Method::stl_fw_like;
  if (l == "random_regular" || l == "random") return Method::random_regular;
  if (l == "fully_connected") return Method::fully_connected;
  throw ConfigError("method", "unknown method '" + v + "'");
}

/// Parses `key = value` text. Unknown keys, malformed values and violated
/// constraints raise ConfigError naming the key. `clients` and `rounds` are
/// required; everything else has a default.
inline ExperimentConfig parse_config_text(const std::string& text) {
  using namespace detail;
  ExperimentConfig cfg;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto size = [](std::size_t& f) -> Setter {
    return [&f](const std::string& k, const std::string& v) { f = static_cast<std::size_t>(parse_uint(k, v)); };
  };
  auto real = [](double& f) -> Setter { return [&f](const std::string& k, const std::string& v) { f = parse_double(k, v); }; };
  auto flag = [](bool& f) -> Setter { return [&f](const std::string& k, const std::string& v) { f = parse_bool(k, v); }; };
  auto text_field = [](std::string& f) -> Setter { return [&f](const std::string&, const std::string& v) { f = v; }; };
  auto& ch = cfg.channel;

  const std::map<std::string, Setter> setters = {
      {"seed", [&](const std::string& k, const std::string& v) { cfg.seed = parse_uint(k, v); }},
      {"clients", size(cfg.clients)},
      {"rounds", size(cfg.rounds)},
      {"exchange_period", size(cfg.exchange_period)},
      {"lambda", real(cfg.lambda)},
      {"degree", size(cfg.degree)},
      {"method", [&](const std::string&, const std::string& v) { cfg.method = parse_method(v); }},
      {"relearn_at_round_zero", flag(cfg.relearn_at_round_zero)},
      {"tx_power", [&](const std::string& k, const std::string& v) { ch.tx_power_w = parse_power_watts(k, v); }},
      {"tx_power_dbm", [&](const std::string& k, const std::string& v) { ch.tx_power_w = dbm_to_watts(parse_double(k, v)); }},
      {"tx_power_w", real(ch.tx_power_w)},
      {"noise_power", [&](const std::string& k, const std::string& v) { ch.noise_power_w = parse_power_watts(k, v); }},
      {"noise_power_dbm", [&](const std::string& k, const std::string& v) { ch.noise_power_w = dbm_to_watts(parse_double(k, v)); }},
      {"noise_power_w", real(ch.noise_power_w)},
      {"decode_threshold", [&](const std::string& k, const std::string& v) { ch.decode_threshold = parse_ratio(k, v); }},
      {"decode_threshold_db", [&](const std::string& k, const std::string& v) { ch.decode_threshold = db_to_linear(parse_double(k, v)); }},
      {"bandwidth_hz", real(ch.bandwidth_hz)},
      {"package_bits", real(ch.package_bits)},
      {"package_mb", [&](const std::string& k, const std::string& v) { ch.package_bits = parse_double(k, v) * 8e6; }},
      {"region_side_m", real(ch.region_side_m)},
      {"min_separation_m", real(cfg.min_separation_m)},
      {"hidden_dim", size(cfg.hidden_dim)},
      {"rep_dim", size(cfg.rep_dim)},
      {"dataset",
       [&](const std::string& k, const std::string& v) {
         const std::string l = lower(v);
         if (l == "digits8") cfg.dataset = DatasetKind::digits8;
         else if (l == "gaussian") cfg.dataset = DatasetKind::gaussian;
         else if (l == "idx") cfg.dataset = DatasetKind::idx;
         else throw ConfigError(k, "unknown dataset '" + v + "'");
       }},
      {"train_examples", size(cfg.train_examples)},
      {"test_examples", size(cfg.test_examples)},
      {"digit_noise", real(cfg.digit_noise)},
      {"gaussian_dim", size(cfg.gaussian_dim)},
      {"gaussian_classes", size(cfg.gaussian_classes)},
      {"gaussian_separation", real(cfg.gaussian_separation)},
      {"idx_train_images", text_field(cfg.idx_train_images)},
      {"idx_train_labels", text_field(cfg.idx_train_labels)},
      {"idx_test_images", text_field(cfg.idx_test_images)},
      {"idx_test_labels", text_field(cfg.idx_test_labels)},
      {"partitioner",
       [&](const std::string& k, const std::string& v) {
         const std::string l = lower(v);
         if (l == "dirichlet") cfg.partitioner = Partitioner::dirichlet;
         else if (l == "rotation") cfg.partitioner = Partitioner::rotation;
         else if (l == "iid") cfg.partitioner = Partitioner::iid;
         else throw ConfigError(k, "unknown partitioner '" + v + "'");
       }},
      {"dirichlet_alpha", real(cfg.dirichlet_alpha)},
      {"learning_rate", real(cfg.learning_rate)},
      {"lr_schedule",
       [&](const std::string& k, const std::string& v) {
         const std::string l = lower(v);
         if (l == "constant") cfg.lr_schedule = LrSchedule::constant;
         else if (l == "inv_sqrt_t") cfg.lr_schedule = LrSchedule::inv_sqrt_t;
         else throw ConfigError(k, "unknown schedule '" + v + "'");
       }},
      {"batch_size", size(cfg.batch_size)},
      {"fw_step_rule",
       [&](const std::string& k, const std::string& v) {
         const std::string l = lower(v);
         if (l == "line_search") cfg.fw_step_rule = StepRule::line_search;
         else if (l == "classic") cfg.fw_step_rule = StepRule::classic;
         else throw ConfigError(k, "unknown step rule '" + v + "'");
       }},
      {"fw_grid_points", size(cfg.fw_grid_points)},
      {"fw_tol", real(cfg.fw_tol)},
      {"diag_h_bar_mc", flag(cfg.diag_h_bar_mc)},
      {"h_bar_samples", size(cfg.h_bar_samples)},
      {"diag_g_value", flag(cfg.diag_g_value)},
  };

  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
    const std::string key = lower(trim(std::string_view(body).substr(0, eq)));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(key, "unknown key");
    if (value.empty()) throw ConfigError(key, "missing value");
    if (!seen.insert(key).second) throw ConfigError(key, "duplicate key");
    it->second(key, value);
  }
  if (!seen.count("clients")) throw ConfigError("clients", "missing required field");
  if (!seen.count("rounds")) throw ConfigError("rounds", "missing required field");
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace d2dfl

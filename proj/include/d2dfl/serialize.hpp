#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "d2dfl/data.hpp"
#include "d2dfl/matrix.hpp"
#include "d2dfl/mixing.hpp"
#include "d2dfl/model.hpp"
#include "d2dfl/objective.hpp"
#include "d2dfl/solver.hpp"

namespace d2dfl {

using json = nlohmann::json;

class SerializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j) {
  if (!j.is_array()) throw SerializationError("matrix: expected an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j.front().size() : 0;
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const json& row = j[i];
    if (!row.is_array() || row.size() != cols) throw SerializationError("matrix: ragged or non-array row " + std::to_string(i));
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw SerializationError("matrix: non-numeric entry");
      m(i, c) = row[c].get<double>();
    }
  }
  return m;
}

inline json to_json(const MixingMatrix& theta) { return matrix_to_json(theta.matrix()); }

/// Parses and re-validates; a matrix that is not symmetric doubly stochastic
/// raises MixingError.
inline MixingMatrix mixing_from_json(const json& j) { return MixingMatrix::validate(matrix_from_json(j)); }

inline json to_json(const RepStats& s) { return json{{"mu", matrix_to_json(s.mu)}, {"sigma", matrix_to_json(s.sigma)}}; }

inline RepStats rep_stats_from_json(const json& j) {
  try {
    RepStats s{matrix_from_json(j.at("mu")), matrix_from_json(j.at("sigma"))};
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw SerializationError(std::string("rep stats: ") + e.what());
  }
}

inline json to_json(const AtomicDecomposition& d) {
  json atoms = json::array();
  for (std::size_t a = 0; a < d.atoms.size(); ++a) atoms.push_back(json{{"perm", d.atoms[a].perm}, {"weight", d.weights[a]}});
  return atoms;
}

inline json to_json(const FwResult& r) {
  return json{{"theta", to_json(r.theta)},
              {"decomposition", to_json(r.decomposition)},
              {"objective_trace", r.objective_trace},
              {"fw_gaps", r.fw_gaps},
              {"symmetrized_objective", r.symmetrized_objective},
              {"warnings", r.warnings}};
}

inline FwResult fw_result_from_json(const json& j) {
  try {
    FwResult r;
    r.theta = mixing_from_json(j.at("theta"));
    for (const auto& a : j.at("decomposition")) {
      r.decomposition.atoms.push_back(PermutationAtom{a.at("perm").get<std::vector<std::size_t>>()});
      r.decomposition.weights.push_back(a.at("weight").get<double>());
    }
    r.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    r.fw_gaps = j.at("fw_gaps").get<std::vector<double>>();
    r.symmetrized_objective = j.at("symmetrized_objective").get<double>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw SerializationError(std::string("fw result: ") + e.what());
  }
}

inline json to_json(const Partition& p) { return json{{"clients", p.clients}, {"assignment", p.assignment}}; }

inline Partition partition_from_json(const json& j) {
  try {
    Partition p;
    p.clients = j.at("clients").get<std::size_t>();
    p.assignment = j.at("assignment").get<std::vector<std::size_t>>();
    for (std::size_t a : p.assignment)
      if (a >= p.clients) throw SerializationError("partition: client index out of range");
    return p;
  } catch (const json::exception& e) {
    throw SerializationError(std::string("partition: ") + e.what());
  }
}

inline json to_json(const ModelLayout& l) {
  return json{{"input_dim", l.input_dim}, {"hidden_dim", l.hidden_dim}, {"rep_dim", l.rep_dim}, {"classes", l.classes}};
}

inline ModelLayout layout_from_json(const json& j) {
  try {
    return ModelLayout{j.at("input_dim").get<std::size_t>(), j.at("hidden_dim").get<std::size_t>(),
                       j.at("rep_dim").get<std::size_t>(), j.at("classes").get<std::size_t>()};
  } catch (const json::exception& e) {
    throw SerializationError(std::string("layout: ") + e.what());
  }
}

// Model snapshots: `<stem>.bin` holds the parameters as little-endian
// float64, `<stem>.json` the layout and parameter count.

inline void write_le_f64(std::ostream& out, std::span<const double> values) {
  for (double v : values) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char buf[8];
    for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(buf), 8);
  }
}

inline std::vector<double> read_le_f64(std::istream& in, std::size_t count) {
  std::vector<double> out(count);
  unsigned char buf[8];
  for (std::size_t k = 0; k < count; ++k) {
    if (!in.read(reinterpret_cast<char*>(buf), 8)) throw SerializationError("snapshot: truncated parameter file");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
    out[k] = std::bit_cast<double>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw SerializationError("snapshot: trailing bytes in parameter file");
  return out;
}

inline void save_model(const ClientModel& model, const std::filesystem::path& stem) {
  if (model.w.size() != model.layout.param_count()) throw SerializationError("snapshot: parameter count mismatch");
  std::filesystem::path bin = stem, meta = stem;
  bin += ".bin";
  meta += ".json";
  std::ofstream out(bin, std::ios::binary | std::ios::trunc);
  if (!out) throw SerializationError("snapshot: cannot write " + bin.string());
  write_le_f64(out, model.w);
  json sidecar{{"layout", to_json(model.layout)},
               {"param_count", model.w.size()},
               {"dtype", "float64"},
               {"endianness", "little"},
               {"order", json::array({"W1", "b1", "W2", "b2", "W3", "b3"})},
               {"file", bin.filename().string()}};
  std::ofstream m(meta, std::ios::trunc);
  if (!m) throw SerializationError("snapshot: cannot write " + meta.string());
  m << sidecar.dump(2) << '\n';
}

inline ClientModel load_model(const std::filesystem::path& stem) {
  std::filesystem::path bin = stem, meta = stem;
  bin += ".bin";
  meta += ".json";
  std::ifstream m(meta);
  if (!m) throw SerializationError("snapshot: cannot read " + meta.string());
  json sidecar;
  try {
    sidecar = json::parse(m);
  } catch (const json::exception& e) {
    throw SerializationError(std::string("snapshot sidecar: ") + e.what());
  }
  ClientModel model;
  model.layout = layout_from_json(sidecar.at("layout"));
  const std::size_t count = sidecar.at("param_count").get<std::size_t>();
  if (count != model.layout.param_count()) throw SerializationError("snapshot: sidecar parameter count disagrees with layout");
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw SerializationError("snapshot: cannot read " + bin.string());
  model.w = read_le_f64(in, count);
  return model;
}

}  // namespace d2dfl

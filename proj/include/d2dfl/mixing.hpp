#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "d2dfl/matrix.hpp"
#include "d2dfl/rng.hpp"

namespace d2dfl {

inline constexpr double stochastic_tolerance = 1e-9;

enum class MixingViolationKind { not_square, row_sum, column_sum, asymmetry, negative_entry, entry_above_one };

inline const char* to_string(MixingViolationKind k) {
  switch (k) {
    case MixingViolationKind::not_square: return "not square";
    case MixingViolationKind::row_sum: return "row-sum violation";
    case MixingViolationKind::column_sum: return "column-sum violation";
    case MixingViolationKind::asymmetry: return "asymmetry";
    case MixingViolationKind::negative_entry: return "negative entry";
    case MixingViolationKind::entry_above_one: return "entry above one";
  }
  return "unknown";
}

struct MixingViolation {
  MixingViolationKind kind;
  std::size_t row = 0;
  std::size_t col = 0;
  /// Deviation from the constraint (sum - 1, |a_ij - a_ji|, or the entry).
  double magnitude = 0.0;

  std::string describe() const {
    std::ostringstream os;
    os << to_string(kind) << " at (" << row << ", " << col << "), magnitude " << magnitude;
    return os.str();
  }
};

class MixingError : public std::runtime_error {
 public:
  explicit MixingError(MixingViolation v) : std::runtime_error(v.describe()), violation_(v) {}
  const MixingViolation& violation() const noexcept { return violation_; }

 private:
  MixingViolation violation_;
};

/// First violated doubly-stochastic constraint, if any. Symmetry is checked
/// only when `require_symmetric` is set (Frank-Wolfe iterates are not symmetric).
inline std::optional<MixingViolation> find_violation(const Matrix& theta, bool require_symmetric,
                                                     double tol = stochastic_tolerance) {
  if (!theta.square()) return MixingViolation{MixingViolationKind::not_square, theta.rows(), theta.cols(), 0.0};
  const std::size_t n = theta.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double x = theta(i, j);
      if (x < -tol || !std::isfinite(x)) return MixingViolation{MixingViolationKind::negative_entry, i, j, x};
      if (x > 1.0 + tol) return MixingViolation{MixingViolationKind::entry_above_one, i, j, x};
    }
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += theta(i, j);
    if (std::abs(s - 1.0) > tol) return MixingViolation{MixingViolationKind::row_sum, i, 0, s - 1.0};
  }
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += theta(i, j);
    if (std::abs(s - 1.0) > tol) return MixingViolation{MixingViolationKind::column_sum, 0, j, s - 1.0};
  }
  if (require_symmetric) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double diff = std::abs(theta(i, j) - theta(j, i));
        if (diff > tol) return MixingViolation{MixingViolationKind::asymmetry, i, j, diff};
      }
  }
  return std::nullopt;
}

/// Symmetric doubly-stochastic mixing matrix. Only constructible through
/// validation, so holding one means the invariants hold.
class MixingMatrix {
 public:
  static MixingMatrix validate(Matrix theta, double tol = stochastic_tolerance) {
    if (auto v = find_violation(theta, true, tol)) throw MixingError(*v);
    return MixingMatrix(std::move(theta));
  }

  static MixingMatrix identity(std::size_t n) { return MixingMatrix(Matrix::identity(n)); }

  const Matrix& matrix() const noexcept { return theta_; }
  operator const Matrix&() const noexcept { return theta_; }
  std::size_t size() const noexcept { return theta_.rows(); }
  double operator()(std::size_t i, std::size_t j) const noexcept { return theta_(i, j); }

  friend bool operator==(const MixingMatrix& a, const MixingMatrix& b) { return a.theta_ == b.theta_; }

 private:
  explicit MixingMatrix(Matrix theta) : theta_(std::move(theta)) {}
  Matrix theta_;
};

/// A vertex of the Birkhoff polytope: row i has its single 1 in column perm[i].
struct PermutationAtom {
  std::vector<std::size_t> perm;

  static PermutationAtom identity(std::size_t n) {
    PermutationAtom a;
    a.perm.resize(n);
    std::iota(a.perm.begin(), a.perm.end(), std::size_t{0});
    return a;
  }

  std::size_t size() const noexcept { return perm.size(); }

  bool is_bijection() const {
    std::vector<char> seen(perm.size(), 0);
    for (std::size_t j : perm) {
      if (j >= perm.size() || seen[j]) return false;
      seen[j] = 1;
    }
    return true;
  }

  Matrix to_matrix() const {
    Matrix m(perm.size(), perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) m(i, perm[i]) = 1.0;
    return m;
  }

  friend bool operator==(const PermutationAtom&, const PermutationAtom&) = default;
};

/// Convex combination of permutation atoms.
struct AtomicDecomposition {
  std::vector<PermutationAtom> atoms;
  std::vector<double> weights;

  Matrix reconstruct(std::size_t n) const {
    Matrix m(n, n);
    for (std::size_t a = 0; a < atoms.size(); ++a)
      for (std::size_t i = 0; i < n; ++i) m(i, atoms[a].perm[i]) += weights[a];
    return m;
  }

  /// Scale existing weights by (1 - gamma) and add `gamma` to `atom`,
  /// merging with an existing identical atom.
  void blend(const PermutationAtom& atom, double gamma) {
    for (double& w : weights) w *= (1.0 - gamma);
    auto it = std::find(atoms.begin(), atoms.end(), atom);
    if (it != atoms.end()) {
      weights[static_cast<std::size_t>(it - atoms.begin())] += gamma;
    } else {
      atoms.push_back(atom);
      weights.push_back(gamma);
    }
  }

  /// Drop atoms whose weight fell to zero (e.g. after a full step).
  void prune(double eps = 0.0) {
    std::size_t k = 0;
    for (std::size_t a = 0; a < atoms.size(); ++a) {
      if (weights[a] > eps) {
        atoms[k] = atoms[a];
        weights[k] = weights[a];
        ++k;
      }
    }
    atoms.resize(k);
    weights.resize(k);
  }
};

inline MixingMatrix fully_connected(std::size_t n) {
  if (n == 0) throw std::invalid_argument("fully_connected: need at least one client");
  return MixingMatrix::validate(Matrix(n, n, 1.0 / static_cast<double>(n)));
}

class GraphGenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Pairing model with restarts: stubs are matched one at a time, choosing
// uniformly among partners that keep the graph simple. Returns false when
// no admissible partner is left.
inline bool try_pair_regular(std::size_t n, std::size_t r, Engine& rng,
                             std::vector<std::vector<char>>& adj) {
  adj.assign(n, std::vector<char>(n, 0));
  std::vector<std::size_t> stubs;
  stubs.reserve(n * r);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t k = 0; k < r; ++k) stubs.push_back(v);

  std::vector<std::size_t> candidates;
  while (!stubs.empty()) {
    std::uniform_int_distribution<std::size_t> pick_first(0, stubs.size() - 1);
    const std::size_t a_idx = pick_first(rng);
    const std::size_t u = stubs[a_idx];
    std::swap(stubs[a_idx], stubs.back());
    stubs.pop_back();

    candidates.clear();
    for (std::size_t k = 0; k < stubs.size(); ++k)
      if (stubs[k] != u && !adj[u][stubs[k]]) candidates.push_back(k);
    if (candidates.empty()) return false;
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    const std::size_t b_idx = candidates[pick(rng)];
    const std::size_t v = stubs[b_idx];
    std::swap(stubs[b_idx], stubs.back());
    stubs.pop_back();
    adj[u][v] = adj[v][u] = 1;
  }
  return true;
}

}  // namespace detail

inline constexpr int regular_graph_max_retries = 1000;

/// Random simple r-regular graph on n nodes with weight 1/(r+1) on every
/// edge and on the diagonal. Dense degrees are generated as the complement
/// of a sparse regular graph.
inline MixingMatrix random_regular(std::size_t n, std::size_t r, Engine& rng) {
  if (n == 0) throw std::invalid_argument("random_regular: need at least one client");
  if (r >= n) throw GraphGenerationError("random_regular: degree must be below client count");
  if ((n * r) % 2 != 0) throw GraphGenerationError("random_regular: n * r must be even");

  const bool complement = r > (n - 1) / 2;
  const std::size_t sparse_r = complement ? n - 1 - r : r;

  std::vector<std::vector<char>> adj;
  bool ok = false;
  for (int attempt = 0; attempt < regular_graph_max_retries && !ok; ++attempt)
    ok = detail::try_pair_regular(n, sparse_r, rng, adj);
  if (!ok) throw GraphGenerationError("random_regular: pairing failed after bounded retries");

  const double w = 1.0 / static_cast<double>(r + 1);
  Matrix theta(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const bool edge = i != j && (complement ? !adj[i][j] : adj[i][j]);
      if (i == j || edge) theta(i, j) = w;
    }
  return MixingMatrix::validate(std::move(theta));
}

/// Per-row count of off-diagonal entries above `tol`.
inline std::vector<std::size_t> degree_profile(const Matrix& theta, double tol = 1e-12) {
  std::vector<std::size_t> deg(theta.rows(), 0);
  for (std::size_t i = 0; i < theta.rows(); ++i)
    for (std::size_t j = 0; j < theta.cols(); ++j)
      if (i != j && theta(i, j) > tol) ++deg[i];
  return deg;
}

/// (A + A^T) / 2.
inline Matrix symmetrize(const Matrix& a) {
  Matrix s = a + a.transpose();
  s *= 0.5;
  return s;
}

}  // namespace d2dfl

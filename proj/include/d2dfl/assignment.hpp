#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "d2dfl/matrix.hpp"
#include "d2dfl/mixing.hpp"

namespace d2dfl {

struct Assignment {
  std::vector<std::size_t> perm;  // row -> column
  double cost = 0.0;
};

namespace detail {

// Shortest augmenting path Hungarian method (square, minimization).
// Fills row potentials u, column potentials v with c_ij - u_i - v_j >= 0,
// tight on the returned matching.
inline std::vector<std::size_t> hungarian(const Matrix& cost, std::vector<double>& u, std::vector<double>& v) {
  const std::size_t n = cost.rows();
  constexpr double inf = std::numeric_limits<double>::infinity();
  u.assign(n + 1, 0.0);
  v.assign(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<double> minv(n + 1);
  std::vector<char> used(n + 1);

  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  // shift potentials to 0-based
  u.erase(u.begin());
  v.erase(v.begin());
  return row_to_col;
}

// Kuhn augmenting step on a bipartite graph given as an adjacency predicate.
// Tries to find a new column for `row`, never touching rows/cols flagged in
// `row_locked` / `col_locked`.
template <class Edge>
bool augment(std::size_t row, const Edge& edge, std::vector<std::size_t>& row_match,
             std::vector<std::size_t>& col_match, const std::vector<char>& row_locked,
             const std::vector<char>& col_locked, std::vector<char>& visited) {
  const std::size_t n = row_match.size();
  for (std::size_t c = 0; c < n; ++c) {
    if (col_locked[c] || visited[c] || !edge(row, c)) continue;
    visited[c] = 1;
    const std::size_t other = col_match[c];
    if (other == n || (!row_locked[other] &&
                       augment(other, edge, row_match, col_match, row_locked, col_locked, visited))) {
      row_match[row] = c;
      col_match[c] = row;
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Exact minimum-cost perfect assignment. Among all optimal assignments the
/// lexicographically smallest permutation is returned; entries whose reduced
/// cost is within `tie_tol` (relative to the cost scale) count as ties.
inline Assignment min_cost_assignment(const Matrix& cost, double tie_tol = 1e-10) {
  if (!cost.square()) throw std::invalid_argument("min_cost_assignment: cost matrix must be square");
  const std::size_t n = cost.rows();
  if (n == 0) return {};
  double scale = 1.0;
  for (double c : cost.data()) {
    if (!std::isfinite(c)) throw std::invalid_argument("min_cost_assignment: non-finite cost");
    scale = std::max(scale, std::abs(c));
  }
  const double tol = tie_tol * scale;

  std::vector<double> u, v;
  std::vector<std::size_t> row_match = detail::hungarian(cost, u, v);
  std::vector<std::size_t> col_match(n);
  for (std::size_t i = 0; i < n; ++i) col_match[row_match[i]] = i;

  // Every perfect matching on tight edges is optimal; walk rows in order and
  // pin each to its smallest column that still admits a tight perfect matching.
  auto tight = [&](std::size_t i, std::size_t j) { return cost(i, j) - u[i] - v[j] <= tol; };
  std::vector<char> row_locked(n, 0), col_locked(n, 0), visited(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (col_locked[j] || !tight(i, j)) continue;
      if (row_match[i] == j) break;
      // Try: move i to j, then re-home j's previous row using the column i frees.
      const auto saved_rows = row_match;
      const auto saved_cols = col_match;
      const std::size_t displaced = col_match[j];
      const std::size_t freed = row_match[i];
      row_match[i] = j;
      col_match[j] = i;
      col_match[freed] = n;
      row_locked[i] = 1;
      col_locked[j] = 1;
      std::fill(visited.begin(), visited.end(), 0);
      if (detail::augment(displaced, tight, row_match, col_match, row_locked, col_locked, visited)) {
        row_locked[i] = 0;
        col_locked[j] = 0;
        break;
      }
      row_locked[i] = 0;
      col_locked[j] = 0;
      row_match = saved_rows;
      col_match = saved_cols;
    }
    row_locked[i] = 1;
    col_locked[row_match[i]] = 1;
  }

  Assignment a;
  a.perm = std::move(row_match);
  for (std::size_t i = 0; i < n; ++i) a.cost += cost(i, a.perm[i]);
  return a;
}

/// Linear minimization oracle over the Birkhoff polytope.
inline PermutationAtom lmo(const Matrix& gradient) { return PermutationAtom{min_cost_assignment(gradient).perm}; }

/// Birkhoff-von Neumann decomposition of a doubly-stochastic matrix.
inline AtomicDecomposition birkhoff_decompose(const Matrix& theta, double eps = 1e-12) {
  if (auto viol = find_violation(theta, false, 1e-8)) throw MixingError(*viol);
  const std::size_t n = theta.rows();
  Matrix rest = theta;
  AtomicDecomposition out;
  double remaining = 1.0;
  while (remaining > eps) {
    std::vector<std::size_t> row_match(n, n), col_match(n, n);
    std::vector<char> none(n, 0), visited(n, 0);
    auto support = [&](std::size_t i, std::size_t j) { return rest(i, j) > eps; };
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      std::fill(visited.begin(), visited.end(), 0);
      ok = detail::augment(i, support, row_match, col_match, none, none, visited);
    }
    if (!ok) break;
    double w = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) w = std::min(w, rest(i, row_match[i]));
    for (std::size_t i = 0; i < n; ++i) rest(i, row_match[i]) -= w;
    out.atoms.push_back(PermutationAtom{row_match});
    out.weights.push_back(w);
    remaining -= w;
  }
  // Roundoff leftovers go to the heaviest atom so weights sum to one.
  if (!out.weights.empty()) {
    auto it = std::max_element(out.weights.begin(), out.weights.end());
    *it += remaining;
  }
  return out;
}

}  // namespace d2dfl

#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "d2dfl/assignment.hpp"
#include "d2dfl/channel.hpp"
#include "d2dfl/matrix.hpp"
#include "d2dfl/mixing.hpp"
#include "d2dfl/objective.hpp"

namespace d2dfl {

enum class StepRule { classic, line_search };

struct FwConfig {
  std::size_t max_iters = 2;
  StepRule step_rule = StepRule::line_search;
  std::size_t grid_points = 64;
  double tol = 1e-9;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("FwConfig: max_iters must be >= 1");
    if (step_rule == StepRule::line_search && grid_points < 2)
      throw std::invalid_argument("FwConfig: line search needs at least 2 grid points");
  }
};

struct FwResult {
  MixingMatrix theta = MixingMatrix::identity(1);
  /// Decomposition of the last iterate before symmetrization.
  AtomicDecomposition decomposition;
  /// g at the initial point and after every step (pre-symmetrization).
  std::vector<double> objective_trace;
  std::vector<double> fw_gaps;
  /// g at the returned symmetric matrix.
  double symmetrized_objective = 0.0;
  std::vector<std::string> warnings;
};

/// <gradient, theta - atom>; nonnegative when `atom` came from lmo(gradient).
inline double fw_gap(const Matrix& theta, const Matrix& gradient, const PermutationAtom& atom) {
  double g_theta = inner(gradient, theta);
  double g_atom = 0.0;
  for (std::size_t i = 0; i < atom.size(); ++i) g_atom += gradient(i, atom.perm[i]);
  return g_theta - g_atom;
}

template <class F>
concept SmoothObjective = requires(const F& f, const Matrix& x) {
  { f.value(x) } -> std::convertible_to<double>;
  { f.gradient(x) } -> std::convertible_to<Matrix>;
};

using IterateObserver = std::function<void(std::size_t iter, const Matrix& iterate)>;

namespace detail {

template <class F>
double value_or_inf(const F& f, const Matrix& x) {
  try {
    return f.value(x);
  } catch (const ZeroDenominatorError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

/// Frank-Wolfe over the Birkhoff polytope for any smooth objective. The final
/// iterate is symmetrized as (X + X^T)/2 and validated.
template <SmoothObjective F>
FwResult minimize_birkhoff(const MixingMatrix& initial, const F& f, const FwConfig& cfg,
                           const IterateObserver& observe = {}) {
  cfg.validate();
  Matrix x = initial.matrix();
  FwResult res;
  res.decomposition = birkhoff_decompose(x);
  double fx = f.value(x);
  res.objective_trace.push_back(fx);
  if (observe) observe(0, x);

  for (std::size_t t = 0; t < cfg.max_iters; ++t) {
    const Matrix grad = f.gradient(x);
    const PermutationAtom atom = lmo(grad);
    const double gap = fw_gap(x, grad, atom);
    res.fw_gaps.push_back(gap);
    if (gap <= cfg.tol) break;

    const Matrix s = atom.to_matrix();
    auto blend = [&](double gamma) { return (1.0 - gamma) * x + gamma * s; };

    double gamma = 0.0;
    Matrix next;
    double f_next = fx;
    if (cfg.step_rule == StepRule::classic) {
      gamma = 2.0 / (static_cast<double>(t) + 2.0);
      next = blend(gamma);
      f_next = f.value(next);
    } else {
      // gamma = 0 is on the grid, so the accepted value never exceeds fx.
      for (std::size_t k = 1; k < cfg.grid_points; ++k) {
        const double cand = static_cast<double>(k) / static_cast<double>(cfg.grid_points - 1);
        Matrix y = blend(cand);
        const double fy = detail::value_or_inf(f, y);
        if (fy < f_next) {
          f_next = fy;
          gamma = cand;
          next = std::move(y);
        }
      }
      if (gamma == 0.0) {
        res.warnings.push_back("line search found no decrease at iteration " + std::to_string(t));
        break;
      }
    }

    x = std::move(next);
    fx = f_next;
    res.decomposition.blend(atom, gamma);
    res.decomposition.prune();
    res.objective_trace.push_back(fx);
    if (observe) observe(t + 1, x);
  }

  res.theta = MixingMatrix::validate(symmetrize(x));
  res.symmetrized_objective = f.value(res.theta.matrix());
  return res;
}

/// g(theta) from the topology-learning objective, bound to this round's inputs.
struct TopologyObjective {
  const SuccessMatrix& p;
  const RepStats& stats;
  const ObjectiveParams& params;

  double value(const Matrix& theta) const { return g_objective(theta, p, stats, params); }
  Matrix gradient(const Matrix& theta) const { return g_gradient(theta, p, stats, params); }
};

inline FwResult frank_wolfe(const MixingMatrix& initial, const SuccessMatrix& p, const RepStats& stats,
                            const ObjectiveParams& obj, const FwConfig& cfg, const IterateObserver& observe = {}) {
  stats.validate();
  obj.validate();
  return minimize_birkhoff(initial, TopologyObjective{p, stats, obj}, cfg, observe);
}

}  // namespace d2dfl

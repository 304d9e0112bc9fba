#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "d2dfl/matrix.hpp"
#include "d2dfl/mixing.hpp"
#include "d2dfl/solver.hpp"

namespace d2dfl {

/// Label-only topology surrogate ignoring link reliability:
/// (1/N) sum_i || sum_j theta_ij pi_j - pi_bar ||^2 over client label
/// distributions pi_j.
struct LabelSkewObjective {
  const Matrix& hist;  // N x C

  std::vector<double> global() const {
    std::vector<double> g(hist.cols(), 0.0);
    for (std::size_t j = 0; j < hist.rows(); ++j)
      for (std::size_t c = 0; c < hist.cols(); ++c) g[c] += hist(j, c);
    for (double& v : g) v /= static_cast<double>(hist.rows());
    return g;
  }

  Matrix residual(const Matrix& theta) const {
    const std::size_t n = hist.rows(), C = hist.cols();
    const auto gbar = global();
    Matrix r(n, C);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < C; ++c) {
        double s = -gbar[c];
        for (std::size_t j = 0; j < n; ++j) s += theta(i, j) * hist(j, c);
        r(i, c) = s;
      }
    return r;
  }

  double value(const Matrix& theta) const {
    const Matrix r = residual(theta);
    double s = 0.0;
    for (double v : r.data()) s += v * v;
    return s / static_cast<double>(hist.rows());
  }

  Matrix gradient(const Matrix& theta) const {
    const std::size_t n = hist.rows(), C = hist.cols();
    const Matrix r = residual(theta);
    Matrix g(n, n);
    const double c2 = 2.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += r(i, c) * hist(j, c);
        g(i, j) = c2 * s;
      }
    return g;
  }
};

/// Label-histogram baseline topology ("stl_fw_like"): Frank-Wolfe from the
/// identity on LabelSkewObjective with at most `degree` steps.
inline MixingMatrix stl_fw_baseline(const Matrix& label_hist, std::size_t degree, const FwConfig& base = {}) {
  for (std::size_t i = 0; i < label_hist.rows(); ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < label_hist.cols(); ++c) {
      if (label_hist(i, c) < 0.0) throw std::invalid_argument("stl_fw_baseline: negative histogram entry");
      s += label_hist(i, c);
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("stl_fw_baseline: histogram rows must sum to 1");
  }
  FwConfig cfg = base;
  cfg.max_iters = degree;
  return minimize_birkhoff(MixingMatrix::identity(label_hist.rows()), LabelSkewObjective{label_hist}, cfg).theta;
}

}  // namespace d2dfl

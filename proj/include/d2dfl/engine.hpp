#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "d2dfl/channel.hpp"
#include "d2dfl/matrix.hpp"
#include "d2dfl/rng.hpp"

namespace d2dfl {

/// One stochastic gradient per client, all of the same length.
struct GradientBundle {
  std::vector<std::vector<double>> grads;

  std::size_t clients() const noexcept { return grads.size(); }
  std::size_t dim() const noexcept { return grads.empty() ? 0 : grads.front().size(); }

  std::vector<double> mean() const {
    std::vector<double> m(dim(), 0.0);
    for (const auto& g : grads)
      for (std::size_t k = 0; k < m.size(); ++k) m[k] += g[k];
    for (double& v : m) v /= static_cast<double>(clients());
    return m;
  }

  double max_norm() const {
    double best = 0.0;
    for (const auto& g : grads) {
      double s = 0.0;
      for (double v : g) s += v * v;
      best = std::max(best, std::sqrt(s));
    }
    return best;
  }
};

/// Erasure masks for ordered pairs (i receives from j). Pairs never sampled
/// are empty; the diagonal is always all-ones.
class MaskSet {
 public:
  MaskSet(std::size_t clients, std::size_t dim) : n_(clients), d_(dim), masks_(clients * clients) {
    for (std::size_t i = 0; i < n_; ++i) masks_[i * n_ + i] = Mask(d_, 1);
  }

  std::size_t clients() const noexcept { return n_; }
  std::size_t dim() const noexcept { return d_; }

  void set(std::size_t i, std::size_t j, Mask m) {
    if (m.size() != d_) throw std::invalid_argument("MaskSet: mask length mismatch");
    if (i == j && std::find(m.begin(), m.end(), std::uint8_t{0}) != m.end())
      throw std::invalid_argument("MaskSet: self mask must be all-ones");
    masks_[i * n_ + j] = std::move(m);
  }
  const Mask& operator()(std::size_t i, std::size_t j) const noexcept { return masks_[i * n_ + j]; }
  bool has(std::size_t i, std::size_t j) const noexcept { return !masks_[i * n_ + j].empty(); }

 private:
  std::size_t n_;
  std::size_t d_;
  std::vector<Mask> masks_;
};

/// Masks for every active off-diagonal link of theta; link (i, j) draws from
/// its own stream keyed by (seed, round, i, j).
inline MaskSet sample_link_masks(const Matrix& theta, const SuccessMatrix& p, std::size_t dim, std::uint64_t seed,
                                 std::uint64_t round) {
  const std::size_t n = theta.rows();
  MaskSet masks(n, dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || theta(i, j) == 0.0) continue;
      Engine rng = make_stream(seed, Purpose::mask, round, i, j);
      masks.set(i, j, sample_mask(p(i, j), dim, rng));
    }
  return masks;
}

/// w_i <- w_i - eta * sum_j theta_ij (grad_j .* mask_ij)
inline void masked_aggregate(std::vector<std::vector<double>>& w, const GradientBundle& grads, const Matrix& theta,
                             const MaskSet& masks, double eta) {
  const std::size_t n = w.size();
  const std::size_t d = grads.dim();
  if (grads.clients() != n || theta.rows() != n || masks.clients() != n || masks.dim() != d)
    throw std::invalid_argument("masked_aggregate: dimension mismatch");
  std::vector<double> step(d);
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i].size() != d) throw std::invalid_argument("masked_aggregate: model size mismatch");
    std::fill(step.begin(), step.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double t = theta(i, j);
      if (t == 0.0) continue;
      if (!masks.has(i, j)) throw std::invalid_argument("masked_aggregate: missing mask for an active link");
      const Mask& m = masks(i, j);
      const auto& g = grads.grads[j];
      for (std::size_t k = 0; k < d; ++k)
        if (m[k]) step[k] += t * g[k];
    }
    for (std::size_t k = 0; k < d; ++k) w[i][k] -= eta * step[k];
  }
}

/// Expected neighbourhood discrepancy under independent Bernoulli masks:
/// a mean term (theta .* p aggregation vs. the plain average) plus the mask
/// variance sum_j theta_ij^2 g_j^2 p_ij (1 - p_ij), per component.
inline double h_bar_exact(const Matrix& theta, const SuccessMatrix& p, const GradientBundle& grads) {
  const std::size_t n = theta.rows();
  const std::size_t d = grads.dim();
  const std::vector<double> gbar = grads.mean();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      double mean = -gbar[k];
      double var = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double t = theta(i, j);
        const double pij = p(i, j);
        const double g = grads.grads[j][k];
        mean += t * pij * g;
        var += t * t * g * g * pij * (1.0 - pij);
      }
      total += mean * mean + var;
    }
  return total / static_cast<double>(n);
}

struct MonteCarloEstimate {
  double estimate = 0.0;
  double std_err = 0.0;
};

inline MonteCarloEstimate h_bar_monte_carlo(const Matrix& theta, const SuccessMatrix& p, const GradientBundle& grads,
                                            std::size_t samples, Engine& rng) {
  if (samples < 1) throw std::invalid_argument("h_bar_monte_carlo: need at least one sample");
  const std::size_t n = theta.rows();
  const std::size_t d = grads.dim();
  const std::vector<double> gbar = grads.mean();
  std::vector<double> acc(d);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double x = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) acc[k] = -gbar[k];
      for (std::size_t j = 0; j < n; ++j) {
        const double t = theta(i, j);
        if (t == 0.0) continue;
        const Mask m = sample_mask(p(i, j), d, rng);
        for (std::size_t k = 0; k < d; ++k)
          if (m[k]) acc[k] += t * grads.grads[j][k];
      }
      for (double v : acc) x += v * v;
    }
    x /= static_cast<double>(n);
    sum += x;
    sum_sq += x * x;
  }
  const double ns = static_cast<double>(samples);
  const double mean = sum / ns;
  const double var = samples > 1 ? std::max(0.0, (sum_sq - ns * mean * mean) / (ns - 1.0)) : 0.0;
  return {mean, std::sqrt(var / ns)};
}

/// Upper bound on the discrepancy: masks replaced by their means, plus
/// (d L^2 / N) sum_ij theta_ij^2 p_ij (1 - p_ij).
inline double discrepancy_upper_bound(const Matrix& theta, const SuccessMatrix& p, const GradientBundle& grads, double L) {
  const std::size_t n = theta.rows();
  const std::size_t d = grads.dim();
  const std::vector<double> gbar = grads.mean();
  double first = 0.0, link_var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      double mean = -gbar[k];
      for (std::size_t j = 0; j < n; ++j) mean += theta(i, j) * p(i, j) * grads.grads[j][k];
      first += mean * mean;
    }
    for (std::size_t j = 0; j < n; ++j) link_var += theta(i, j) * theta(i, j) * p(i, j) * (1.0 - p(i, j));
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return first * inv_n + static_cast<double>(d) * L * L * inv_n * link_var;
}

class InvalidStepsizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-convex convergence bound on min_t ||grad f(w_bar_t)||^2 for step
/// eta / sqrt(T). Requires sqrt(T) > beta * eta.
inline double convergence_bound(double f0, double f_star, double beta, double xi, double tau, double eta,
                             std::size_t T) {
  const double rt = std::sqrt(static_cast<double>(T));
  const double be = beta * eta;
  if (!(rt > be)) throw InvalidStepsizeError("convergence_bound: need sqrt(T) > beta * eta");
  const double denom = rt - be;
  return 2.0 * (f0 - f_star) / (eta * denom) + (be + rt) / denom * xi * xi + (1.0 + be * be) * (be + rt) / denom * tau;
}

}  // namespace d2dfl

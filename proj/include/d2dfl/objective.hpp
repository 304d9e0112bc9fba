#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "d2dfl/channel.hpp"
#include "d2dfl/matrix.hpp"

namespace d2dfl {

/// Per-client Gaussian parameters of the representation layer, one row per
/// client and one column per representation dimension.
struct RepStats {
  Matrix mu;
  Matrix sigma;

  std::size_t clients() const noexcept { return mu.rows(); }
  std::size_t dims() const noexcept { return mu.cols(); }

  void validate() const {
    if (mu.rows() != sigma.rows() || mu.cols() != sigma.cols())
      throw std::invalid_argument("RepStats: mu and sigma shapes differ");
    for (double s : sigma.data())
      if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("RepStats: sigma must be positive");
    for (double m : mu.data())
      if (!std::isfinite(m)) throw std::invalid_argument("RepStats: mu must be finite");
  }
};

struct ObjectiveParams {
  double lambda = 0.001;
  std::size_t model_dim = 1;
  std::size_t rep_dim = 1;

  void validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("ObjectiveParams: lambda must be nonnegative");
    if (rep_dim < 1 || model_dim < rep_dim)
      throw std::invalid_argument("ObjectiveParams: need model_dim >= rep_dim >= 1");
  }
};

class ZeroDenominatorError : public std::runtime_error {
 public:
  explicit ZeroDenominatorError(std::size_t client)
      : std::runtime_error("client " + std::to_string(client) + " has no reliable mixing mass"),
        client_(client) {}
  std::size_t client() const noexcept { return client_; }

 private:
  std::size_t client_;
};

struct Aggregates {
  double mu_bar = 0.0;
  double mu_tilde = 0.0;
  double sigma_bar = 0.0;
  double sigma_tilde = 0.0;
  /// sum_j (theta_ij p_ij)^2 sigma_j^2
  double denom = 0.0;
};

/// Population and link-weighted sums for client `i`, representation dim `k`.
inline Aggregates aggregates(const Matrix& theta, const SuccessMatrix& p, const RepStats& stats, std::size_t i,
                             std::size_t k) {
  const std::size_t n = theta.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  Aggregates a;
  for (std::size_t j = 0; j < n; ++j) {
    const double w = theta(i, j) * p(i, j);
    const double mu = stats.mu(j, k);
    const double sg = stats.sigma(j, k);
    a.mu_bar += mu;
    a.sigma_bar += sg;
    a.mu_tilde += w * mu;
    a.sigma_tilde += w * sg;
    a.denom += w * w * sg * sg;
  }
  a.mu_bar *= inv_n;
  a.sigma_bar *= inv_n;
  if (!(a.denom > 0.0) || !(a.sigma_tilde > 0.0)) throw ZeroDenominatorError(i);
  return a;
}

/// Component-wise average relative entropy surrogate for dimension k,
/// evaluated in closed form as printed (log term on aggregated standard
/// deviations, quadratic terms over the squared-weight denominator).
inline double h_hat_k(const Matrix& theta, const SuccessMatrix& p, const RepStats& stats, std::size_t k) {
  const std::size_t n = theta.rows();
  double pop_var = 0.0;
  for (std::size_t j = 0; j < n; ++j) pop_var += stats.sigma(j, k) * stats.sigma(j, k);
  pop_var /= static_cast<double>(n) * static_cast<double>(n);

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Aggregates a = aggregates(theta, p, stats, i, k);
    const double shift = a.mu_bar - a.mu_tilde;
    total += std::log(a.sigma_tilde / a.sigma_bar) + pop_var / (2.0 * a.denom) +
             shift * shift / (2.0 * a.denom) - 0.5;
  }
  return total / static_cast<double>(n);
}

/// (d * lambda / N) * sum_ij theta_ij^2 p_ij (1 - p_ij)
inline double variance_penalty(const Matrix& theta, const SuccessMatrix& p, const ObjectiveParams& params) {
  const std::size_t n = theta.rows();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double t = theta(i, j);
      s += t * t * p(i, j) * (1.0 - p(i, j));
    }
  return static_cast<double>(params.model_dim) * params.lambda / static_cast<double>(n) * s;
}

/// Topology-learning objective g(theta): discrepancy surrogate summed over
/// representation dims plus the link-variance penalty.
inline double g_objective(const Matrix& theta, const SuccessMatrix& p, const RepStats& stats,
                          const ObjectiveParams& params) {
  double g = 0.0;
  for (std::size_t k = 0; k < stats.dims(); ++k) g += h_hat_k(theta, p, stats, k);
  return g + variance_penalty(theta, p, params);
}

inline Matrix variance_penalty_gradient(const Matrix& theta, const SuccessMatrix& p, const ObjectiveParams& params) {
  const std::size_t n = theta.rows();
  const double c = 2.0 * static_cast<double>(params.model_dim) * params.lambda / static_cast<double>(n);
  Matrix grad(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) grad(i, j) = c * theta(i, j) * p(i, j) * (1.0 - p(i, j));
  return grad;
}

/// Analytic gradient of g with respect to every theta_ij.
inline Matrix g_gradient(const Matrix& theta, const SuccessMatrix& p, const RepStats& stats,
                         const ObjectiveParams& params) {
  const std::size_t n = theta.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix grad = variance_penalty_gradient(theta, p, params);

  for (std::size_t k = 0; k < stats.dims(); ++k) {
    double pop_var = 0.0;
    for (std::size_t j = 0; j < n; ++j) pop_var += stats.sigma(j, k) * stats.sigma(j, k);
    pop_var *= inv_n * inv_n;

    for (std::size_t i = 0; i < n; ++i) {
      const Aggregates a = aggregates(theta, p, stats, i, k);
      const double shift = a.mu_bar - a.mu_tilde;
      // d/dtheta_ij of log(sigma_tilde), of (pop_var + shift^2) / (2 denom), and of shift^2 via mu_tilde.
      const double quad_coeff = (pop_var + shift * shift) / (2.0 * a.denom * a.denom);
      for (std::size_t j = 0; j < n; ++j) {
        const double pij = p(i, j);
        const double sg = stats.sigma(j, k);
        const double d_sigma_tilde = pij * sg;
        const double d_mu_tilde = pij * stats.mu(j, k);
        const double d_denom = 2.0 * theta(i, j) * pij * pij * sg * sg;
        const double dh = d_sigma_tilde / a.sigma_tilde - quad_coeff * d_denom - shift * d_mu_tilde / a.denom;
        grad(i, j) += inv_n * dh;
      }
    }
  }
  return grad;
}

/// Textbook KL( N(mu_tilde, denom) || N(mu_bar, pop_var) ) per dimension,
/// for comparing against the closed form used by the optimizer.
inline double textbook_gaussian_kl_k(const Matrix& theta, const SuccessMatrix& p, const RepStats& stats,
                                     std::size_t k) {
  const std::size_t n = theta.rows();
  double pop_var = 0.0;
  for (std::size_t j = 0; j < n; ++j) pop_var += stats.sigma(j, k) * stats.sigma(j, k);
  pop_var /= static_cast<double>(n) * static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Aggregates a = aggregates(theta, p, stats, i, k);
    const double shift = a.mu_tilde - a.mu_bar;
    total += 0.5 * (std::log(pop_var / a.denom) + (a.denom + shift * shift) / pop_var - 1.0);
  }
  return total / static_cast<double>(n);
}

}  // namespace d2dfl

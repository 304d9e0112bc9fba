#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "d2dfl/matrix.hpp"
#include "d2dfl/rng.hpp"

namespace d2dfl {

/// input -> tanh hidden -> (mu, softplus sigma) bottleneck -> sampled
/// representation mu + sigma * eps -> softmax head.
struct ModelLayout {
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 1;
  std::size_t rep_dim = 1;
  std::size_t classes = 2;

  std::size_t param_count() const noexcept {
    return (input_dim + 1) * hidden_dim + (hidden_dim + 1) * 2 * rep_dim + (rep_dim + 1) * classes;
  }

  // Offsets into the flat parameter vector: W1 (h x n), b1, W2 (2m x h), b2, W3 (C x m), b3.
  std::size_t w1() const noexcept { return 0; }
  std::size_t b1() const noexcept { return hidden_dim * input_dim; }
  std::size_t w2() const noexcept { return b1() + hidden_dim; }
  std::size_t b2() const noexcept { return w2() + 2 * rep_dim * hidden_dim; }
  std::size_t w3() const noexcept { return b2() + 2 * rep_dim; }
  std::size_t b3() const noexcept { return w3() + classes * rep_dim; }

  friend bool operator==(const ModelLayout&, const ModelLayout&) = default;
};

struct ClientModel {
  ModelLayout layout;
  std::vector<double> w;

  static ClientModel zeros(const ModelLayout& layout) { return {layout, std::vector<double>(layout.param_count(), 0.0)}; }

  /// Glorot-uniform weights, zero biases.
  static ClientModel initialize(const ModelLayout& layout, Engine& rng) {
    ClientModel m = zeros(layout);
    auto fill = [&](std::size_t off, std::size_t fan_out, std::size_t fan_in) {
      const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> u(-a, a);
      for (std::size_t k = 0; k < fan_out * fan_in; ++k) m.w[off + k] = u(rng);
    };
    fill(layout.w1(), layout.hidden_dim, layout.input_dim);
    fill(layout.w2(), 2 * layout.rep_dim, layout.hidden_dim);
    fill(layout.w3(), layout.classes, layout.rep_dim);
    return m;
  }
};

/// A minibatch as views into a dataset: feature rows and labels.
struct Batch {
  std::vector<std::span<const double>> x;
  std::vector<int> y;

  std::size_t size() const noexcept { return y.size(); }
};

struct LocalResult {
  std::vector<double> gradient;
  /// Batch-mean bottleneck parameters, one entry per representation dim.
  std::vector<double> mu;
  std::vector<double> sigma;
  double loss = 0.0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double softplus(double s) { return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))); }
inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

/// Mean cross-entropy and its exact gradient over a batch, with the
/// reparameterization noise supplied explicitly (one row of `eps` per example).
inline LocalResult loss_and_gradient(const ModelLayout& L, std::span<const double> w, const Batch& batch,
                                     const Matrix& eps) {
  if (batch.size() == 0) throw std::invalid_argument("loss_and_gradient: empty batch");
  if (w.size() != L.param_count()) throw std::invalid_argument("loss_and_gradient: parameter size mismatch");
  if (eps.rows() != batch.size() || eps.cols() != L.rep_dim)
    throw std::invalid_argument("loss_and_gradient: noise shape mismatch");

  const std::size_t n = L.input_dim, h = L.hidden_dim, m = L.rep_dim, C = L.classes;
  LocalResult out;
  out.gradient.assign(L.param_count(), 0.0);
  out.mu.assign(m, 0.0);
  out.sigma.assign(m, 0.0);
  auto& g = out.gradient;

  std::vector<double> a1(h), z2(2 * m), sg(m), phi(m), z3(C), prob(C);
  std::vector<double> dz3(C), dphi(m), dz2(2 * m), da1(h);

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto x = batch.x[b];
    const int label = batch.y[b];
    if (x.size() != n) throw std::invalid_argument("loss_and_gradient: feature size mismatch");
    if (label < 0 || static_cast<std::size_t>(label) >= C)
      throw std::invalid_argument("loss_and_gradient: label out of range");

    for (std::size_t r = 0; r < h; ++r) {
      double z = w[L.b1() + r];
      const double* row = &w[L.w1() + r * n];
      for (std::size_t c = 0; c < n; ++c) z += row[c] * x[c];
      a1[r] = std::tanh(z);
    }
    for (std::size_t r = 0; r < 2 * m; ++r) {
      double z = w[L.b2() + r];
      const double* row = &w[L.w2() + r * h];
      for (std::size_t c = 0; c < h; ++c) z += row[c] * a1[c];
      z2[r] = z;
    }
    for (std::size_t k = 0; k < m; ++k) {
      sg[k] = softplus(z2[m + k]);
      phi[k] = z2[k] + sg[k] * eps(b, k);
      out.mu[k] += z2[k];
      out.sigma[k] += sg[k];
    }
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < C; ++r) {
      double z = w[L.b3() + r];
      const double* row = &w[L.w3() + r * m];
      for (std::size_t c = 0; c < m; ++c) z += row[c] * phi[c];
      z3[r] = z;
      zmax = std::max(zmax, z);
    }
    double zsum = 0.0;
    for (std::size_t r = 0; r < C; ++r) {
      prob[r] = std::exp(z3[r] - zmax);
      zsum += prob[r];
    }
    for (std::size_t r = 0; r < C; ++r) prob[r] /= zsum;
    out.loss += -(z3[static_cast<std::size_t>(label)] - zmax - std::log(zsum));

    // backward
    for (std::size_t r = 0; r < C; ++r) dz3[r] = prob[r] - (static_cast<std::size_t>(label) == r ? 1.0 : 0.0);
    std::fill(dphi.begin(), dphi.end(), 0.0);
    for (std::size_t r = 0; r < C; ++r) {
      g[L.b3() + r] += dz3[r];
      const double* row = &w[L.w3() + r * m];
      double* grow = &g[L.w3() + r * m];
      for (std::size_t c = 0; c < m; ++c) {
        grow[c] += dz3[r] * phi[c];
        dphi[c] += row[c] * dz3[r];
      }
    }
    for (std::size_t k = 0; k < m; ++k) {
      dz2[k] = dphi[k];
      dz2[m + k] = dphi[k] * eps(b, k) * sigmoid(z2[m + k]);
    }
    std::fill(da1.begin(), da1.end(), 0.0);
    for (std::size_t r = 0; r < 2 * m; ++r) {
      g[L.b2() + r] += dz2[r];
      const double* row = &w[L.w2() + r * h];
      double* grow = &g[L.w2() + r * h];
      for (std::size_t c = 0; c < h; ++c) {
        grow[c] += dz2[r] * a1[c];
        da1[c] += row[c] * dz2[r];
      }
    }
    for (std::size_t r = 0; r < h; ++r) {
      const double dz1 = da1[r] * (1.0 - a1[r] * a1[r]);
      g[L.b1() + r] += dz1;
      double* grow = &g[L.w1() + r * n];
      for (std::size_t c = 0; c < n; ++c) grow[c] += dz1 * x[c];
    }
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (double& v : g) v *= inv_b;
  for (double& v : out.mu) v *= inv_b;
  for (double& v : out.sigma) v *= inv_b;
  out.loss *= inv_b;
  if (!std::isfinite(out.loss)) throw DivergenceError("non-finite training loss");
  return out;
}

/// Standard normal reparameterization noise, one stream per example.
inline Matrix draw_reparam_noise(std::size_t batch_size, std::size_t rep_dim, std::uint64_t seed, std::uint64_t round,
                                 std::uint64_t client) {
  Matrix eps(batch_size, rep_dim);
  for (std::size_t b = 0; b < batch_size; ++b) {
    Engine rng = make_stream(seed, Purpose::reparam, round, client, b);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < rep_dim; ++k) eps(b, k) = normal(rng);
  }
  return eps;
}

inline LocalResult local_gradient(const ClientModel& model, const Batch& batch, std::uint64_t seed,
                                  std::uint64_t round, std::uint64_t client) {
  const Matrix eps = draw_reparam_noise(batch.size(), model.layout.rep_dim, seed, round, client);
  return loss_and_gradient(model.layout, model.w, batch, eps);
}

/// Class prediction using the bottleneck mean as the representation.
inline int predict(const ModelLayout& L, std::span<const double> w, std::span<const double> x) {
  const std::size_t n = L.input_dim, h = L.hidden_dim, m = L.rep_dim, C = L.classes;
  std::vector<double> a1(h), mu(m);
  for (std::size_t r = 0; r < h; ++r) {
    double z = w[L.b1() + r];
    for (std::size_t c = 0; c < n; ++c) z += w[L.w1() + r * n + c] * x[c];
    a1[r] = std::tanh(z);
  }
  for (std::size_t r = 0; r < m; ++r) {
    double z = w[L.b2() + r];
    for (std::size_t c = 0; c < h; ++c) z += w[L.w2() + r * h + c] * a1[c];
    mu[r] = z;
  }
  int best = 0;
  double best_z = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < C; ++r) {
    double z = w[L.b3() + r];
    for (std::size_t c = 0; c < m; ++c) z += w[L.w3() + r * m + c] * mu[c];
    if (z > best_z) {
      best_z = z;
      best = static_cast<int>(r);
    }
  }
  return best;
}

}  // namespace d2dfl

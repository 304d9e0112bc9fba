#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "d2dfl/matrix.hpp"
#include "d2dfl/mixing.hpp"
#include "d2dfl/rng.hpp"

namespace d2dfl {

/// D2D link parameters, all linear units.
struct ChannelParams {
  double tx_power_w = 0.01;
  double noise_power_w = 1.2589254117941662e-20;  // -169 dBm
  double decode_threshold = 1.0;                  // 0 dB
  double bandwidth_hz = 5e6;
  double package_bits = 1.2e6 * 8.0;
  double region_side_m = 1000.0;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument(std::string("channel parameter must be positive: ") + name);
    };
    positive(tx_power_w, "tx_power");
    positive(noise_power_w, "noise_power");
    positive(decode_threshold, "decode_threshold");
    positive(bandwidth_hz, "bandwidth");
    positive(package_bits, "package_bits");
    positive(region_side_m, "region_side");
  }
};

inline double dbm_to_watts(double dbm) { return std::pow(10.0, dbm / 10.0) * 1e-3; }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Placement {
  std::vector<Point> positions;
  Matrix distances;

  std::size_t size() const noexcept { return positions.size(); }

  static Placement from_positions(std::vector<Point> pts) {
    Placement p;
    const std::size_t n = pts.size();
    p.distances = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y);
        p.distances(i, j) = d;
        p.distances(j, i) = d;
      }
    p.positions = std::move(pts);
    return p;
  }
};

/// Uniform placement in [0, side]^2. With `min_separation` > 0 points are
/// drawn by sequential rejection so no pair is closer than that distance.
inline Placement random_placement(std::size_t n, double side, Engine& rng, double min_separation = 0.0) {
  std::uniform_real_distribution<double> coord(0.0, side);
  constexpr int max_attempts_per_point = 100000;
  std::vector<Point> pts;
  pts.reserve(n);
  while (pts.size() < n) {
    int attempts = 0;
    for (;;) {
      if (++attempts > max_attempts_per_point)
        throw std::runtime_error("random_placement: cannot satisfy minimum separation");
      Point c{coord(rng), coord(rng)};
      bool ok = true;
      for (const Point& q : pts)
        if (std::hypot(c.x - q.x, c.y - q.y) < min_separation) {
          ok = false;
          break;
        }
      if (ok) {
        pts.push_back(c);
        break;
      }
    }
  }
  return Placement::from_positions(std::move(pts));
}

/// Probability that a unit-mean Rayleigh-faded link clears the decoding
/// threshold: exp(-gamma_th * sigma^2 * dist^2 / P_tx).
inline double success_probability(double dist, const ChannelParams& params) {
  if (dist == 0.0) return 1.0;
  return std::exp(-params.decode_threshold * params.noise_power_w * dist * dist / params.tx_power_w);
}

/// Pairwise success probabilities; symmetric with unit diagonal.
struct SuccessMatrix {
  Matrix p;

  std::size_t size() const noexcept { return p.rows(); }
  double operator()(std::size_t i, std::size_t j) const noexcept { return p(i, j); }

  /// All-ones matrix (reliable links).
  static SuccessMatrix reliable(std::size_t n) { return {Matrix(n, n, 1.0)}; }
};

inline SuccessMatrix build_success_matrix(const Placement& placement, const ChannelParams& params) {
  const std::size_t n = placement.size();
  SuccessMatrix s{Matrix(n, n, 1.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) s.p(i, j) = success_probability(placement.distances(i, j), params);
  return s;
}

/// Realized unit-mean exponential fading power per ordered link for one round.
struct FadingDraw {
  Matrix h;
};

/// Each ordered link (i, j) gets its own stream keyed by (seed, round, i, j),
/// so a link's draw does not depend on which other links are active.
inline FadingDraw sample_fading(std::size_t n, std::uint64_t seed, std::uint64_t round) {
  FadingDraw f{Matrix(n, n, 1.0)};
  std::exponential_distribution<double> exp1(1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      Engine rng = make_stream(seed, Purpose::fading, round, i, j);
      f.h(i, j) = exp1(rng);
    }
  return f;
}

/// Component-wise erasure mask (1 = received).
using Mask = std::vector<std::uint8_t>;

inline Mask sample_mask(double p, std::size_t d, Engine& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("sample_mask: p outside [0, 1]");
  Mask m(d, 1);
  if (p >= 1.0) return m;
  if (p <= 0.0) {
    std::fill(m.begin(), m.end(), std::uint8_t{0});
    return m;
  }
  std::bernoulli_distribution bit(p);
  for (auto& b : m) b = bit(rng) ? 1 : 0;
  return m;
}

/// Squared distance between the constant vector p*1 and the mask.
inline double mask_deviation_sq(double p, const Mask& m) {
  double s = 0.0;
  for (auto b : m) {
    const double e = p - static_cast<double>(b);
    s += e * e;
  }
  return s;
}

class DegenerateLinkError : public std::runtime_error {
 public:
  DegenerateLinkError(std::size_t i, std::size_t j)
      : std::runtime_error("degenerate link (" + std::to_string(i) + ", " + std::to_string(j) +
                           "): zero SNR gives zero rate"),
        from(i),
        to(j) {}
  std::size_t from;
  std::size_t to;
};

/// Shannon rate of link (i, j) in bits/s under the realized fading.
inline double link_rate(std::size_t i, std::size_t j, const Placement& placement, const FadingDraw& fading,
                        const ChannelParams& params) {
  const double dist = placement.distances(i, j);
  const double snr = params.tx_power_w * fading.h(i, j) / (dist * dist) / params.noise_power_w;
  if (!(snr > 0.0)) throw DegenerateLinkError(i, j);
  return params.bandwidth_hz * std::log2(1.0 + snr);
}

/// Synchronous round latency: the slowest active off-diagonal link.
inline double round_latency(const Matrix& theta, const Placement& placement, const FadingDraw& fading,
                            const ChannelParams& params) {
  const std::size_t n = theta.rows();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || theta(i, j) == 0.0) continue;
      const double rate = link_rate(i, j, placement, fading, params);
      if (!(rate > 0.0)) throw DegenerateLinkError(i, j);
      worst = std::max(worst, params.package_bits / rate);
    }
  return worst;
}

}  // namespace d2dfl

#pragma once

// Self-checks on small random instances: each compares a library routine
// against an independent oracle (enumeration, brute force, finite
// differences, Monte Carlo). Used by `d2dfl check` and the acceptance suite.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "d2dfl/assignment.hpp"
#include "d2dfl/channel.hpp"
#include "d2dfl/engine.hpp"
#include "d2dfl/experiment.hpp"
#include "d2dfl/mixing.hpp"
#include "d2dfl/model.hpp"
#include "d2dfl/objective.hpp"
#include "d2dfl/solver.hpp"
#include "d2dfl/sweep.hpp"

namespace d2dfl::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Times `body`, which fills in passed/detail.
inline CheckResult timed(std::string name, const std::function<void(CheckResult&)>& body) {
  CheckResult r;
  r.name = std::move(name);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---- random instances ------------------------------------------------------

/// Symmetrized convex combination of random permutations with Dirichlet(1)
/// weights: a random point of the symmetric part of the Birkhoff polytope.
inline Matrix random_mixing(std::size_t n, Engine& rng, std::size_t atoms = 0) {
  if (atoms == 0) atoms = n + 1;
  std::gamma_distribution<double> gamma(1.0, 1.0);
  std::vector<double> w(atoms);
  double total = 0.0;
  for (double& v : w) total += (v = gamma(rng));
  Matrix m(n, n);
  std::vector<std::size_t> perm(n);
  for (std::size_t a = 0; a < atoms; ++a) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i) m(i, perm[i]) += w[a] / total;
  }
  return symmetrize(m);
}

inline SuccessMatrix random_success(std::size_t n, Engine& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  SuccessMatrix s{Matrix(n, n, 1.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s.p(i, j) = s.p(j, i) = u(rng);
  return s;
}

inline GradientBundle random_gradients(std::size_t n, std::size_t d, Engine& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  GradientBundle b;
  b.grads.assign(n, std::vector<double>(d));
  for (auto& v : b.grads)
    for (double& x : v) x = g(rng);
  return b;
}

inline RepStats random_stats(std::size_t n, std::size_t m, Engine& rng) {
  std::normal_distribution<double> mu(0.0, 1.0);
  std::uniform_real_distribution<double> sg(0.3, 2.0);
  RepStats s{Matrix(n, m), Matrix(n, m)};
  for (double& v : s.mu.data()) v = mu(rng);
  for (double& v : s.sigma.data()) v = sg(rng);
  return s;
}

// ---- individual checks -----------------------------------------------------

/// E||p 1 - m||^2 = d p (1 - p): Monte Carlo within 3 standard errors for
/// every (p, d), plus exact enumeration of all masks for d <= 4.
inline CheckResult mask_variance_identity(std::size_t draws, std::uint64_t seed = 1) {
  return timed("mask variance identity", [&](CheckResult& r) {
    std::ostringstream msg;
    bool ok = true;
    for (double p : {0.1, 0.5, 0.9})
      for (std::size_t d : {std::size_t{1}, std::size_t{4}, std::size_t{16}}) {
        const double expected = static_cast<double>(d) * p * (1.0 - p);
        Engine rng = make_stream(seed, Purpose::sampling, d, static_cast<std::uint64_t>(p * 1000));
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t s = 0; s < draws; ++s) {
          const double x = mask_deviation_sq(p, sample_mask(p, d, rng));
          sum += x;
          sum_sq += x * x;
        }
        const double n = static_cast<double>(draws);
        const double mean = sum / n;
        const double se = std::sqrt(std::max(0.0, sum_sq / n - mean * mean) / (n - 1.0));
        // p = 1/2 makes every draw equal d/4, so the spread vanishes.
        const double z = se > 0.0 ? std::abs(mean - expected) / se : (std::abs(mean - expected) <= 1e-12 ? 0.0 : INFINITY);
        if (!(z <= 3.0)) {
          ok = false;
          msg << "MC p=" << p << " d=" << d << " z=" << z << "; ";
        }
        if (d <= 4) {
          double exact = 0.0;
          for (std::uint32_t bits = 0; bits < (1u << d); ++bits) {
            Mask m(d);
            double prob = 1.0;
            for (std::size_t k = 0; k < d; ++k) {
              m[k] = (bits >> k) & 1u;
              prob *= m[k] ? p : 1.0 - p;
            }
            exact += prob * mask_deviation_sq(p, m);
          }
          if (std::abs(exact - expected) > 1e-12) {
            ok = false;
            msg << "enumeration p=" << p << " d=" << d << " got " << exact << "; ";
          }
        }
      }
    r.passed = ok;
    r.detail = ok ? "9 MC cells within 3 SE, enumeration exact for d<=4" : msg.str();
  });
}

/// h_bar_exact <= discrepancy_upper_bound with L = max gradient norm.
inline CheckResult discrepancy_bound_holds(std::size_t instances, std::uint64_t seed = 2) {
  return timed("discrepancy upper bound", [&](CheckResult& r) {
    Engine rng = make_stream(seed, Purpose::sampling);
    std::uniform_int_distribution<std::size_t> ns(2, 5), ds(1, 8);
    std::size_t violations = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < instances; ++t) {
      const std::size_t n = ns(rng), d = ds(rng);
      const Matrix theta = random_mixing(n, rng);
      const SuccessMatrix p = random_success(n, rng);
      const GradientBundle g = random_gradients(n, d, rng);
      const double h = h_bar_exact(theta, p, g);
      const double b = discrepancy_upper_bound(theta, p, g, g.max_norm());
      worst = std::max(worst, (h - b) / std::max(1.0, std::abs(b)));
      if (h > b * (1.0 + 1e-12) + 1e-15) ++violations;
    }
    r.passed = violations == 0;
    std::ostringstream msg;
    msg << violations << " violations in " << instances << " instances; max relative excess " << worst;
    r.detail = msg.str();
  });
}

/// Monte Carlo discrepancy within 3 standard errors of the closed form.
inline CheckResult discrepancy_monte_carlo(std::size_t instances, std::size_t samples, std::uint64_t seed = 3) {
  return timed("discrepancy Monte Carlo agreement", [&](CheckResult& r) {
    Engine rng = make_stream(seed, Purpose::sampling);
    std::uniform_int_distribution<std::size_t> ns(2, 5), ds(1, 8);
    std::size_t bad = 0;
    double worst = 0.0;
    for (std::size_t t = 0; t < instances; ++t) {
      const std::size_t n = ns(rng), d = ds(rng);
      const Matrix theta = random_mixing(n, rng);
      const SuccessMatrix p = random_success(n, rng);
      const GradientBundle g = random_gradients(n, d, rng);
      const double exact = h_bar_exact(theta, p, g);
      Engine mc = make_stream(seed, Purpose::diagnostic, t);
      const MonteCarloEstimate est = h_bar_monte_carlo(theta, p, g, samples, mc);
      const double z = est.std_err > 0.0 ? std::abs(est.estimate - exact) / est.std_err
                                         : (std::abs(est.estimate - exact) < 1e-12 ? 0.0 : INFINITY);
      worst = std::max(worst, z);
      if (!(z <= 3.0)) ++bad;
    }
    r.passed = bad == 0;
    std::ostringstream msg;
    msg << bad << " of " << instances << " outside 3 SE; max |z| " << worst;
    r.detail = msg.str();
  });
}

/// h_hat_k vanishes at the uniform matrix with reliable links, and the
/// two-client identity case gives 0.25.
inline CheckResult closed_form_at_uniform(std::size_t instances, std::uint64_t seed = 4) {
  return timed("relative entropy closed form at uniform", [&](CheckResult& r) {
    Engine rng = make_stream(seed, Purpose::sampling);
    std::uniform_int_distribution<std::size_t> ns(2, 8), ms(1, 6);
    double worst = 0.0;
    for (std::size_t t = 0; t < instances; ++t) {
      const std::size_t n = ns(rng), m = ms(rng);
      const RepStats s = random_stats(n, m, rng);
      const Matrix uniform(n, n, 1.0 / static_cast<double>(n));
      const SuccessMatrix p = SuccessMatrix::reliable(n);
      for (std::size_t k = 0; k < m; ++k) worst = std::max(worst, std::abs(h_hat_k(uniform, p, s, k)));
    }
    const RepStats hand{Matrix{{0.0}, {2.0}}, Matrix{{1.0}, {1.0}}};
    const double h = h_hat_k(Matrix::identity(2), SuccessMatrix::reliable(2), hand, 0);
    r.passed = worst <= 1e-12 && std::abs(h - 0.25) <= 1e-12;
    std::ostringstream msg;
    msg.precision(17);
    msg << "max |h_hat| at uniform " << worst << "; hand case " << h;
    r.detail = msg.str();
  });
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num += (a[k] - b[k]) * (a[k] - b[k]);
    den += b[k] * b[k];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

/// g_gradient and local_gradient against central finite differences.
inline CheckResult gradients_match_differences(std::size_t instances, std::uint64_t seed = 5) {
  return timed("gradients vs finite differences", [&](CheckResult& r) {
    Engine rng = make_stream(seed, Purpose::sampling);
    std::uniform_int_distribution<std::size_t> ns(2, 6), ms(1, 4);
    double worst_g = 0.0, worst_local = 0.0;
    for (std::size_t t = 0; t < instances; ++t) {
      const std::size_t n = ns(rng), m = ms(rng);
      const RepStats s = random_stats(n, m, rng);
      const SuccessMatrix p = random_success(n, rng, 0.3, 1.0);
      const ObjectiveParams obj{0.01, 10 * m, m};
      const Matrix theta = random_mixing(n, rng);
      const Matrix ga = g_gradient(theta, p, s, obj);
      std::vector<double> a(ga.data().begin(), ga.data().end()), fd(n * n);
      const double h = 1e-6;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          Matrix up = theta, dn = theta;
          up(i, j) += h;
          dn(i, j) -= h;
          fd[i * n + j] = (g_objective(up, p, s, obj) - g_objective(dn, p, s, obj)) / (2.0 * h);
        }
      worst_g = std::max(worst_g, relative_error(a, fd));
    }
    for (std::size_t t = 0; t < instances; ++t) {
      const ModelLayout L{5, 4, 2, 3};
      Engine init = make_stream(seed, Purpose::init, t);
      ClientModel model = ClientModel::initialize(L, init);
      std::normal_distribution<double> nz(0.0, 0.3);
      for (double& v : model.w) v += nz(rng);
      std::vector<std::vector<double>> xs(6, std::vector<double>(L.input_dim));
      Batch batch;
      std::uniform_int_distribution<int> label(0, static_cast<int>(L.classes) - 1);
      for (auto& x : xs) {
        for (double& v : x) v = nz(rng) * 3.0;
        batch.x.emplace_back(x);
        batch.y.push_back(label(rng));
      }
      const LocalResult lr = local_gradient(model, batch, seed, t, 0);
      std::vector<double> fd(model.w.size());
      const double h = 1e-5;
      for (std::size_t k = 0; k < model.w.size(); ++k) {
        ClientModel up = model, dn = model;
        up.w[k] += h;
        dn.w[k] -= h;
        fd[k] = (local_gradient(up, batch, seed, t, 0).loss - local_gradient(dn, batch, seed, t, 0).loss) / (2.0 * h);
      }
      worst_local = std::max(worst_local, relative_error(lr.gradient, fd));
    }
    r.passed = worst_g <= 1e-5 && worst_local <= 1e-4;
    std::ostringstream msg;
    msg << "max relative error: g " << worst_g << " (limit 1e-5), local " << worst_local << " (limit 1e-4)";
    r.detail = msg.str();
  });
}

/// Minimum-cost assignment against enumeration of all permutations.
inline CheckResult assignment_matches_brute_force(std::size_t instances, std::size_t max_n = 6,
                                                  std::uint64_t seed = 6) {
  return timed("assignment vs brute force", [&](CheckResult& r) {
    Engine rng = make_stream(seed, Purpose::sampling);
    std::uniform_int_distribution<std::size_t> ns(1, max_n);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::size_t mismatches = 0;
    for (std::size_t t = 0; t < instances; ++t) {
      const std::size_t n = ns(rng);
      Matrix c(n, n);
      for (double& v : c.data()) v = u(rng);
      std::vector<std::size_t> perm(n), best;
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      double best_cost = std::numeric_limits<double>::infinity();
      do {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += c(i, perm[i]);
        if (s < best_cost) {
          best_cost = s;
          best = perm;
        }
      } while (std::next_permutation(perm.begin(), perm.end()));
      const Assignment a = min_cost_assignment(c);
      if (a.perm != best || std::abs(a.cost - best_cost) > 1e-9) ++mismatches;
    }
    r.passed = mismatches == 0;
    r.detail = std::to_string(mismatches) + " mismatches in " + std::to_string(instances) + " instances";
  });
}

/// Frank-Wolfe iterates stay doubly stochastic and the line-search trace
/// never increases.
inline CheckResult frank_wolfe_feasible_and_monotone(std::size_t instances, std::uint64_t seed = 7) {
  return timed("Frank-Wolfe feasibility and monotone trace", [&](CheckResult& r) {
    Engine rng = make_stream(seed, Purpose::sampling);
    std::uniform_int_distribution<std::size_t> ns(3, 6);
    std::size_t infeasible = 0, increases = 0, iterates = 0;
    FwConfig cfg;
    cfg.step_rule = StepRule::line_search;
    cfg.max_iters = 20;
    for (std::size_t t = 0; t < instances; ++t) {
      const std::size_t n = ns(rng), m = 2;
      const RepStats s = random_stats(n, m, rng);
      const SuccessMatrix p = random_success(n, rng, 0.5, 0.99);
      const ObjectiveParams obj{0.001, 20, m};
      const FwResult res = frank_wolfe(MixingMatrix::identity(n), p, s, obj, cfg, [&](std::size_t, const Matrix& x) {
        ++iterates;
        if (find_violation(x, false, stochastic_tolerance)) ++infeasible;
      });
      for (std::size_t k = 1; k < res.objective_trace.size(); ++k)
        if (res.objective_trace[k] > res.objective_trace[k - 1]) ++increases;
      if (find_violation(res.theta.matrix(), true, stochastic_tolerance)) ++infeasible;
    }
    r.passed = infeasible == 0 && increases == 0;
    std::ostringstream msg;
    msg << iterates << " iterates over " << instances << " runs: " << infeasible << " infeasible, " << increases
        << " trace increases";
    r.detail = msg.str();
  });
}

/// For N = 3, Frank-Wolfe from the identity (line search, 20 steps) against
/// the best of `samples` random symmetric doubly stochastic matrices.
inline CheckResult frank_wolfe_near_best_sample(std::size_t instances, std::size_t samples, std::uint64_t seed = 8) {
  return timed("Frank-Wolfe N=3 vs random feasible samples", [&](CheckResult& r) {
    Engine rng = make_stream(seed, Purpose::sampling);
    FwConfig cfg;
    cfg.step_rule = StepRule::line_search;
    cfg.max_iters = 20;
    std::size_t misses = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < instances; ++t) {
      const RepStats s = random_stats(3, 2, rng);
      const SuccessMatrix p = random_success(3, rng, 0.5, 0.99);
      const ObjectiveParams obj{0.001, 20, 2};
      const double fw = frank_wolfe(MixingMatrix::identity(3), p, s, obj, cfg).symmetrized_objective;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < samples; ++k) best = std::min(best, g_objective(random_mixing(3, rng), p, s, obj));
      worst = std::max(worst, fw - best);
      if (fw - best > 1e-3) ++misses;
    }
    r.passed = misses == 0;
    std::ostringstream msg;
    msg << misses << " of " << instances << " instances more than 1e-3 above the best sample; worst excess " << worst;
    r.detail = msg.str();
  });
}

/// Two runs of the same config and seed write byte-identical CSVs.
inline CheckResult runs_are_deterministic(const ExperimentConfig& cfg, const std::filesystem::path& scratch) {
  return timed("deterministic metrics CSV", [&](CheckResult& r) {
    const std::vector<Method> methods{cfg.method};
    const std::vector<std::size_t> degrees{cfg.degree};
    const std::vector<std::uint64_t> seeds{cfg.seed};
    std::filesystem::remove_all(scratch);
    run_sweep(cfg, methods, degrees, seeds, scratch / "a");
    run_sweep(cfg, methods, degrees, seeds, scratch / "b");
    auto slurp = [](const std::filesystem::path& f) {
      std::ifstream in(f, std::ios::binary);
      std::ostringstream s;
      s << in.rdbuf();
      return s.str();
    };
    const std::string name = run_file_name(cfg.method, cfg.degree, cfg.seed);
    const std::string a = slurp(scratch / "a" / name), b = slurp(scratch / "b" / name);
    r.passed = !a.empty() && a == b && slurp(scratch / "a" / "summary.csv") == slurp(scratch / "b" / "summary.csv");
    r.detail = r.passed ? std::to_string(a.size()) + " bytes identical" : "CSV contents differ or are empty";
    std::filesystem::remove_all(scratch);
  });
}

/// Bound hand value (f0=1, f*=0, beta=eta=1, T=100, xi=tau=0 gives 2/9) and
/// monotonicity in tau and xi.
inline CheckResult convergence_bound_evaluator() {
  return timed("convergence bound evaluator", [&](CheckResult& r) {
    const double hand = convergence_bound(1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 100);
    bool monotone = true;
    for (double xi = 0.0; xi <= 2.0; xi += 0.25) {
      double prev = -INFINITY;
      for (double tau = 0.0; tau <= 2.0; tau += 0.25) {
        const double b = convergence_bound(1.0, 0.0, 1.0, xi, tau, 1.0, 100);
        if (b < prev) monotone = false;
        prev = b;
      }
    }
    for (double tau = 0.0; tau <= 2.0; tau += 0.25) {
      double prev = -INFINITY;
      for (double xi = 0.0; xi <= 2.0; xi += 0.25) {
        const double b = convergence_bound(1.0, 0.0, 1.0, xi, tau, 1.0, 100);
        if (b < prev) monotone = false;
        prev = b;
      }
    }
    r.passed = std::abs(hand - 0.2222) <= 1e-4 && monotone;
    std::ostringstream msg;
    msg << "hand case " << hand << ", monotone " << (monotone ? "yes" : "no");
    r.detail = msg.str();
  });
}

/// Small configuration used by the determinism check.
inline ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.seed = 11;
  cfg.clients = 6;
  cfg.rounds = 8;
  cfg.degree = 2;
  cfg.train_examples = 300;
  cfg.test_examples = 100;
  cfg.batch_size = 16;
  cfg.channel.region_side_m = 100.0;
  cfg.channel.tx_power_w = 1.0;
  cfg.channel.noise_power_w = std::log(2.0) / 20000.0;
  cfg.min_separation_m = 18.0;
  cfg.diag_h_bar_mc = true;
  cfg.h_bar_samples = 4;
  cfg.diag_g_value = true;
  return cfg;
}

/// Quick suite for `d2dfl check`: smaller instance counts than the acceptance run.
inline std::vector<CheckResult> quick_suite(const std::filesystem::path& scratch) {
  return {mask_variance_identity(20000),
          discrepancy_bound_holds(100),
          discrepancy_monte_carlo(10, 4000),
          closed_form_at_uniform(50),
          gradients_match_differences(5),
          assignment_matches_brute_force(100, 5),
          frank_wolfe_feasible_and_monotone(10),
          runs_are_deterministic(tiny_config(), scratch),
          convergence_bound_evaluator()};
}

}  // namespace d2dfl::checks

#include <gtest/gtest.h>

#include <set>

#include "d2dfl/baselines.hpp"
#include "d2dfl/checks.hpp"
#include "d2dfl/solver.hpp"

using namespace d2dfl;

TEST(FwGap, HandCases) {
  const Matrix grad{{1, 0}, {0, 1}};
  const Matrix uni(2, 2, 0.5);
  const PermutationAtom atom = lmo(grad);
  EXPECT_EQ(atom.perm, (std::vector<std::size_t>{1, 0}));
  EXPECT_DOUBLE_EQ(fw_gap(uni, grad, atom), 1.0);
  EXPECT_DOUBLE_EQ(fw_gap(atom.to_matrix(), grad, atom), 0.0);
  EXPECT_DOUBLE_EQ(fw_gap(uni, Matrix(2, 2), PermutationAtom::identity(2)), 0.0);
}

TEST(FrankWolfe, IdenticalClientsMoveTowardUniform) {
  const std::size_t n = 4;
  const RepStats s{Matrix(n, 2, 0.3), Matrix(n, 2, 1.1)};
  const SuccessMatrix p = SuccessMatrix::reliable(n);
  const ObjectiveParams obj{0.001, 20, 2};
  FwConfig cfg;
  cfg.max_iters = n - 1;
  const FwResult r = frank_wolfe(MixingMatrix::identity(n), p, s, obj, cfg);
  EXPECT_LE(r.objective_trace.back(), r.objective_trace.front());
  EXPECT_LE(r.symmetrized_objective, r.objective_trace.front() + 1e-12);
  EXPECT_NEAR(g_objective(Matrix(n, n, 0.25), p, s, obj), 0.0, 1e-12);
}

TEST(FrankWolfe, OneStepFromIdentityHasTwoAtoms) {
  Engine rng = make_stream(3, Purpose::sampling);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 5;
    const RepStats s = checks::random_stats(n, 2, rng);
    const SuccessMatrix p = checks::random_success(n, rng, 0.5, 1.0);
    FwConfig cfg;
    cfg.max_iters = 1;
    const FwResult r = frank_wolfe(MixingMatrix::identity(n), p, s, {0.001, 20, 2}, cfg);
    EXPECT_LE(r.decomposition.atoms.size(), 2u);
    for (std::size_t deg : degree_profile(r.theta.matrix())) EXPECT_LE(deg, 2u);
  }
}

TEST(FrankWolfe, IteratesFeasibleTraceMonotone) {
  Engine rng = make_stream(4, Purpose::sampling);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 2 + static_cast<std::size_t>(rep % 5);
    const RepStats s = checks::random_stats(n, 3, rng);
    const SuccessMatrix p = checks::random_success(n, rng, 0.2, 1.0);
    FwConfig cfg;
    cfg.max_iters = 10;
    std::size_t seen = 0;
    const FwResult r = frank_wolfe(MixingMatrix::identity(n), p, s, {0.01, 30, 3}, cfg,
                                   [&](std::size_t, const Matrix& x) {
                                     ++seen;
                                     EXPECT_FALSE(find_violation(x, false, 1e-9).has_value());
                                   });
    EXPECT_EQ(seen, r.objective_trace.size());
    for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
      EXPECT_LE(r.objective_trace[k], r.objective_trace[k - 1]);
    EXPECT_EQ(r.theta.matrix(), r.theta.matrix().transpose());
  }
}

TEST(FrankWolfe, DecompositionReproducesLastIterate) {
  const std::size_t n = 3;
  Engine rng = make_stream(5, Purpose::sampling);
  const RepStats s = checks::random_stats(n, 2, rng);
  const SuccessMatrix p = checks::random_success(n, rng, 0.5, 1.0);
  FwConfig cfg;
  cfg.max_iters = 6;
  Matrix last;
  const FwResult r = frank_wolfe(MixingMatrix::identity(n), p, s, {0.001, 10, 2}, cfg,
                                 [&](std::size_t, const Matrix& x) { last = x; });
  EXPECT_LE(max_abs_diff(r.decomposition.reconstruct(n), last), 1e-12);
  EXPECT_LE(max_abs_diff(symmetrize(last), r.theta.matrix()), 1e-15);
}

TEST(FrankWolfe, ClassicStepRuleStaysFeasible) {
  Engine rng = make_stream(6, Purpose::sampling);
  const RepStats s = checks::random_stats(4, 2, rng);
  const SuccessMatrix p = checks::random_success(4, rng, 0.5, 1.0);
  FwConfig cfg;
  cfg.max_iters = 5;
  cfg.step_rule = StepRule::classic;
  const FwResult r = frank_wolfe(MixingMatrix::identity(4), p, s, {0.001, 10, 2}, cfg);
  EXPECT_NO_THROW(MixingMatrix::validate(r.theta.matrix()));
}

TEST(FrankWolfe, StationaryStartStopsWithZeroGap) {
  // identical stats and p = 1: the uniform matrix is optimal (g = 0)
  const RepStats s{Matrix(3, 1, 0.0), Matrix(3, 1, 1.0)};
  FwConfig cfg;
  cfg.max_iters = 5;
  const FwResult r = frank_wolfe(fully_connected(3), SuccessMatrix::reliable(3), s, {0.001, 5, 1}, cfg);
  ASSERT_FALSE(r.fw_gaps.empty());
  EXPECT_LE(r.fw_gaps.front(), 1e-9);
  EXPECT_EQ(r.objective_trace.size(), 1u);
}

TEST(FrankWolfe, BadConfigRejected) {
  FwConfig cfg;
  cfg.max_iters = 0;
  const RepStats s{Matrix(2, 1, 0.0), Matrix(2, 1, 1.0)};
  EXPECT_THROW(frank_wolfe(MixingMatrix::identity(2), SuccessMatrix::reliable(2), s, {}, cfg), std::invalid_argument);
}

TEST(LabelBaseline, IdenticalHistogramsZeroAtUniform) {
  const Matrix hist(4, 3, 1.0 / 3);
  EXPECT_NEAR(LabelSkewObjective{hist}.value(Matrix(4, 4, 0.25)), 0.0, 1e-15);
  EXPECT_NO_THROW(MixingMatrix::validate(stl_fw_baseline(hist, 2).matrix()));
}

TEST(LabelBaseline, OppositeOneHotPrefersMixing) {
  const Matrix hist{{1, 0}, {0, 1}};
  const LabelSkewObjective f{hist};
  // identity: each residual (+-0.5, -+0.5) -> 0.5 per client; uniform: 0
  EXPECT_DOUBLE_EQ(f.value(Matrix::identity(2)), 0.5);
  EXPECT_DOUBLE_EQ(f.value(Matrix(2, 2, 0.5)), 0.0);
  const MixingMatrix t = stl_fw_baseline(hist, 1);
  EXPECT_LT(f.value(t.matrix()), f.value(Matrix::identity(2)));
}

TEST(LabelBaseline, GradientMatchesDifferences) {
  Engine rng = make_stream(7, Purpose::sampling);
  Matrix hist(5, 4);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += hist(i, c) = std::uniform_real_distribution<double>(0, 1)(rng);
    for (std::size_t c = 0; c < 4; ++c) hist(i, c) /= s;
  }
  const LabelSkewObjective f{hist};
  const Matrix t = checks::random_mixing(5, rng);
  const Matrix g = f.gradient(t);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      Matrix a = t, b = t;
      a(i, j) += 1e-6;
      b(i, j) -= 1e-6;
      EXPECT_NEAR((f.value(a) - f.value(b)) / 2e-6, g(i, j), 1e-7);
    }
}

TEST(LabelBaseline, RejectsBadHistograms) {
  EXPECT_THROW(stl_fw_baseline(Matrix{{0.5, 0.4}, {0.5, 0.5}}, 1), std::invalid_argument);
  EXPECT_THROW(stl_fw_baseline(Matrix{{1.5, -0.5}, {0.5, 0.5}}, 1), std::invalid_argument);
}

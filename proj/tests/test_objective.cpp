#include <gtest/gtest.h>

#include <cmath>

#include "d2dfl/checks.hpp"
#include "d2dfl/objective.hpp"

using namespace d2dfl;

namespace {

RepStats two_client_stats() { return RepStats{Matrix{{0.0}, {2.0}}, Matrix{{1.0}, {1.0}}}; }

SuccessMatrix two_client_links(double off) { return SuccessMatrix{Matrix{{1.0, off}, {off, 1.0}}}; }

}  // namespace

TEST(Aggregates, UniformReliableMatchesPopulation) {
  Engine rng = make_stream(1, Purpose::sampling);
  const RepStats s = checks::random_stats(5, 3, rng);
  const Matrix u(5, 5, 0.2);
  const SuccessMatrix p = SuccessMatrix::reliable(5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      const Aggregates a = aggregates(u, p, s, i, k);
      EXPECT_NEAR(a.mu_tilde, a.mu_bar, 1e-14);
      EXPECT_NEAR(a.sigma_tilde, a.sigma_bar, 1e-14);
    }
}

TEST(Aggregates, HandCaseIdentity) {
  const Aggregates a = aggregates(Matrix::identity(2), two_client_links(1.0), two_client_stats(), 0, 0);
  EXPECT_DOUBLE_EQ(a.mu_bar, 1.0);
  EXPECT_DOUBLE_EQ(a.mu_tilde, 0.0);
  EXPECT_DOUBLE_EQ(a.sigma_bar, 1.0);
  EXPECT_DOUBLE_EQ(a.sigma_tilde, 1.0);
  EXPECT_DOUBLE_EQ(a.denom, 1.0);
}

TEST(Aggregates, SelfOnlyRow) {
  const RepStats s{Matrix{{0.0}, {1.0}, {2.0}}, Matrix{{0.5}, {2.0}, {3.0}}};
  Matrix t{{0.4, 0.3, 0.3}, {0.3, 0.7, 0.0}, {0.3, 0.0, 0.7}};
  SuccessMatrix p{Matrix{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.5}, {0.0, 0.5, 1.0}}};
  EXPECT_DOUBLE_EQ(aggregates(t, p, s, 0, 0).sigma_tilde, 0.4 * 0.5);
}

TEST(Aggregates, ZeroMassThrows) {
  const RepStats s = two_client_stats();
  const SuccessMatrix p{Matrix{{0.0, 0.0}, {0.0, 1.0}}};
  EXPECT_THROW(aggregates(Matrix::identity(2), p, s, 0, 0), ZeroDenominatorError);
}

TEST(HhatK, ZeroAtUniformReliable) {
  Engine rng = make_stream(2, Purpose::sampling);
  for (int rep = 0; rep < 20; ++rep) {
    RepStats s = checks::random_stats(4, 2, rng);
    const Matrix u(4, 4, 0.25);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(h_hat_k(u, SuccessMatrix::reliable(4), s, k), 0.0, 1e-12);
    s.sigma *= 3.7;
    EXPECT_NEAR(h_hat_k(u, SuccessMatrix::reliable(4), s, 0), 0.0, 1e-12);
  }
}

TEST(HhatK, HandCaseIdentity) {
  EXPECT_NEAR(h_hat_k(Matrix::identity(2), two_client_links(1.0), two_client_stats(), 0), 0.25, 1e-12);
}

TEST(VariancePenalty, HandCase) {
  const ObjectiveParams params{0.001, 10, 1};
  EXPECT_NEAR(variance_penalty(Matrix(2, 2, 0.5), two_client_links(0.8), params), 0.0004, 1e-15);
  EXPECT_EQ(variance_penalty(Matrix(2, 2, 0.5), two_client_links(1.0), params), 0.0);
  EXPECT_EQ(variance_penalty(Matrix::identity(2), two_client_links(0.3), params), 0.0);
}

TEST(VariancePenalty, GradientHandEntry) {
  const ObjectiveParams params{0.001, 10, 1};
  const Matrix g = variance_penalty_gradient(Matrix(2, 2, 0.5), two_client_links(0.8), params);
  EXPECT_NEAR(g(0, 1), 0.0008, 1e-15);
  EXPECT_NEAR(g(1, 0), 0.0008, 1e-15);
  EXPECT_EQ(g(0, 0), 0.0);
}

TEST(Objective, ZeroAtUniformReliable) {
  Engine rng = make_stream(3, Purpose::sampling);
  const RepStats s = checks::random_stats(6, 4, rng);
  EXPECT_NEAR(g_objective(Matrix(6, 6, 1.0 / 6), SuccessMatrix::reliable(6), s, {0.001, 50, 4}), 0.0, 1e-12);
}

TEST(Objective, HandCaseIsSumOfTerms) {
  const ObjectiveParams params{0.001, 10, 1};
  const Matrix t = Matrix::identity(2);
  const SuccessMatrix p = two_client_links(0.8);
  // Identity puts no weight on the lossy links, so the penalty is zero and
  // the surrogate equals the reliable hand value.
  EXPECT_NEAR(g_objective(t, p, two_client_stats(), params), 0.25 + variance_penalty(t, p, params), 1e-12);
  EXPECT_NEAR(g_objective(t, two_client_links(1.0), two_client_stats(), params), 0.25, 1e-12);
}

TEST(Objective, FiniteOnInteriorPoints) {
  Engine rng = make_stream(4, Purpose::sampling);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix t = checks::random_mixing(5, rng);
    const SuccessMatrix p = checks::random_success(5, rng, 0.05, 1.0);
    EXPECT_TRUE(std::isfinite(g_objective(t, p, checks::random_stats(5, 2, rng), {0.01, 20, 2})));
  }
}

TEST(Gradient, MatchesCentralDifferences) {
  Engine rng = make_stream(5, Purpose::sampling);
  const ObjectiveParams params{0.01, 30, 3};
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + static_cast<std::size_t>(rep % 4);
    const Matrix t = checks::random_mixing(n, rng);
    const SuccessMatrix p = checks::random_success(n, rng, 0.3, 1.0);
    const RepStats s = checks::random_stats(n, 3, rng);
    const Matrix g = g_gradient(t, p, s, params);
    std::vector<double> analytic, numeric;
    const double h = 1e-6;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        Matrix a = t, b = t;
        a(i, j) += h;
        b(i, j) -= h;
        numeric.push_back((g_objective(a, p, s, params) - g_objective(b, p, s, params)) / (2 * h));
        analytic.push_back(g(i, j));
      }
    EXPECT_LE(checks::relative_error(analytic, numeric), 1e-5) << "instance " << rep;
  }
}

TEST(Gradient, PenaltyPartVanishesWhenReliable) {
  const Matrix g = variance_penalty_gradient(Matrix(3, 3, 1.0 / 3), SuccessMatrix::reliable(3), {0.5, 10, 1});
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(TextbookKl, NonnegativeAndZeroWhenIdentical) {
  const RepStats same{Matrix(3, 1, 0.7), Matrix(3, 1, 1.3)};
  EXPECT_NEAR(textbook_gaussian_kl_k(Matrix(3, 3, 1.0 / 3), SuccessMatrix::reliable(3), same, 0), 0.0, 1e-12);
  Engine rng = make_stream(6, Purpose::sampling);
  for (int rep = 0; rep < 20; ++rep) {
    const RepStats s = checks::random_stats(4, 1, rng);
    EXPECT_GE(textbook_gaussian_kl_k(checks::random_mixing(4, rng), SuccessMatrix::reliable(4), s, 0), -1e-12);
  }
}

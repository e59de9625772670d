#include <gtest/gtest.h>

#include <random>

#include "eopfair/estimator.hpp"
#include "support.hpp"

using namespace eopfair;

namespace {

double relative_error(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

TEST(Objective, KnownValues) {
  // -log Phi(1) and -log Phi(2), the latter as a confidence-2 row.
  const std::vector<ComparisonRow> one{{{1.0, 0.0}, 1}};
  EXPECT_NEAR(negative_log_likelihood(Vector{1.0, 0.0}, one), 0.172753779023450, 1e-13);
  const std::vector<ComparisonRow> two{{{0.5, 0.5}, 2}};
  EXPECT_NEAR(negative_log_likelihood(Vector{1.0, 1.0}, two), 0.0230129093289635, 1e-14);
  // At w = 0 every row costs log 2.
  EXPECT_NEAR(negative_log_likelihood(Vector{0.0, 0.0}, one), std::log(2.0), 1e-15);
}

TEST(Objective, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t dim = 2 + inst % 6;
    const auto rows = testsupport::probit_rows(testsupport::random_unit(dim, rng), 30, rng);
    const Vector w = testsupport::random_unit(dim, rng, 0.9);
    const Vector g = nll_gradient(w, rows);
    for (std::size_t i = 0; i < dim; ++i) {
      const double h = 1e-6;
      Vector a = w, b = w;
      a[i] += h;
      b[i] -= h;
      const double fd = (negative_log_likelihood(a, rows) - negative_log_likelihood(b, rows)) / (2 * h);
      EXPECT_LE(relative_error(g[i], fd), 1e-6) << "instance " << inst << " coord " << i;
    }
  }
}

TEST(Objective, ShapeMismatch) {
  const std::vector<ComparisonRow> rows{{{1.0, 0.0, 1.0}, 1}};
  EXPECT_THROW(negative_log_likelihood(Vector{0.0, 0.0}, rows), ShapeError);
  const std::vector<ComparisonRow> bad{{{1.0, 0.0}, 3}};
  EXPECT_THROW(negative_log_likelihood(Vector{0.0, 0.0}, bad), ValidationError);
}

TEST(Projection, UnitBall) {
  EXPECT_EQ(project_unit_ball(Vector{0.3, 0.4}), (Vector{0.3, 0.4}));
  const Vector p = project_unit_ball(Vector{3.0, 4.0});
  EXPECT_NEAR(p[0], 0.6, 1e-15);
  EXPECT_NEAR(p[1], 0.8, 1e-15);
  EXPECT_LE(norm2(p), 1.0);
}

TEST(EstimateWeights, MatchesGridSearchOracle) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    std::mt19937_64 rng(seed);
    const auto rows = testsupport::probit_rows(testsupport::random_unit(2, rng), 50, rng);
    const FitResult fit = estimate_weights(rows, 2);
    EXPECT_TRUE(fit.converged);
    const double grid = testsupport::grid_minimum(rows, 200);
    EXPECT_LE(-fit.log_likelihood, grid + 1e-6) << "seed " << seed;
    EXPECT_NEAR(-fit.log_likelihood, testsupport::oracle_nll(fit.weights[0], fit.weights[1], rows), 1e-9);
  }
}

TEST(EstimateWeights, SeparableDataHitsBoundary) {
  const std::vector<ComparisonRow> rows{{{1.0, 0.0}, 2}, {{0.0, 1.0}, 1}, {{1.0, 1.0}, 2}};
  const FitResult fit = estimate_weights(rows, 2);
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(norm2(fit.weights.coefficients()), 1.0, 1e-9);
  EXPECT_GT(fit.weights[0], 0.0);
  EXPECT_GT(fit.weights[1], 0.0);
}

TEST(EstimateWeights, InteriorOptimumHasZeroGradient) {
  // One agreeing and one disagreeing answer on the same delta: optimum is
  // strictly inside the ball.
  const std::vector<ComparisonRow> rows{{{1.0, 0.0}, 2}, {{1.0, 0.0}, -1}, {{0.0, 1.0}, 1}, {{0.0, 1.0}, -1}};
  const FitResult fit = estimate_weights(rows, 2);
  EXPECT_LT(norm2(fit.weights.coefficients()), 1.0);
  EXPECT_LE(norm2(nll_gradient(fit.weights.coefficients(), rows)), 1e-5);
  EXPECT_NEAR(fit.weights[1], 0.0, 1e-9);
}

TEST(EstimateWeights, SwappingSubjectsIsSymmetric) {
  std::mt19937_64 rng(5);
  const auto rows = testsupport::probit_rows(testsupport::random_unit(4, rng), 25, rng);
  auto flipped = rows;
  for (auto& r : flipped) {
    for (double& d : r.delta) d = -d;
    r.answer = -r.answer;
  }
  const FitResult a = estimate_weights(rows, 4);
  const FitResult b = estimate_weights(flipped, 4);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.weights[i], b.weights[i], 1e-12);
}

TEST(EstimateWeights, EmptyInput) {
  EXPECT_THROW(estimate_weights({}, 3), InsufficientDataError);
  EXPECT_THROW(estimate_eoo_baseline({}), InsufficientDataError);
}

TEST(EstimateWeights, RejectsBadSolverConfig) {
  const std::vector<ComparisonRow> rows{{{1.0}, 1}};
  SolverConfig cfg;
  cfg.backtracking_factor = 1.0;
  EXPECT_THROW(estimate_weights(rows, 1, cfg), ValidationError);
}

TEST(Baseline, NestedInFullModel) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 30; ++i) {
    const auto rows = testsupport::probit_rows(testsupport::random_unit(6, rng), 25, rng);
    const FitResult full = estimate_weights(rows, 6);
    const FitResult base = estimate_eoo_baseline(rows);
    EXPECT_GE(full.log_likelihood, base.log_likelihood - 1e-9);
    for (std::size_t j = 0; j + 1 < 6; ++j) EXPECT_EQ(base.weights[j], 0.0);
  }
}

TEST(Baseline, ExplicitLabelIndex) {
  const std::vector<ComparisonRow> rows{{{1.0, 0.0}, 2}, {{1.0, 1.0}, 1}};
  const FitResult base = estimate_eoo_baseline(rows, {}, 0);
  EXPECT_NEAR(base.weights[0], 1.0, 1e-9);
  EXPECT_EQ(base.weights[1], 0.0);
  EXPECT_THROW(estimate_eoo_baseline(rows, {}, 2), ShapeError);
}

TEST(Rows, BuiltFromResponses) {
  PairwiseQuestion q1{"d-1", Part::Desert, {"a", {1, 0}, 1, 0}, {"b", {0, 0}, 0, 1}, false, std::nullopt};
  PairwiseQuestion chk{"d-check-1", Part::Desert, {"c", {0, 0}, 0, 0}, {"d", {0, 1}, 1, 0}, true, 1};
  PairwiseQuestion q2{"d-2", Part::Desert, {"e", {1, 1}, 0, 0}, {"f", {1, 0}, 0, 1}, false, std::nullopt};
  const std::vector<PairwiseQuestion> qs{q1, chk, q2};
  const std::vector<Response> rs{{"d-1", Answer::choice(2), std::nullopt, 0},
                                 {"d-check-1", Answer::choice(1), std::nullopt, 0},
                                 {"d-2", Answer::no_preference(), std::nullopt, 0}};
  const auto rows = build_rows(rs, qs, Part::Desert);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].delta, (Vector{1, 0, 1}));
  EXPECT_EQ(rows[0].answer, 2);

  const auto util = build_rows(std::vector<Response>{{"d-2", Answer::choice(-1), std::nullopt, 0}}, qs, Part::Utility);
  EXPECT_EQ(util[0].delta, (Vector{0, 1, 0, -1}));

  const std::vector<Response> unknown{{"d-9", Answer::choice(1), std::nullopt, 0}};
  EXPECT_THROW(build_rows(unknown, qs, Part::Desert), ValidationError);
}

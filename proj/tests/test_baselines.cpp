#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include <msplit/baselines.hpp>

#include "oracles.hpp"

using msplit::Matrix;

namespace {

std::vector<double> as_vector(const Matrix& m)
{
    return std::vector<double>(m.data().begin(), m.data().end());
}

/// Orthogonal design with (1/N) XᵀX = I: column j is ±sqrt(d) on rows 2j and 2j+1.
Matrix orthonormal_design(std::size_t d)
{
    Matrix X(2 * d, d);
    const double s = std::sqrt(static_cast<double>(d));
    for (std::size_t j = 0; j < d; ++j) {
        X(2 * j, j) = s;
        X(2 * j + 1, j) = -s;
    }
    return X;
}

} // namespace

TEST(Ols, IdentityDesignReturnsResponse)
{
    const Matrix y{{1.5}, {-2}, {0.25}};
    EXPECT_EQ(msplit::ols_fit(Matrix::identity(3), y), y);
}

TEST(Ols, RecoversExactCoefficients)
{
    const Matrix X = oracle::random_matrix(20, 4, 1);
    const Matrix beta{{1}, {-2}, {0.5}, {3}};
    const Matrix fit = msplit::ols_fit(X, msplit::matmul(X, beta));
    EXPECT_LT(msplit::max_abs(fit - beta), 1e-10);
}

TEST(Ols, ResidualOrthogonalToColumns)
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix X = oracle::random_matrix(15, 5, seed);
        const Matrix y = oracle::random_matrix(15, 2, 100 + seed);
        const Matrix r = y - msplit::matmul(X, msplit::ols_fit(X, y));
        EXPECT_LT(msplit::max_abs(msplit::matmul_tn(X, r)), 1e-9);
    }
}

TEST(Ols, RankDeficientDesignThrows)
{
    Matrix X = oracle::random_matrix(10, 3, 2);
    for (std::size_t i = 0; i < 10; ++i) X(i, 2) = X(i, 0);
    EXPECT_THROW(msplit::ols_fit(X, Matrix(10, 1)), msplit::NumericError);
    EXPECT_THROW(msplit::ols_fit(Matrix(10, 3), Matrix(9, 1)), msplit::DimensionError);
}

TEST(Ridge, ScalarHalving)
{
    // (1/N) xᵀx = 1 and (1/N) xᵀy = 1; lambda = 1 halves the solution.
    EXPECT_NEAR(msplit::ridge_fit(Matrix{{1}}, Matrix{{1}}, 1.0)(0, 0), 0.5, 1e-15);
}

TEST(Ridge, ZeroPenaltyEqualsOls)
{
    const Matrix X = oracle::random_matrix(25, 6, 3);
    const Matrix y = oracle::random_matrix(25, 1, 4);
    EXPECT_LT(msplit::max_abs(msplit::ridge_fit(X, y, 0.0) - msplit::ols_fit(X, y)), 1e-10);
}

TEST(Ridge, NormShrinksWithPenalty)
{
    const Matrix X = oracle::random_matrix(30, 8, 5);
    const Matrix y = oracle::random_matrix(30, 1, 6);
    double previous = msplit::frobenius_norm(msplit::ridge_fit(X, y, 0.0));
    for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0}) {
        const double norm = msplit::frobenius_norm(msplit::ridge_fit(X, y, lambda));
        EXPECT_LT(norm, previous);
        previous = norm;
    }
}

TEST(Ridge, StationarityOfObjective)
{
    const Matrix X = oracle::random_matrix(12, 4, 7);
    const Matrix y = oracle::random_matrix(12, 2, 8);
    const double lambda = 0.3;
    const Matrix b = msplit::ridge_fit(X, y, lambda);
    // (1/N) Xᵀ(Xb - y) + lambda b = 0
    const Matrix g = msplit::matmul_tn(X, msplit::matmul(X, b) - y) * (1.0 / 12.0) + b * lambda;
    EXPECT_LT(msplit::max_abs(g), 1e-12);
}

TEST(Ridge, PathMatchesDirectSolves)
{
    const Matrix X = oracle::random_matrix(40, 10, 9);
    const Matrix y = oracle::random_matrix(40, 1, 10);
    const msplit::RidgePath path(X, y);
    for (double lambda : {0.0, 0.05, 0.5, 5.0}) {
        EXPECT_LT(msplit::max_abs(path.fit(lambda) - msplit::ridge_fit(X, y, lambda)), 1e-10) << lambda;
    }
    EXPECT_THROW(path.fit(-1.0), msplit::InvalidArgument);
}

TEST(Ridge, RejectsNegativePenalty)
{
    EXPECT_THROW(msplit::ridge_fit(Matrix{{1}}, Matrix{{1}}, -0.5), msplit::InvalidArgument);
}

TEST(Lasso, ZeroAboveLambdaMax)
{
    const Matrix X = oracle::random_matrix(20, 5, 11);
    const Matrix y = oracle::random_matrix(20, 1, 12);
    const double lmax = msplit::lasso_lambda_max(X, y);
    EXPECT_EQ(msplit::max_abs(msplit::lasso_fit(X, y, lmax)), 0.0);
    EXPECT_GT(msplit::max_abs(msplit::lasso_fit(X, y, 0.9 * lmax)), 0.0);
}

TEST(Lasso, OrthonormalDesignIsSoftThresholdedOls)
{
    const Matrix X = orthonormal_design(4);
    const Matrix y = oracle::random_matrix(8, 1, 13, 2.0);
    const Matrix ols = msplit::ols_fit(X, y);
    const Matrix lasso = msplit::lasso_fit(X, y, 0.4);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(lasso(j, 0), msplit::soft_threshold(ols(j, 0), 0.4), 1e-12);
}

TEST(Lasso, MatchesSignPatternEnumerationOracle)
{
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const Matrix X = oracle::random_matrix(12, 3, 20 + seed);
        const Matrix y = oracle::random_matrix(12, 1, 40 + seed);
        const double lambda = 0.05 + 0.05 * static_cast<double>(seed);
        const double expected = oracle::lasso_sign_pattern_minimum(X, as_vector(y), lambda);
        const Matrix b = msplit::lasso_fit(X, y, lambda);
        EXPECT_NEAR(oracle::lasso_objective(X, as_vector(y), as_vector(b), lambda), expected, 1e-6) << seed;
    }
}

TEST(Lasso, SatisfiesKktConditions)
{
    const Matrix X = oracle::random_matrix(50, 12, 30);
    const Matrix y = oracle::random_matrix(50, 1, 31);
    const double lambda = 0.1;
    const Matrix b = msplit::lasso_fit(X, y, lambda);
    // g = (1/N) Xᵀ(y - Xb); |g_j| <= lambda, with equality and matching sign on the support.
    const Matrix g = msplit::matmul_tn(X, y - msplit::matmul(X, b)) * (1.0 / 50.0);
    for (std::size_t j = 0; j < 12; ++j) {
        if (b(j, 0) != 0.0) {
            EXPECT_NEAR(g(j, 0), lambda * (b(j, 0) > 0 ? 1.0 : -1.0), 1e-6);
        } else {
            EXPECT_LE(std::abs(g(j, 0)), lambda + 1e-6);
        }
    }
}

TEST(ElasticNet, DegenerateCases)
{
    const Matrix X = oracle::random_matrix(30, 5, 40);
    const Matrix y = oracle::random_matrix(30, 1, 41);
    EXPECT_LT(msplit::max_abs(msplit::elastic_net_fit(X, y, 0.0, 0.7) - msplit::ridge_fit(X, y, 0.7)), 1e-7);
    EXPECT_LT(msplit::max_abs(msplit::elastic_net_fit(X, y, 0.2, 0.0) - msplit::lasso_fit(X, y, 0.2)), 1e-12);
}

TEST(ElasticNet, ScalarClosedForm)
{
    // One feature: beta = S(c, l1) / (g + l2) with g = xᵀx / N, c = xᵀy / N.
    const Matrix X = oracle::random_matrix(9, 1, 42);
    const Matrix y = oracle::random_matrix(9, 1, 43);
    double g = 0.0, c = 0.0;
    for (std::size_t i = 0; i < 9; ++i) {
        g += X(i, 0) * X(i, 0) / 9.0;
        c += X(i, 0) * y(i, 0) / 9.0;
    }
    for (double l1 : {0.0, 0.01, 0.1}) {
        for (double l2 : {0.0, 0.5, 2.0}) {
            const double sign = c > 0 ? 1.0 : -1.0;
            const double expected = sign * std::max(std::abs(c) - l1, 0.0) / (g + l2);
            EXPECT_NEAR(msplit::elastic_net_fit(X, y, l1, l2)(0, 0), expected, 1e-12);
        }
    }
}

TEST(ElasticNet, ObjectiveNonIncreasingOverSweeps)
{
    const Matrix X = oracle::random_matrix(40, 15, 50);
    const Matrix y = oracle::random_matrix(40, 1, 51);
    std::vector<double> trace;
    msplit::CdOptions opts;
    opts.objective_trace = &trace;
    msplit::elastic_net_fit(X, y, 0.05, 0.1, opts);
    ASSERT_GT(trace.size(), 1u);
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-12);
}

TEST(ElasticNet, WarmStartReachesSameSolution)
{
    const Matrix X = oracle::random_matrix(30, 10, 60);
    const Matrix y = oracle::random_matrix(30, 2, 61);
    const msplit::CoordinateDescent cd(X, y);
    const Matrix cold = cd.fit(0.05, 0.2);
    const Matrix start = cd.fit(0.5, 0.2);
    const Matrix warm = cd.fit(0.05, 0.2, &start);
    EXPECT_LT(msplit::max_abs(cold - warm), 1e-6);
    EXPECT_NEAR(msplit::elastic_net_objective(X, y, cold, 0.05, 0.2),
                msplit::elastic_net_objective(X, y, warm, 0.05, 0.2), 1e-10);
}

TEST(ElasticNet, SweepCapRaisesConvergenceError)
{
    const Matrix X = oracle::random_matrix(30, 10, 70);
    const Matrix y = oracle::random_matrix(30, 1, 71);
    msplit::CdOptions opts;
    opts.max_sweeps = 1;
    opts.tol = 0.0;
    EXPECT_THROW(msplit::elastic_net_fit(X, y, 0.01, 0.0, opts), msplit::ConvergenceError);
    EXPECT_THROW(msplit::elastic_net_fit(X, y, -0.1, 0.0), msplit::InvalidArgument);
}

TEST(LambdaGrid, UniformWithEndpoints)
{
    const auto grid = msplit::lambda_grid(5.0, 500);
    ASSERT_EQ(grid.values.size(), 500u);
    EXPECT_EQ(grid.values.front(), 0.0);
    EXPECT_EQ(grid.values.back(), 5.0);
    for (std::size_t i = 1; i < 500; ++i) EXPECT_NEAR(grid.values[i] - grid.values[i - 1], 5.0 / 499.0, 1e-12);
    EXPECT_THROW(msplit::lambda_grid(0.0, 10), msplit::InvalidArgument);
    EXPECT_THROW(msplit::lambda_grid(1.0, 1), msplit::InvalidArgument);
}

TEST(ElasticNet, ActiveSetStepsAgreeWithPlainSweeps)
{
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const Matrix X = oracle::random_matrix(40, 20, 80 + seed);
        const Matrix y = oracle::random_matrix(40, 1, 90 + seed);
        msplit::CdOptions plain;
        plain.active_set_steps = false;
        std::vector<double> trace;
        msplit::CdOptions fast;
        fast.objective_trace = &trace;
        const double l1 = 0.01 * static_cast<double>(seed + 1);
        const double l2 = 0.05 * static_cast<double>(seed);
        const Matrix a = msplit::elastic_net_fit(X, y, l1, l2, plain);
        const Matrix b = msplit::elastic_net_fit(X, y, l1, l2, fast);
        EXPECT_LT(msplit::max_abs(a - b), 1e-6) << seed;
        for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-12);
    }
}

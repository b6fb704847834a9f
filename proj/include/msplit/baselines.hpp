#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <msplit/errors.hpp>
#include <msplit/matrix.hpp>
#include <msplit/solver.hpp>

namespace msplit {

namespace detail {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMajorMatrix> as_eigen(const Matrix& m)
{
    return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

inline Matrix from_eigen(const RowMajorMatrix& m)
{
    std::vector<double> data(m.data(), m.data() + m.size());
    return Matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), std::move(data));
}

inline void require_rows_match(const Matrix& X, const Matrix& y, const char* what)
{
    if (X.rows() != y.rows()) {
        throw DimensionError(std::string(what) + ": X has " + std::to_string(X.rows())
                             + " rows but y has " + std::to_string(y.rows()));
    }
    if (X.rows() == 0 || X.cols() == 0) throw DimensionError(std::string(what) + ": empty design");
}

} // namespace detail

/// Ascending regularization grid containing 0 and lambda_max.
struct LambdaGrid
{
    std::vector<double> values;
    double lambda_max = 0.0;
};

/// n_points equally spaced values on [0, lambda_max].
inline LambdaGrid lambda_grid(double lambda_max, std::size_t n_points)
{
    if (!(lambda_max > 0.0)) throw InvalidArgument("lambda_grid: lambda_max must be > 0");
    if (n_points < 2) throw InvalidArgument("lambda_grid: need at least 2 points");
    LambdaGrid grid{std::vector<double>(n_points), lambda_max};
    const double step = lambda_max / static_cast<double>(n_points - 1);
    for (std::size_t i = 0; i < n_points; ++i) grid.values[i] = step * static_cast<double>(i);
    grid.values.back() = lambda_max;
    return grid;
}

/// Least squares via Cholesky of the normal equations.
inline Matrix ols_fit(const Matrix& X, const Matrix& y)
{
    detail::require_rows_match(X, y, "ols_fit");
    const auto x = detail::as_eigen(X);
    const auto yy = detail::as_eigen(y);
    const Eigen::MatrixXd gram = x.transpose() * x;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) {
        throw NumericError("ols_fit: singular normal equations (X is rank deficient)");
    }
    const detail::RowMajorMatrix beta = llt.solve(x.transpose() * yy);
    return detail::from_eigen(beta);
}

/**
 * Minimizes loss_scale ||y - X beta||^2 + (lambda / 2) ||beta||^2.
 * With the default loss_scale 1/(2N) this is ((1/N) X^T X + lambda I)^-1 (1/N) X^T y.
 */
inline Matrix ridge_fit(const Matrix& X, const Matrix& y, double lambda,
                        std::optional<double> loss_scale = std::nullopt)
{
    detail::require_rows_match(X, y, "ridge_fit");
    if (!(lambda >= 0.0)) throw InvalidArgument("ridge_fit: lambda must be >= 0");
    const double two_scale = 2.0 * loss_scale.value_or(canonical_loss_scale(X.rows()));
    const auto x = detail::as_eigen(X);
    const auto yy = detail::as_eigen(y);
    Eigen::MatrixXd system = two_scale * (x.transpose() * x);
    system.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(system);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) {
        throw NumericError("ridge_fit: singular system (rank-deficient X with lambda = 0?)");
    }
    const detail::RowMajorMatrix beta = llt.solve(two_scale * (x.transpose() * yy));
    return detail::from_eigen(beta);
}

/**
 * Ridge solutions for many lambdas from one eigendecomposition of (1/N) X^T X.
 * Same objective as ridge_fit with the canonical scale.
 */
class RidgePath
{
public:
    RidgePath(const Matrix& X, const Matrix& y)
    {
        detail::require_rows_match(X, y, "RidgePath");
        const double inv_n = 1.0 / static_cast<double>(X.rows());
        const auto x = detail::as_eigen(X);
        const Eigen::MatrixXd gram = inv_n * (x.transpose() * x);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        if (eig.info() != Eigen::Success) throw NumericError("RidgePath: eigendecomposition failed");
        eigenvalues_ = eig.eigenvalues();
        eigenvectors_ = eig.eigenvectors();
        projected_ = eigenvectors_.transpose() * (inv_n * (x.transpose() * detail::as_eigen(y)));
    }

    Matrix fit(double lambda) const
    {
        if (!(lambda >= 0.0)) throw InvalidArgument("RidgePath::fit: lambda must be >= 0");
        const Eigen::ArrayXd denom = eigenvalues_.array() + lambda;
        if (denom.minCoeff() <= 1e-13 * std::max(1.0, eigenvalues_.maxCoeff())) {
            throw NumericError("RidgePath::fit: singular system");
        }
        const Eigen::MatrixXd scaled = projected_.array().colwise() / denom;
        const detail::RowMajorMatrix beta = eigenvectors_ * scaled;
        return detail::from_eigen(beta);
    }

private:
    Eigen::VectorXd eigenvalues_;
    Eigen::MatrixXd eigenvectors_;
    Eigen::MatrixXd projected_;
};

struct CdOptions
{
    /// Converged when the largest coordinate change in a sweep is below tol.
    double tol = 1e-8;
    std::size_t max_sweeps = 100000;
    /// After a sweep that leaves the signed support unchanged, jump to the exact
    /// minimizer on that support when its signs agree.
    bool active_set_steps = true;
    /// When set, receives the objective after every sweep (first column only).
    std::vector<double>* objective_trace = nullptr;
};

/// (1/(2N)) ||y - X beta||^2 + (l2 / 2) ||beta||^2 + l1 ||beta||_1, summed over columns.
inline double elastic_net_objective(const Matrix& X, const Matrix& y, const Matrix& beta, double l1, double l2)
{
    const double f = frobenius_norm(matmul(X, beta) - y);
    double l1_norm = 0.0, l2_sq = 0.0;
    for (double b : beta.data()) {
        l1_norm += std::abs(b);
        l2_sq += b * b;
    }
    return f * f / (2.0 * static_cast<double>(X.rows())) + 0.5 * l2 * l2_sq + l1 * l1_norm;
}

/**
 * Cyclic coordinate descent on the covariance form of the elastic net, with
 * optional exact steps on a stable signed support.
 *
 * Holds G = X^T X / N and C = X^T y / N so that many (l1, l2) pairs can be
 * solved, optionally warm-started from a previous solution. Each response
 * column is solved independently.
 */
class CoordinateDescent
{
public:
    CoordinateDescent(const Matrix& X, const Matrix& y)
    {
        detail::require_rows_match(X, y, "CoordinateDescent");
        const double inv_n = 1.0 / static_cast<double>(X.rows());
        gram_ = matmul_tn(X, X) * inv_n;
        cov_ = matmul_tn(X, y) * inv_n;
    }

    std::size_t n_features() const noexcept { return gram_.rows(); }
    std::size_t n_responses() const noexcept { return cov_.cols(); }

    const Matrix& gram() const noexcept { return gram_; }
    const Matrix& cov() const noexcept { return cov_; }

    /// Solves for every column; `warm` (d x p) seeds the iterate when given.
    Matrix fit(double l1, double l2, const Matrix* warm = nullptr, const CdOptions& opts = {}) const
    {
        if (!(l1 >= 0.0) || !(l2 >= 0.0)) throw InvalidArgument("coordinate descent: penalties must be >= 0");
        const std::size_t d = n_features();
        const std::size_t p = n_responses();
        Matrix beta(d, p);
        if (warm) {
            if (warm->rows() != d || warm->cols() != p) throw DimensionError("coordinate descent: warm start shape");
            beta = *warm;
        }

        std::vector<double> b(d), r(d);
        for (std::size_t col = 0; col < p; ++col) {
            for (std::size_t i = 0; i < d; ++i) b[i] = beta(i, col);
            // r = c - G b
            for (std::size_t i = 0; i < d; ++i) {
                auto gi = gram_.row(i);
                double s = cov_(i, col);
                for (std::size_t k = 0; k < d; ++k) s -= gi[k] * b[k];
                r[i] = s;
            }

            std::vector<signed char> pattern(d, 0), previous(d, 0);
            std::size_t sweep = 0;
            for (;; ++sweep) {
                if (sweep >= opts.max_sweeps) {
                    throw ConvergenceError("coordinate descent: no convergence after "
                                           + std::to_string(opts.max_sweeps) + " sweeps");
                }
                double max_change = 0.0;
                double* rp = r.data();
                for (std::size_t j = 0; j < d; ++j) {
                    const double gjj = gram_(j, j);
                    const double denom = gjj + l2;
                    const double next = denom > 0.0 ? soft_threshold(rp[j] + gjj * b[j], l1) / denom : 0.0;
                    const double delta = next - b[j];
                    if (delta == 0.0) continue;
                    // G is symmetric, so row j doubles as column j.
                    const double* gj = gram_.row(j).data();
                    for (std::size_t k = 0; k < d; ++k) rp[k] -= gj[k] * delta;
                    b[j] = next;
                    max_change = std::max(max_change, std::abs(delta));
                }
                if (opts.objective_trace && col == 0) opts.objective_trace->push_back(column_objective(b, col, l1, l2));
                if (max_change < opts.tol) break;
                if (opts.active_set_steps) {
                    for (std::size_t j = 0; j < d; ++j) pattern[j] = static_cast<signed char>((b[j] > 0) - (b[j] < 0));
                    if (pattern == previous) active_set_step(pattern, col, l1, l2, b, r);
                    std::swap(pattern, previous);
                }
            }
            for (std::size_t i = 0; i < d; ++i) beta(i, col) = b[i];
        }
        return beta;
    }

private:
    /**
     * Solves (G_AA + l2 I) b_A = c_A - l1 s_A on the signed support s and
     * accepts it when every sign agrees; that point minimizes the objective over
     * the face containing b, so the objective cannot increase.
     */
    void active_set_step(const std::vector<signed char>& s, std::size_t col, double l1, double l2,
                         std::vector<double>& b, std::vector<double>& r) const
    {
        const std::size_t d = b.size();
        std::vector<std::size_t> active;
        for (std::size_t j = 0; j < d; ++j)
            if (s[j] != 0) active.push_back(j);
        if (active.empty()) return;

        const auto m = static_cast<Eigen::Index>(active.size());
        Eigen::MatrixXd system(m, m);
        Eigen::VectorXd rhs(m);
        for (Eigen::Index a = 0; a < m; ++a) {
            for (Eigen::Index c = 0; c < m; ++c) system(a, c) = gram_(active[a], active[c]);
            system(a, a) += l2;
            rhs(a) = cov_(active[a], col) - l1 * s[active[a]];
        }
        Eigen::LLT<Eigen::MatrixXd> llt(system);
        if (llt.info() != Eigen::Success) return;
        const Eigen::VectorXd sol = llt.solve(rhs);
        for (Eigen::Index a = 0; a < m; ++a) {
            if (!std::isfinite(sol(a)) || (sol(a) > 0 ? 1 : -1) != s[active[a]] || sol(a) == 0.0) return;
        }
        for (Eigen::Index a = 0; a < m; ++a) b[active[a]] = sol(a);
        for (std::size_t i = 0; i < d; ++i) {
            const double* gi = gram_.row(i).data();
            double v = cov_(i, col);
            for (std::size_t k = 0; k < d; ++k) v -= gi[k] * b[k];
            r[i] = v;
        }
    }

    /// Objective up to the constant ||y||^2 / (2N).
    double column_objective(const std::vector<double>& b, std::size_t col, double l1, double l2) const
    {
        const std::size_t d = b.size();
        double quad = 0.0, lin = 0.0, pen1 = 0.0, pen2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            auto gi = gram_.row(i);
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += gi[k] * b[k];
            quad += b[i] * s;
            lin += cov_(i, col) * b[i];
            pen1 += std::abs(b[i]);
            pen2 += b[i] * b[i];
        }
        return 0.5 * quad - lin + 0.5 * l2 * pen2 + l1 * pen1;
    }

    Matrix gram_;
    Matrix cov_;
};

/// Minimizes (1/(2N)) ||y - X beta||^2 + (l2 / 2) ||beta||^2 + l1 ||beta||_1.
inline Matrix elastic_net_fit(const Matrix& X, const Matrix& y, double lambda_l1, double lambda_l2,
                              const CdOptions& opts = {})
{
    detail::require_rows_match(X, y, "elastic_net_fit");
    return CoordinateDescent(X, y).fit(lambda_l1, lambda_l2, nullptr, opts);
}

/// Minimizes (1/(2N)) ||y - X beta||^2 + lambda ||beta||_1.
inline Matrix lasso_fit(const Matrix& X, const Matrix& y, double lambda, const CdOptions& opts = {})
{
    detail::require_rows_match(X, y, "lasso_fit");
    return CoordinateDescent(X, y).fit(lambda, 0.0, nullptr, opts);
}

/// Smallest lambda at which the lasso solution is zero: max_j |X_j^T y| / N.
inline double lasso_lambda_max(const Matrix& X, const Matrix& y)
{
    detail::require_rows_match(X, y, "lasso_lambda_max");
    return max_abs(matmul_tn(X, y)) / static_cast<double>(X.rows());
}

} // namespace msplit

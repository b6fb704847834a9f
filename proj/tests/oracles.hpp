#pragma once

// Independent reference computations used only by the tests. None of these
// call into the code paths they check.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <msplit/matrix.hpp>

namespace oracle {

using msplit::Matrix;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    std::vector<double> data(rows * cols);
    for (double& v : data) v = normal(rng);
    return Matrix(rows, cols, std::move(data));
}

/// Textbook triple loop.
inline Matrix triple_loop_product(const Matrix& a, const Matrix& b)
{
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    }
    return c;
}

inline double entrywise_frobenius(const Matrix& a)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

/**
 * Largest singular value of a (n = a.cols() <= 4) from the characteristic
 * polynomial of aᵀa: Faddeev-LeVerrier coefficients, then a downward scan for
 * the last sign change and bisection. Assumes a simple top eigenvalue.
 */
inline double charpoly_spectral_norm(const Matrix& a)
{
    const std::size_t n = a.cols();
    Matrix g = triple_loop_product([&] {
        Matrix t(a.cols(), a.rows());
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
        return t;
    }(), a);

    // p(x) = x^n + c[1] x^(n-1) + ... + c[n]
    std::vector<double> c(n + 1, 0.0);
    c[0] = 1.0;
    Matrix m(n, n);  // M_0 = 0
    for (std::size_t k = 1; k <= n; ++k) {
        // M_k = G M_{k-1} + c_{k-1} I ; c_k = -tr(G M_k) / k
        Matrix next = triple_loop_product(g, m);
        for (std::size_t i = 0; i < n; ++i) next(i, i) += c[k - 1];
        m = next;
        const Matrix gm = triple_loop_product(g, m);
        double tr = 0.0;
        for (std::size_t i = 0; i < n; ++i) tr += gm(i, i);
        c[k] = -tr / static_cast<double>(k);
    }
    auto p = [&](double x) {
        double v = 0.0;
        for (double coef : c) v = v * x + coef;
        return v;
    };

    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += g(i, i);
    double hi = trace * 1.0001 + 1e-12;
    const std::size_t scan = 200000;
    const double h = hi / static_cast<double>(scan);
    double lo = hi;
    for (std::size_t s = 0; s < scan; ++s) {
        lo = hi - h;
        if ((p(lo) > 0) != (p(hi) > 0)) break;
        hi = lo;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((p(mid) > 0) == (p(hi) > 0)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return std::sqrt(0.5 * (lo + hi));
}

/// Central differences of f at every entry of x.
inline Matrix finite_difference_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-5)
{
    Matrix g(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            Matrix plus = x, minus = x;
            plus(i, j) += h;
            minus(i, j) -= h;
            g(i, j) = (f(plus) - f(minus)) / (2.0 * h);
        }
    }
    return g;
}

/// Dense solve by Gaussian elimination with partial pivoting (small systems).
inline std::vector<double> gaussian_solve(std::vector<std::vector<double>> a, std::vector<double> b)
{
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t k = col; k < n; ++k) a[r][k] -= f * a[col][k];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
        x[i] = s / a[i][i];
    }
    return x;
}

inline double lasso_objective(const Matrix& X, const std::vector<double>& y, const std::vector<double>& beta, double lambda)
{
    double rss = 0.0;
    for (std::size_t i = 0; i < X.rows(); ++i) {
        double r = y[i];
        for (std::size_t j = 0; j < X.cols(); ++j) r -= X(i, j) * beta[j];
        rss += r * r;
    }
    double l1 = 0.0;
    for (double b : beta) l1 += std::abs(b);
    return rss / (2.0 * static_cast<double>(X.rows())) + lambda * l1;
}

/**
 * Exact lasso minimum by enumerating sign patterns in {-1, 0, +1}^d: for each
 * pattern solve the stationarity system on its active set and keep solutions
 * whose signs agree with the pattern.
 */
inline double lasso_sign_pattern_minimum(const Matrix& X, const std::vector<double>& y, double lambda)
{
    const std::size_t d = X.cols();
    const double n = static_cast<double>(X.rows());
    std::size_t patterns = 1;
    for (std::size_t j = 0; j < d; ++j) patterns *= 3;

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t code = 0; code < patterns; ++code) {
        std::vector<int> sign(d);
        std::size_t c = code;
        for (std::size_t j = 0; j < d; ++j) {
            sign[j] = static_cast<int>(c % 3) - 1;
            c /= 3;
        }
        std::vector<std::size_t> active;
        for (std::size_t j = 0; j < d; ++j)
            if (sign[j] != 0) active.push_back(j);

        std::vector<double> beta(d, 0.0);
        if (!active.empty()) {
            const std::size_t k = active.size();
            std::vector<std::vector<double>> a(k, std::vector<double>(k));
            std::vector<double> rhs(k);
            for (std::size_t r = 0; r < k; ++r) {
                for (std::size_t s = 0; s < k; ++s) {
                    double v = 0.0;
                    for (std::size_t i = 0; i < X.rows(); ++i) v += X(i, active[r]) * X(i, active[s]);
                    a[r][s] = v / n;
                }
                double v = 0.0;
                for (std::size_t i = 0; i < X.rows(); ++i) v += X(i, active[r]) * y[i];
                rhs[r] = v / n - lambda * sign[active[r]];
            }
            const auto sol = gaussian_solve(a, rhs);
            bool consistent = true;
            for (std::size_t r = 0; r < k; ++r) {
                if ((sol[r] > 0 ? 1 : -1) != sign[active[r]] || sol[r] == 0.0) consistent = false;
                beta[active[r]] = sol[r];
            }
            if (!consistent) continue;
        }
        best = std::min(best, lasso_objective(X, y, beta, lambda));
    }
    return best;
}

} // namespace oracle

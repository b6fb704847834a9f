#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <msplit/errors.hpp>

namespace msplit {

/**
 * Dense row-major real matrix.
 *
 * Entries are checked for finiteness when a matrix is built from external
 * data. Element access through operator() is unchecked.
 */
class Matrix
{
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill)
    {
        if (!std::isfinite(fill)) {
            throw NumericError("Matrix: non-finite fill value");
        }
    }

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data))
    {
        if (data_.size() != rows_ * cols_) {
            throw DimensionError("Matrix: data length " + std::to_string(data_.size())
                                 + " does not equal " + std::to_string(rows_) + "x"
                                 + std::to_string(cols_));
        }
        for (double v : data_) {
            if (!std::isfinite(v)) {
                throw NumericError("Matrix: non-finite entry");
            }
        }
    }

    /// Row-wise nested initializer, e.g. Matrix{{1, 2}, {3, 4}}.
    Matrix(std::initializer_list<std::initializer_list<double>> rows)
    {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) {
                throw DimensionError("Matrix: ragged initializer");
            }
            for (double v : r) {
                if (!std::isfinite(v)) {
                    throw NumericError("Matrix: non-finite entry");
                }
                data_.push_back(v);
            }
        }
    }

    static Matrix identity(std::size_t n)
    {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix column(std::span<const double> values)
    {
        return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept
    {
        return {data_.data() + i * cols_, cols_};
    }

    std::vector<double> col(std::size_t j) const
    {
        std::vector<double> out(rows_);
        for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
        return out;
    }

    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const noexcept
    {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    Matrix& operator+=(const Matrix& o)
    {
        require_same_shape(o, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Matrix& operator-=(const Matrix& o)
    {
        require_same_shape(o, "operator-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }

    Matrix& operator*=(double s) noexcept
    {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }

    friend bool operator==(const Matrix& a, const Matrix& b) noexcept
    {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    void require_same_shape(const Matrix& o, const char* what) const
    {
        if (!same_shape(o)) {
            throw DimensionError(std::string("Matrix::") + what + ": shape mismatch");
        }
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix transpose(const Matrix& a)
{
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

/// Standard product a * b.
inline Matrix matmul(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols())
                             + " times " + std::to_string(b.rows()) + "x"
                             + std::to_string(b.cols()));
    }
    Matrix c(a.rows(), b.cols());
    // i-k-j order keeps the inner loop contiguous in both b and c.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto bk = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

/// aᵀ b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_tn: row counts differ");
    }
    Matrix c(a.cols(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto ar = a.row(r);
        auto br = b.row(r);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double ari = ar[i];
            if (ari == 0.0) continue;
            auto ci = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += ari * br[j];
        }
    }
    return c;
}

/// Elementwise product.
inline Matrix hadamard(const Matrix& a, const Matrix& b)
{
    if (!a.same_shape(b)) throw DimensionError("hadamard: shape mismatch");
    Matrix c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < cd.size(); ++i) cd[i] *= bd[i];
    return c;
}

inline double frobenius_norm(const Matrix& a)
{
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

inline double max_abs(const Matrix& a)
{
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

inline std::size_t count_nonzero(const Matrix& a)
{
    return static_cast<std::size_t>(
        std::count_if(a.data().begin(), a.data().end(), [](double v) { return v != 0.0; }));
}

/**
 * Largest singular value of a, by power iteration on aᵀa.
 *
 * Iterates until the Rayleigh quotient changes by less than `rel_tol`
 * relative. Throws ConvergenceError if the cap is reached first.
 */
inline double spectral_norm(const Matrix& a, double rel_tol = 1e-10, std::size_t max_iter = 100000)
{
    if (a.empty()) throw DimensionError("spectral_norm: empty matrix");
    const std::size_t n = a.cols();
    const std::size_t m = a.rows();

    // Deterministic, non-degenerate start vector.
    std::vector<double> v(n);
    for (std::size_t j = 0; j < n; ++j) v[j] = 1.0 + 0.1 * static_cast<double>(j % 7);
    std::vector<double> av(m), w(n);

    auto normalize = [](std::vector<double>& x) {
        double s = 0.0;
        for (double e : x) s += e * e;
        s = std::sqrt(s);
        if (s > 0) for (double& e : x) e /= s;
        return s;
    };
    normalize(v);

    double lambda = 0.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        // w = aᵀ a v
        std::fill(av.begin(), av.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            auto ai = a.row(i);
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += ai[j] * v[j];
            av[i] = s;
        }
        std::fill(w.begin(), w.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            auto ai = a.row(i);
            for (std::size_t j = 0; j < n; ++j) w[j] += ai[j] * av[i];
        }
        double next = 0.0;
        for (std::size_t j = 0; j < n; ++j) next += v[j] * w[j];
        const double wn = normalize(w);
        if (wn == 0.0) return 0.0;
        v.swap(w);
        if (it > 0 && std::abs(next - lambda) <= rel_tol * std::abs(next)) {
            return std::sqrt(next);
        }
        lambda = next;
    }
    throw ConvergenceError("spectral_norm: power iteration did not converge");
}

} // namespace msplit

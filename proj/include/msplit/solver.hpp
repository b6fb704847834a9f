#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include <msplit/errors.hpp>
#include <msplit/hyperparams.hpp>
#include <msplit/io.hpp>
#include <msplit/matrix.hpp>
#include <msplit/parallel.hpp>

namespace msplit {

inline double soft_threshold(double z, double lambda) noexcept
{
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

/// Elementwise sign(z) * max(|z| - lambda, 0).
inline Matrix soft_threshold(const Matrix& z, double lambda)
{
    if (!(lambda >= 0.0)) throw InvalidArgument("soft_threshold: lambda must be >= 0");
    Matrix out = z;
    for (double& v : out.data()) v = soft_threshold(v, lambda);
    return out;
}

inline double canonical_loss_scale(std::size_t n_samples)
{
    return 1.0 / (2.0 * static_cast<double>(n_samples));
}

/**
 * Largest step size alpha with kappa * alpha <= nu / (kappa (2 + nu * H)),
 * where H = 2 * loss_scale * ||X^T X||_2 bounds the Hessian of the data term.
 */
inline double default_step_size(const Matrix& X, double nu, double kappa,
                                std::optional<double> loss_scale = std::nullopt)
{
    if (!(nu > 0.0) || !(kappa > 0.0)) throw InvalidArgument("default_step_size: nu, kappa must be > 0");
    const double scale = loss_scale.value_or(canonical_loss_scale(X.rows()));
    const double s = spectral_norm(X);
    const double hessian_bound = 2.0 * scale * s * s;
    return nu / (kappa * kappa * (2.0 + nu * hessian_bound));
}

/// Design X (N x d), responses E (N x p), and resolved hyperparameters.
class Problem
{
public:
    Problem(Matrix X, Matrix E, Hyperparams hyper)
        : X_(std::move(X)), E_(std::move(E)), hyper_(hyper), requested_(hyper)
    {
        hyper_.validate();
        if (X_.rows() != E_.rows()) {
            throw DimensionError("Problem: X has " + std::to_string(X_.rows()) + " rows, E has "
                                 + std::to_string(E_.rows()));
        }
        if (X_.rows() == 0 || X_.cols() == 0 || E_.cols() == 0) {
            throw DimensionError("Problem: N, d and p must all be >= 1");
        }

        if (!hyper_.loss_scale) hyper_.loss_scale = canonical_loss_scale(X_.rows());
        const double bound = default_step_size(X_, hyper_.nu, hyper_.kappa, hyper_.loss_scale);
        if (hyper_.alpha) {
            if (*hyper_.alpha > bound * (1.0 + 1e-9)) {
                throw InvalidArgument("alpha = " + io::format_double(*hyper_.alpha)
                                      + " exceeds the stability bound "
                                      + io::format_double(bound));
            }
        } else {
            hyper_.alpha = bound;
        }
        if (!hyper_.record_every) {
            const double steps = std::floor(hyper_.t_max / (500.0 * *hyper_.alpha));
            hyper_.record_every = static_cast<std::size_t>(std::max(1.0, steps));
        }

        const double two_scale = 2.0 * *hyper_.loss_scale;
        gram_ = matmul_tn(X_, X_) * two_scale;
        xte_ = matmul_tn(X_, E_) * two_scale;
    }

    const Matrix& X() const noexcept { return X_; }
    const Matrix& E() const noexcept { return E_; }

    /// Hyperparameters with every optional field filled in.
    const Hyperparams& hyper() const noexcept { return hyper_; }
    /// Hyperparameters exactly as supplied by the caller.
    const Hyperparams& requested() const noexcept { return requested_; }

    double alpha() const noexcept { return *hyper_.alpha; }
    double loss_scale() const noexcept { return *hyper_.loss_scale; }
    std::size_t record_every() const noexcept { return *hyper_.record_every; }

    std::size_t n_samples() const noexcept { return X_.rows(); }
    std::size_t n_features() const noexcept { return X_.cols(); }
    std::size_t n_responses() const noexcept { return E_.cols(); }

    /// Steps taken by run_path: the largest k with k * alpha <= t_max.
    std::size_t path_steps() const noexcept
    {
        return static_cast<std::size_t>(std::floor(hyper_.t_max / alpha() * (1.0 + 1e-12)));
    }

    /// 2 * loss_scale * X^T X
    const Matrix& scaled_gram() const noexcept { return gram_; }
    /// 2 * loss_scale * X^T E
    const Matrix& scaled_xte() const noexcept { return xte_; }

    /// loss_scale * ||XB - E||_F^2
    double fit_loss(const Matrix& B) const
    {
        const Matrix r = matmul(X_, B) - E_;
        const double f = frobenius_norm(r);
        return loss_scale() * f * f;
    }

    /// Split loss: fit_loss(B) + ||B - Gamma||_F^2 / (2 nu)
    double loss(const Matrix& B, const Matrix& Gamma) const
    {
        const double f = frobenius_norm(B - Gamma);
        return fit_loss(B) + f * f / (2.0 * hyper_.nu);
    }

private:
    Matrix X_;
    Matrix E_;
    Hyperparams hyper_;
    Hyperparams requested_;
    Matrix gram_;
    Matrix xte_;
};

inline void require_coefficient_shape(const Problem& problem, const Matrix& m, const char* what)
{
    if (m.rows() != problem.n_features() || m.cols() != problem.n_responses()) {
        throw DimensionError(std::string(what) + ": expected " + std::to_string(problem.n_features())
                             + "x" + std::to_string(problem.n_responses()) + ", got "
                             + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

/// Gradient of the split loss in B: 2 loss_scale X^T(XB - E) + (B - Gamma) / nu.
inline Matrix grad_B(const Problem& problem, const Matrix& B, const Matrix& Gamma)
{
    require_coefficient_shape(problem, B, "grad_B");
    require_coefficient_shape(problem, Gamma, "grad_B");
    Matrix g = matmul(problem.scaled_gram(), B) - problem.scaled_xte();
    const double inv_nu = 1.0 / problem.hyper().nu;
    auto gd = g.data();
    auto bd = B.data();
    auto cd = Gamma.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += inv_nu * (bd[i] - cd[i]);
    return g;
}

/// Gradient of the split loss in Gamma: (Gamma - B) / nu.
inline Matrix grad_Gamma(const Problem& problem, const Matrix& B, const Matrix& Gamma)
{
    require_coefficient_shape(problem, B, "grad_Gamma");
    require_coefficient_shape(problem, Gamma, "grad_Gamma");
    return (Gamma - B) * (1.0 / problem.hyper().nu);
}

/// Iterate (B_k, Z_k, Gamma_k, Btilde_k) with t = k * alpha.
struct SolverState
{
    Matrix B;
    Matrix Z;
    Matrix Gamma;
    Matrix Btilde;
    std::size_t k = 0;
    double t = 0.0;
};

/// All-zero state: B_0 = Z_0 = Gamma_0 = Btilde_0 = 0.
inline SolverState init(const Problem& problem)
{
    const Matrix zero(problem.n_features(), problem.n_responses());
    return SolverState{zero, zero, zero, zero, 0, 0.0};
}

/**
 * Advances a SolverState in place, reusing one gradient buffer.
 *
 * Each step:
 *   B     <- B - kappa alpha grad_B(B, Gamma)
 *   Z     <- Z - alpha grad_Gamma(B, Gamma)     (both gradients at the old iterate)
 *   Gamma <- kappa S(Z, 1)
 *   Btilde = B on supp(Gamma), 0 elsewhere
 */
class LbiIterator
{
public:
    explicit LbiIterator(const Problem& problem) : LbiIterator(problem, init(problem)) {}

    LbiIterator(const Problem& problem, SolverState state)
        : problem_(&problem), state_(std::move(state)),
          grad_(problem.n_features(), problem.n_responses())
    {
        require_coefficient_shape(problem, state_.B, "LbiIterator");
        require_coefficient_shape(problem, state_.Z, "LbiIterator");
        require_coefficient_shape(problem, state_.Gamma, "LbiIterator");
        require_coefficient_shape(problem, state_.Btilde, "LbiIterator");
    }

    const SolverState& state() const noexcept { return state_; }
    SolverState release() && { return std::move(state_); }

    void advance()
    {
        const Problem& pb = *problem_;
        const std::size_t d = pb.n_features();
        const std::size_t p = pb.n_responses();
        const Matrix& gram = pb.scaled_gram();
        const Matrix& xte = pb.scaled_xte();
        const double kappa = pb.hyper().kappa;
        const double alpha = pb.alpha();
        const double inv_nu = 1.0 / pb.hyper().nu;

        // Data-fit gradient at the old B.
        using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        const auto di = static_cast<Eigen::Index>(d);
        const auto pi = static_cast<Eigen::Index>(p);
        Eigen::Map<RowMajor> grad(grad_.data().data(), di, pi);
        grad.noalias() = Eigen::Map<const RowMajor>(gram.data().data(), di, di)
                         * Eigen::Map<const RowMajor>(state_.B.data().data(), di, pi);
        grad -= Eigen::Map<const RowMajor>(xte.data().data(), di, pi);

        auto b = state_.B.data();
        auto z = state_.Z.data();
        auto gamma = state_.Gamma.data();
        auto bt = state_.Btilde.data();
        auto g = grad_.data();
        bool finite = true;
        for (std::size_t i = 0; i < b.size(); ++i) {
            const double split = inv_nu * (b[i] - gamma[i]);
            b[i] -= kappa * alpha * (g[i] + split);
            z[i] += alpha * split;
            gamma[i] = kappa * soft_threshold(z[i], 1.0);
            bt[i] = gamma[i] != 0.0 ? b[i] : 0.0;
            finite = finite && std::isfinite(b[i]) && std::isfinite(z[i]);
        }
        ++state_.k;
        state_.t = static_cast<double>(state_.k) * alpha;
        if (!finite) {
            throw NumericError("MSplit LBI diverged at iteration " + std::to_string(state_.k)
                               + " (step size too large?)");
        }
    }

private:
    const Problem* problem_;
    SolverState state_;
    Matrix grad_;
};

/// One iteration from `state`, returning the next state.
inline SolverState step(const Problem& problem, const SolverState& state)
{
    LbiIterator it(problem, state);
    it.advance();
    return std::move(it).release();
}

struct PathPoint
{
    std::size_t k = 0;
    double t = 0.0;
    Matrix B;
    Matrix Gamma;
    Matrix Btilde;
};

/// Recorded regularization path, in increasing t.
struct Path
{
    std::vector<PathPoint> points;
    Hyperparams hyper;
};

inline PathPoint snapshot(const SolverState& s)
{
    return PathPoint{s.k, s.t, s.B, s.Gamma, s.Btilde};
}

/**
 * Visits the initial state and then every iterate up to `max_steps`.
 * `visit(state)` returns false to stop early.
 */
template <class Visitor>
void trace_path(const Problem& problem, std::size_t max_steps, Visitor&& visit)
{
    LbiIterator it(problem);
    if (!visit(it.state())) return;
    for (std::size_t k = 0; k < max_steps; ++k) {
        it.advance();
        if (!visit(it.state())) return;
    }
}

/// Iterates while k * alpha <= t_max, recording every record_every steps plus the last one.
inline Path run_path(const Problem& problem)
{
    Path path;
    path.hyper = problem.hyper();
    const std::size_t steps = problem.path_steps();
    const std::size_t every = problem.record_every();
    trace_path(problem, steps, [&](const SolverState& s) {
        if (s.k % every == 0 || s.k == steps) path.points.push_back(snapshot(s));
        return true;
    });
    return path;
}

/// Strong + weak + noise split of a dense estimate.
struct Decomposition
{
    Matrix strong;
    Matrix weak;
    Matrix noise;
    double tau = 0.0;
};

/// Robust noise scale of B - Btilde: median(|r|) / 0.6745.
inline double default_decomposition_tau(const Matrix& B, const Matrix& Btilde)
{
    if (!B.same_shape(Btilde)) throw DimensionError("default_decomposition_tau: shape mismatch");
    std::vector<double> r(B.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::abs(B.data()[i] - Btilde.data()[i]);
    if (r.empty()) return 0.0;
    const auto mid = r.begin() + static_cast<std::ptrdiff_t>(r.size() / 2);
    std::nth_element(r.begin(), mid, r.end());
    double median = *mid;
    if (r.size() % 2 == 0) {
        median = 0.5 * (median + *std::max_element(r.begin(), mid));
    }
    return median / 0.6745;
}

inline Decomposition decompose(const Matrix& B, const Matrix& Btilde, double tau)
{
    if (!B.same_shape(Btilde)) throw DimensionError("decompose: B and Btilde shapes differ");
    if (!(tau >= 0.0)) throw InvalidArgument("decompose: tau must be >= 0");
    Decomposition out{Btilde, Matrix(B.rows(), B.cols()), Matrix(B.rows(), B.cols()), tau};
    for (std::size_t i = 0; i < B.rows(); ++i) {
        for (std::size_t j = 0; j < B.cols(); ++j) {
            const double r = B(i, j) - Btilde(i, j);
            if (std::abs(r) > tau) {
                out.weak(i, j) = r;
            } else {
                out.noise(i, j) = r;
            }
        }
    }
    return out;
}

enum class Estimator { dense, sparse };

inline const char* to_string(Estimator e) noexcept
{
    return e == Estimator::dense ? "dense" : "sparse";
}

struct CvSelection
{
    double t = 0.0;
    Estimator which = Estimator::dense;
    double loss = 0.0;

    /// Best t restricted to each estimator.
    double t_dense = 0.0;
    double t_sparse = 0.0;

    std::vector<double> grid;
    std::vector<double> dense_loss;
    std::vector<double> sparse_loss;
};

inline Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& rows)
{
    Matrix out(rows.size(), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        auto src = m.row(rows[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

/**
 * Chooses t (and dense vs. sparse estimator) by K-fold cross-validation.
 *
 * The grid is the set of recorded t values of the full-data path. Each fold
 * path is evaluated at a grid time using its latest iterate not beyond it.
 * Validation loss is (1 / (2 N_val)) ||X_val B - E_val||_F^2. Ties go to the
 * smaller t, then to the dense estimator.
 */
inline CvSelection select_t_cv(const Problem& problem, std::size_t folds, std::uint64_t seed)
{
    const std::size_t n = problem.n_samples();
    if (folds < 2) throw InvalidArgument("select_t_cv: folds must be >= 2");
    if (n < folds) {
        throw InvalidArgument("select_t_cv: " + std::to_string(folds) + " folds need at least as many rows, got "
                              + std::to_string(n));
    }

    CvSelection sel;
    {
        const std::size_t steps = problem.path_steps();
        const std::size_t every = problem.record_every();
        for (std::size_t k = 0; k <= steps; ++k) {
            if (k % every == 0 || k == steps) sel.grid.push_back(static_cast<double>(k) * problem.alpha());
        }
    }
    const std::size_t g = sel.grid.size();

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<std::vector<double>> dense(folds, std::vector<double>(g));
    std::vector<std::vector<double>> sparse(folds, std::vector<double>(g));

    parallel_for(folds, [&](std::size_t f) {
        std::vector<std::size_t> train, val;
        for (std::size_t i = 0; i < n; ++i) (i % folds == f ? val : train).push_back(perm[i]);
        if (val.empty() || train.empty()) throw InvalidArgument("select_t_cv: empty fold");
        std::sort(train.begin(), train.end());
        std::sort(val.begin(), val.end());

        Hyperparams hyper = problem.requested();
        hyper.record_every = 1;
        hyper.loss_scale = problem.requested().loss_scale;
        const Problem fold(select_rows(problem.X(), train), select_rows(problem.E(), train), hyper);
        const Matrix x_val = select_rows(problem.X(), val);
        const Matrix e_val = select_rows(problem.E(), val);
        const double val_scale = 1.0 / (2.0 * static_cast<double>(val.size()));
        auto val_loss = [&](const Matrix& B) {
            const double f = frobenius_norm(matmul(x_val, B) - e_val);
            return val_scale * f * f;
        };

        std::size_t gi = 0;
        const double a = fold.alpha();
        const double eps = 1e-12 * std::max(1.0, hyper.t_max);
        trace_path(fold, std::numeric_limits<std::size_t>::max(), [&](const SolverState& s) {
            const double next_t = static_cast<double>(s.k + 1) * a;
            while (gi < g && next_t > sel.grid[gi] + eps) {
                dense[f][gi] = val_loss(s.B);
                sparse[f][gi] = val_loss(s.Btilde);
                ++gi;
            }
            return gi < g;
        });
    });

    sel.dense_loss.assign(g, 0.0);
    sel.sparse_loss.assign(g, 0.0);
    for (std::size_t f = 0; f < folds; ++f) {
        for (std::size_t i = 0; i < g; ++i) {
            sel.dense_loss[i] += dense[f][i] / static_cast<double>(folds);
            sel.sparse_loss[i] += sparse[f][i] / static_cast<double>(folds);
        }
    }

    double best = std::numeric_limits<double>::infinity();
    double best_dense = best, best_sparse = best;
    for (std::size_t i = 0; i < g; ++i) {
        if (sel.dense_loss[i] < best) {
            best = sel.dense_loss[i];
            sel.t = sel.grid[i];
            sel.which = Estimator::dense;
        }
        if (sel.sparse_loss[i] < best) {
            best = sel.sparse_loss[i];
            sel.t = sel.grid[i];
            sel.which = Estimator::sparse;
        }
        if (sel.dense_loss[i] < best_dense) {
            best_dense = sel.dense_loss[i];
            sel.t_dense = sel.grid[i];
        }
        if (sel.sparse_loss[i] < best_sparse) {
            best_sparse = sel.sparse_loss[i];
            sel.t_sparse = sel.grid[i];
        }
    }
    sel.loss = best;
    return sel;
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::json to_json(const Hyperparams& h)
{
    nlohmann::json j{{"kappa", h.kappa}, {"nu", h.nu}, {"t_max", h.t_max}};
    j["alpha"] = h.alpha ? nlohmann::json(*h.alpha) : nlohmann::json("auto");
    j["record_every"] = h.record_every ? nlohmann::json(*h.record_every) : nlohmann::json("auto");
    j["loss_scale"] = h.loss_scale ? nlohmann::json(*h.loss_scale) : nlohmann::json("auto");
    return j;
}

/**
 * Long-format CSV: t,column_index,row_index,B_value,Gamma_value,Btilde_value.
 * A point lists the entries that are nonzero in any of B, Gamma, Btilde or
 * that changed since the previous recorded point.
 */
inline void write_path_csv(std::ostream& out, const Path& path)
{
    out << "t,column_index,row_index,B_value,Gamma_value,Btilde_value\n";
    const PathPoint* prev = nullptr;
    for (const auto& pt : path.points) {
        for (std::size_t j = 0; j < pt.B.cols(); ++j) {
            for (std::size_t i = 0; i < pt.B.rows(); ++i) {
                const double b = pt.B(i, j), g = pt.Gamma(i, j), bt = pt.Btilde(i, j);
                bool emit = b != 0.0 || g != 0.0 || bt != 0.0;
                if (!emit && prev) {
                    emit = prev->B(i, j) != b || prev->Gamma(i, j) != g || prev->Btilde(i, j) != bt;
                }
                if (!emit) continue;
                out << io::format_double(pt.t) << ',' << j << ',' << i << ',' << io::format_double(b) << ','
                    << io::format_double(g) << ',' << io::format_double(bt) << '\n';
            }
        }
        prev = &pt;
    }
}

/// Dense JSON form, intended for small problems.
inline nlohmann::json path_to_json(const Path& path)
{
    nlohmann::json points = nlohmann::json::array();
    for (const auto& pt : path.points) {
        points.push_back({{"k", pt.k},
                          {"t", pt.t},
                          {"B", io::matrix_to_json(pt.B)},
                          {"Gamma", io::matrix_to_json(pt.Gamma)},
                          {"Btilde", io::matrix_to_json(pt.Btilde)}});
    }
    return {{"hyper", to_json(path.hyper)}, {"points", std::move(points)}};
}

inline void write_decomposition_csv(std::ostream& out, const Decomposition& dec)
{
    out << "row_index,column_index,strong,weak,noise\n";
    for (std::size_t i = 0; i < dec.strong.rows(); ++i) {
        for (std::size_t j = 0; j < dec.strong.cols(); ++j) {
            out << i << ',' << j << ',' << io::format_double(dec.strong(i, j)) << ','
                << io::format_double(dec.weak(i, j)) << ',' << io::format_double(dec.noise(i, j)) << '\n';
        }
    }
}

} // namespace msplit

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <msplit/baselines.hpp>
#include <msplit/errors.hpp>
#include <msplit/io.hpp>
#include <msplit/matrix.hpp>
#include <msplit/parallel.hpp>
#include <msplit/solver.hpp>

namespace msplit::sim {

/// Synthetic-regression protocol: equicorrelated Gaussian design, sparse strong + weak truth.
struct SimConfig
{
    std::size_t N = 100;
    std::size_t d = 80;
    double sigma = 0.2;
    double noise_sd = 0.5;
    std::size_t trials = 20;
    std::uint64_t seed = 0;
    double kappa = 5.0;
    std::map<double, double> nu_by_sigma{{0.2, 3.0}, {0.4, 5.0}, {0.6, 7.0}, {0.8, 10.0}};
    /// Overrides nu_by_sigma when set.
    std::optional<double> nu;
    /// Overrides the default step size when set.
    std::optional<double> alpha;

    double lambda_max = 5.0;
    std::size_t grid_points = 500;
    /// Elastic-net mixture values 0, 1/(m-1), ..., 1.
    std::size_t mixture_points = 21;

    /// MSplit paths stop once every column has min(d, N) active entries, or
    /// once t exceeds horizon_factor times the t of the first active entry.
    double horizon_factor = 50.0;
    std::size_t max_steps = 20'000'000;

    /// Also report the MSplit dense estimator at a cross-validated t.
    bool with_cv = false;
    std::size_t cv_folds = 5;

    void validate() const
    {
        if (N == 0 || d == 0) throw InvalidArgument("SimConfig: N and d must be >= 1");
        if (!(sigma >= 0.0 && sigma < 1.0)) throw InvalidArgument("SimConfig: sigma must lie in [0, 1)");
        if (!(noise_sd >= 0.0)) throw InvalidArgument("SimConfig: noise_sd must be >= 0");
        if (trials < 1) throw InvalidArgument("SimConfig: trials must be >= 1");
        if (!(kappa > 0.0)) throw InvalidArgument("SimConfig: kappa must be > 0");
        if (!(lambda_max > 0.0)) throw InvalidArgument("SimConfig: lambda_max must be > 0");
        if (grid_points < 2) throw InvalidArgument("SimConfig: grid_points must be >= 2");
        if (mixture_points < 2) throw InvalidArgument("SimConfig: mixture_points must be >= 2");
        if (!(horizon_factor > 1.0)) throw InvalidArgument("SimConfig: horizon_factor must be > 1");
        resolved_nu();
    }

    double resolved_nu() const
    {
        if (nu) {
            if (!(*nu > 0.0)) throw InvalidArgument("SimConfig: nu must be > 0");
            return *nu;
        }
        for (const auto& [s, v] : nu_by_sigma) {
            if (std::abs(s - sigma) < 1e-9) return v;
        }
        throw InvalidArgument("SimConfig: no nu configured for sigma = " + io::format_double(sigma)
                              + " (pass nu explicitly)");
    }

    std::uint64_t design_seed(std::size_t trial) const noexcept { return seed + 2 * trial; }
    std::uint64_t noise_seed(std::size_t trial) const noexcept { return seed + 2 * trial + 1; }
};

/// beta*_i = 2 for i in 1..5, 0.2 for 6..40, 0 otherwise (1-based).
struct TrueBeta
{
    std::vector<double> values;

    static TrueBeta standard(std::size_t d)
    {
        TrueBeta b{std::vector<double>(d, 0.0)};
        for (std::size_t i = 0; i < d; ++i) {
            if (i < 5) {
                b.values[i] = 2.0;
            } else if (i < 40) {
                b.values[i] = 0.2;
            }
        }
        return b;
    }

    Matrix as_column() const { return Matrix::column(values); }
};

/**
 * N rows from N(0, Sigma) with unit diagonal and constant off-diagonal sigma:
 * x = sqrt(sigma) g 1 + sqrt(1 - sigma) z, scalar g and vector z standard normal.
 */
inline Matrix generate_design(const SimConfig& config, std::uint64_t trial_seed)
{
    config.validate();
    std::mt19937_64 rng(trial_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double shared = std::sqrt(config.sigma);
    const double own = std::sqrt(1.0 - config.sigma);
    Matrix X(config.N, config.d);
    for (std::size_t i = 0; i < config.N; ++i) {
        const double g = normal(rng);
        for (std::size_t j = 0; j < config.d; ++j) X(i, j) = shared * g + own * normal(rng);
    }
    return X;
}

/// y = X beta* + eps, eps i.i.d. N(0, noise_sd^2).
inline Matrix generate_response(const Matrix& X, const TrueBeta& beta, double noise_sd, std::uint64_t trial_seed)
{
    if (X.cols() != beta.values.size()) throw DimensionError("generate_response: beta length != X.cols");
    Matrix y = matmul(X, beta.as_column());
    if (noise_sd > 0.0) {
        std::mt19937_64 rng(trial_seed);
        std::normal_distribution<double> normal(0.0, noise_sd);
        for (double& v : y.data()) v += normal(rng);
    }
    return y;
}

/// ||beta_hat - beta*||_2 / ||beta*||_2
inline double relative_error(const Matrix& beta_hat, const TrueBeta& beta_star)
{
    if (beta_hat.size() != beta_star.values.size()) throw DimensionError("relative_error: length mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < beta_hat.size(); ++i) {
        const double diff = beta_hat.data()[i] - beta_star.values[i];
        num += diff * diff;
        den += beta_star.values[i] * beta_star.values[i];
    }
    if (den == 0.0) throw InvalidArgument("relative_error: beta* is zero");
    return std::sqrt(num / den);
}

enum class Method : std::size_t { mle, ridge, elastic_net, lasso, msplit_sparse, msplit_dense, count };

inline constexpr std::size_t kMethodCount = static_cast<std::size_t>(Method::count);

inline const char* method_name(Method m) noexcept
{
    switch (m) {
    case Method::mle: return "MLE";
    case Method::ridge: return "Ridge";
    case Method::elastic_net: return "Elastic Net";
    case Method::lasso: return "Lasso";
    case Method::msplit_sparse: return "MSplit LBI (beta~)";
    case Method::msplit_dense: return "MSplit LBI (beta)";
    case Method::count: break;
    }
    return "?";
}

struct TrialErrors
{
    /// Grid-minimum relative error per method.
    std::array<double, kMethodCount> error{};
    /// t at which each MSplit estimator attained its minimum.
    double t_best_dense = 0.0;
    double t_best_sparse = 0.0;
    /// Last t of the MSplit path.
    double t_end = 0.0;
    std::size_t steps = 0;
    /// Relative error of the dense estimator at a cross-validated t (with_cv only).
    std::optional<double> cv_dense_error;
};

struct MeanSd
{
    double mean = 0.0;
    double sd = 0.0;
};

/// Mean and (n - 1)-divisor standard deviation; sd is 0 for a single value.
inline MeanSd mean_sd(const std::vector<double>& v)
{
    MeanSd out;
    if (v.empty()) return out;
    out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - out.mean) * (x - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return out;
}

struct ErrorColumn
{
    double sigma = 0.0;
    double nu = 0.0;
    std::vector<TrialErrors> trials;
    std::array<MeanSd, kMethodCount> summary{};
    std::optional<MeanSd> cv_dense;
};

/// Mean +- sd of the grid-minimum relative error, one column per sigma.
struct ErrorTable
{
    std::vector<ErrorColumn> columns;

    const MeanSd& cell(Method m, std::size_t column) const
    {
        return columns.at(column).summary[static_cast<std::size_t>(m)];
    }
};

struct CurvePoint
{
    double t = 0.0;
    double err_beta = 0.0;
    double err_btilde = 0.0;
    double err_mle = 0.0;
};

namespace detail {

/// Runs one MSplit path under the simulation stopping rule, calling
/// on_state(state) at every iterate.
template <class OnState>
void run_msplit_trace(const SimConfig& config, const Matrix& X, const Matrix& y, OnState&& on_state)
{
    Hyperparams hyper;
    hyper.kappa = config.kappa;
    hyper.nu = config.resolved_nu();
    hyper.alpha = config.alpha;
    hyper.t_max = 1.0;  // unused: the stopping rule below governs the horizon
    hyper.record_every = 1;
    const Problem problem(X, y, hyper);

    const std::size_t full = std::min(problem.n_features(), problem.n_samples());
    std::optional<double> t_first;
    trace_path(problem, config.max_steps, [&](const SolverState& s) {
        on_state(s);
        bool all_full = true;
        bool any = false;
        for (std::size_t j = 0; j < s.Gamma.cols(); ++j) {
            std::size_t nnz = 0;
            for (std::size_t i = 0; i < s.Gamma.rows(); ++i) nnz += s.Gamma(i, j) != 0.0;
            any = any || nnz > 0;
            all_full = all_full && nnz >= full;
        }
        if (any && !t_first) t_first = s.t;
        if (all_full) return false;
        if (t_first && s.t > config.horizon_factor * *t_first) return false;
        return true;
    });
}

inline std::vector<double> descending(const LambdaGrid& grid)
{
    return {grid.values.rbegin(), grid.values.rend()};
}

} // namespace detail

/// One trial of the comparison: every method's grid-minimum relative error.
inline TrialErrors run_trial(const SimConfig& config, std::size_t trial)
{
    const TrueBeta beta = TrueBeta::standard(config.d);
    const Matrix X = generate_design(config, config.design_seed(trial));
    const Matrix y = generate_response(X, beta, config.noise_sd, config.noise_seed(trial));
    const LambdaGrid grid = lambda_grid(config.lambda_max, config.grid_points);
    const std::vector<double> lambdas_desc = detail::descending(grid);

    TrialErrors out;
    auto& err = out.error;
    auto set = [&](Method m, double v) { err[static_cast<std::size_t>(m)] = v; };

    set(Method::mle, relative_error(ols_fit(X, y), beta));

    const RidgePath ridge(X, y);
    {
        double best = std::numeric_limits<double>::infinity();
        for (double lam : grid.values) best = std::min(best, relative_error(ridge.fit(lam), beta));
        set(Method::ridge, best);
    }

    const CoordinateDescent cd(X, y);
    {
        double best = std::numeric_limits<double>::infinity();
        Matrix warm(config.d, 1);
        for (double lam : lambdas_desc) {
            warm = cd.fit(lam, 0.0, &warm);
            best = std::min(best, relative_error(warm, beta));
        }
        set(Method::lasso, best);
    }
    {
        // l1 = a lambda, l2 = (1 - a) lambda; a = 0 is solved in closed form.
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < config.mixture_points; ++m) {
            const double a = static_cast<double>(m) / static_cast<double>(config.mixture_points - 1);
            Matrix warm(config.d, 1);
            for (double lam : lambdas_desc) {
                const double l1 = a * lam;
                const double l2 = (1.0 - a) * lam;
                warm = l1 == 0.0 ? ridge.fit(l2) : cd.fit(l1, l2, &warm);
                best = std::min(best, relative_error(warm, beta));
            }
        }
        set(Method::elastic_net, best);
    }

    {
        double best_dense = std::numeric_limits<double>::infinity();
        double best_sparse = best_dense;
        detail::run_msplit_trace(config, X, y, [&](const SolverState& s) {
            const double ed = relative_error(s.B, beta);
            const double es = relative_error(s.Btilde, beta);
            if (ed < best_dense) {
                best_dense = ed;
                out.t_best_dense = s.t;
            }
            if (es < best_sparse) {
                best_sparse = es;
                out.t_best_sparse = s.t;
            }
            out.t_end = s.t;
            out.steps = s.k;
        });
        set(Method::msplit_dense, best_dense);
        set(Method::msplit_sparse, best_sparse);
    }

    if (config.with_cv) {
        Hyperparams hyper;
        hyper.kappa = config.kappa;
        hyper.nu = config.resolved_nu();
        hyper.alpha = config.alpha;
        hyper.t_max = out.t_end;
        const Problem problem(X, y, hyper);
        const CvSelection sel = select_t_cv(problem, config.cv_folds, config.noise_seed(trial));
        Hyperparams to_t = problem.hyper();
        to_t.t_max = std::max(sel.t_dense, problem.alpha() * 0.5);
        to_t.record_every = std::numeric_limits<std::size_t>::max() / 2;
        const Path p = run_path(Problem(X, y, to_t));
        out.cv_dense_error = relative_error(p.points.back().B, beta);
    }
    return out;
}

/// All trials at config.sigma, aggregated into one table column.
inline ErrorColumn run_table1_column(const SimConfig& config)
{
    config.validate();
    ErrorColumn col;
    col.sigma = config.sigma;
    col.nu = config.resolved_nu();
    col.trials.resize(config.trials);
    parallel_for(config.trials, [&](std::size_t i) {
        try {
            col.trials[i] = run_trial(config, i);
        } catch (const NumericError& e) {
            throw NumericError("sigma " + io::format_double(config.sigma) + ", trial " + std::to_string(i) + ": "
                               + e.what());
        }
    });
    for (std::size_t m = 0; m < kMethodCount; ++m) {
        std::vector<double> v;
        for (const auto& t : col.trials) v.push_back(t.error[m]);
        col.summary[m] = mean_sd(v);
    }
    if (config.with_cv) {
        std::vector<double> v;
        for (const auto& t : col.trials) v.push_back(*t.cv_dense_error);
        col.cv_dense = mean_sd(v);
    }
    return col;
}

inline ErrorTable run_table1(const SimConfig& config)
{
    return ErrorTable{{run_table1_column(config)}};
}

/// One table with a column per sigma, every other setting shared.
inline ErrorTable run_table1(const SimConfig& base, const std::vector<double>& sigmas)
{
    ErrorTable table;
    for (double s : sigmas) {
        SimConfig c = base;
        c.sigma = s;
        table.columns.push_back(run_table1_column(c));
    }
    return table;
}

inline std::string format_fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

/// Wide layout: one row per method, one "mean ± sd" cell per sigma.
inline void write_table_csv(std::ostream& out, const ErrorTable& table)
{
    out << "method";
    for (const auto& c : table.columns) out << ",sigma=" << io::format_double(c.sigma);
    out << '\n';
    for (std::size_t m = 0; m < kMethodCount; ++m) {
        out << method_name(static_cast<Method>(m));
        for (const auto& c : table.columns) {
            out << ',' << format_fixed(c.summary[m].mean, 4) << " ± " << format_fixed(c.summary[m].sd, 4);
        }
        out << '\n';
    }
    const bool cv = std::all_of(table.columns.begin(), table.columns.end(), [](const auto& c) { return c.cv_dense.has_value(); });
    if (cv && !table.columns.empty()) {
        out << "MSplit LBI (beta; CV-selected t)";
        for (const auto& c : table.columns) {
            out << ',' << format_fixed(c.cv_dense->mean, 4) << " ± " << format_fixed(c.cv_dense->sd, 4);
        }
        out << '\n';
    }
}

/// Long layout with full precision: method,sigma,nu,mean,sd,trials.
inline void write_table_long_csv(std::ostream& out, const ErrorTable& table)
{
    out << "method,sigma,nu,mean,sd,trials\n";
    for (const auto& c : table.columns) {
        for (std::size_t m = 0; m < kMethodCount; ++m) {
            out << method_name(static_cast<Method>(m)) << ',' << io::format_double(c.sigma) << ','
                << io::format_double(c.nu) << ',' << io::format_double(c.summary[m].mean) << ','
                << io::format_double(c.summary[m].sd) << ',' << c.trials.size() << '\n';
        }
    }
}

/**
 * Relative error of B_k and Btilde_k along one simulated path, plus the MLE
 * error as a constant reference. Thinned to about 500 points; the first and
 * last iterates are always kept.
 */
inline std::vector<CurvePoint> path_error_curve(const SimConfig& config, std::uint64_t trial_seed)
{
    config.validate();
    const TrueBeta beta = TrueBeta::standard(config.d);
    const Matrix X = generate_design(config, trial_seed);
    const Matrix y = generate_response(X, beta, config.noise_sd, trial_seed + 1);
    const double mle = relative_error(ols_fit(X, y), beta);

    std::vector<CurvePoint> all;
    detail::run_msplit_trace(config, X, y, [&](const SolverState& s) {
        all.push_back({s.t, relative_error(s.B, beta), relative_error(s.Btilde, beta), mle});
    });

    constexpr std::size_t target = 500;
    if (all.size() <= target) return all;
    const std::size_t stride = (all.size() - 1) / target + 1;
    std::vector<CurvePoint> out;
    for (std::size_t i = 0; i < all.size(); i += stride) out.push_back(all[i]);
    if (out.back().t != all.back().t) out.push_back(all.back());
    return out;
}

inline void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve)
{
    out << "t,err_beta,err_btilde,err_mle\n";
    for (const auto& p : curve) {
        out << io::format_double(p.t) << ',' << io::format_double(p.err_beta) << ','
            << io::format_double(p.err_btilde) << ',' << io::format_double(p.err_mle) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Bias verifiers for the X = I model y = beta* + eps.

struct MonteCarloMean
{
    double mean = 0.0;
    double se = 0.0;
    std::size_t count = 0;

    double z(double target) const { return se > 0.0 ? (mean - target) / se : (mean == target ? 0.0 : INFINITY); }
};

inline MonteCarloMean monte_carlo_mean(const std::vector<double>& v)
{
    const MeanSd ms = mean_sd(v);
    return {ms.mean, v.empty() ? 0.0 : ms.sd / std::sqrt(static_cast<double>(v.size())), v.size()};
}

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double standard_normal_pdf(double x)
{
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

/**
 * Expected elastic-net estimate S(b + eps, l1) / (1 + l2) split over the three
 * eps regions, each region's contribution given as a function of eps.
 */
struct ElasticNetBiasTerms
{
    double beta_star;
    double l1;
    double l2;

    /// Per-draw integrand whose mean over eps is the expected estimate.
    double integrand(double eps) const
    {
        const double b = beta_star;
        double v = b;
        if (eps <= -b - l1) v += eps + l1;
        if (-b - l1 <= eps && eps <= -b + l1) v -= b;
        if (eps >= l1 - b) v += eps - l1;
        return v / (1.0 + l2);
    }

    /// Same expectation for eps ~ N(0, sd^2), in closed form.
    double gaussian_expectation(double sd) const
    {
        const double b = beta_star;
        const double lo = (-b - l1) / sd;
        const double hi = (l1 - b) / sd;
        const double below = -sd * standard_normal_pdf(lo) + l1 * standard_normal_cdf(lo);
        const double above = sd * standard_normal_pdf(hi) - l1 * (1.0 - standard_normal_cdf(hi));
        const double middle = standard_normal_cdf(hi) - standard_normal_cdf(lo);
        return (b + below - b * middle + above) / (1.0 + l2);
    }
};

struct Lemma1Report
{
    double lambda_l1 = 0.0;
    double lambda_l2 = 0.0;
    double beta_star = 2.0;
    double noise_sd = 1.0;
    std::size_t draws = 0;

    MonteCarloMean ridge;
    double ridge_target = 0.0;   ///< beta* / (1 + l2)
    double ridge_z = 0.0;
    double ridge_bias_z = 0.0;   ///< z-score against the unbiased value beta*

    MonteCarloMean elastic;
    double elastic_target_empirical = 0.0;  ///< region formula averaged over the same draws
    double elastic_z_empirical = 0.0;
    double elastic_target_gaussian = 0.0;   ///< region formula integrated in closed form
    double elastic_z_gaussian = 0.0;

    bool ridge_ok = false;
    bool bias_detected = false;
    bool elastic_ok = false;

    bool pass() const { return ridge_ok && elastic_ok && (lambda_l2 == 0.0 || bias_detected); }
};

inline constexpr double kZTolerance = 4.0;
inline constexpr double kBiasZThreshold = 10.0;
inline constexpr std::size_t kMinDraws = 1000;

/// Ridge and elastic-net on-support means under X = I versus their bias formulas.
inline Lemma1Report verify_lemma1(double lambda_l2, double lambda_l1, std::size_t draws, std::uint64_t seed,
                                  double beta_star = 2.0, double noise_sd = 1.0)
{
    if (draws < kMinDraws) throw InvalidArgument("verify_lemma1: draws must be >= " + std::to_string(kMinDraws));
    if (!(lambda_l1 >= 0.0) || !(lambda_l2 >= 0.0)) throw InvalidArgument("verify_lemma1: penalties must be >= 0");
    if (!(noise_sd > 0.0)) throw InvalidArgument("verify_lemma1: noise_sd must be > 0");

    Lemma1Report r;
    r.lambda_l1 = lambda_l1;
    r.lambda_l2 = lambda_l2;
    r.beta_star = beta_star;
    r.noise_sd = noise_sd;
    r.draws = draws;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, noise_sd);
    const ElasticNetBiasTerms terms{beta_star, lambda_l1, lambda_l2};
    const Matrix identity = Matrix::identity(1);

    std::vector<double> ridge(draws), elastic(draws), formula(draws);
    for (std::size_t i = 0; i < draws; ++i) {
        const double eps = normal(rng);
        const Matrix y{{beta_star + eps}};
        ridge[i] = ridge_fit(identity, y, lambda_l2)(0, 0);
        elastic[i] = elastic_net_fit(identity, y, lambda_l1, lambda_l2)(0, 0);
        formula[i] = terms.integrand(eps);
    }

    r.ridge = monte_carlo_mean(ridge);
    r.ridge_target = beta_star / (1.0 + lambda_l2);
    r.ridge_z = r.ridge.z(r.ridge_target);
    r.ridge_bias_z = r.ridge.z(beta_star);

    r.elastic = monte_carlo_mean(elastic);
    r.elastic_target_empirical = monte_carlo_mean(formula).mean;
    r.elastic_z_empirical = r.elastic.z(r.elastic_target_empirical);
    r.elastic_target_gaussian = terms.gaussian_expectation(noise_sd);
    r.elastic_z_gaussian = r.elastic.z(r.elastic_target_gaussian);

    r.ridge_ok = std::abs(r.ridge_z) < kZTolerance;
    r.bias_detected = std::abs(r.ridge_bias_z) > kBiasZThreshold;
    r.elastic_ok = std::abs(r.elastic_z_empirical) < kZTolerance && std::abs(r.elastic_z_gaussian) < kZTolerance;
    return r;
}

struct Lemma2Setup
{
    std::size_t n_strong = 5;
    std::size_t n_weak = 5;
    double beta_strong = 2.0;
    double beta_weak = 0.2;
    double noise_sd = 0.2;
    double kappa = 100.0;
};

struct Lemma2Report
{
    double nu = 0.0;
    Lemma2Setup setup;
    std::size_t draws = 0;
    std::size_t found = 0;   ///< draws where supp(Gamma) = S at some t

    MonteCarloMean on_support;
    double on_target = 0.0;   ///< beta*_S
    double on_z = 0.0;

    MonteCarloMean off_support;
    double off_target = 0.0;  ///< nu / (1 + nu) beta*_{S^c}
    double off_z = 0.0;

    /// Same statistics at the first iterate with supp(Gamma) = S (reported only).
    MonteCarloMean on_support_first;
    double on_z_first = 0.0;
    MonteCarloMean off_support_first;
    double off_z_first = 0.0;

    double fraction_found() const { return draws ? static_cast<double>(found) / static_cast<double>(draws) : 0.0; }
    bool pass() const
    {
        return found > 0 && std::abs(on_z) < kZTolerance && std::abs(off_z) < kZTolerance;
    }
};

/**
 * MSplit estimate on and off the strong set S once supp(Gamma) = S.
 *
 * X = I, loss (1/2) ||y - beta||^2, large kappa. Each draw iterates until a
 * coordinate outside S activates or t reaches twice the time supp(Gamma)
 * first equalled S; the last iterate with supp(Gamma) = S is the estimate.
 * Draws where supp(Gamma) never equals S are counted, not failed.
 */
inline Lemma2Report verify_lemma2(double nu, std::size_t draws, std::uint64_t seed, const Lemma2Setup& setup = {})
{
    if (draws < kMinDraws) throw InvalidArgument("verify_lemma2: draws must be >= " + std::to_string(kMinDraws));
    if (!(nu > 0.0)) throw InvalidArgument("verify_lemma2: nu must be > 0");
    if (setup.n_strong == 0) throw InvalidArgument("verify_lemma2: need a nonempty strong set");

    const std::size_t d = setup.n_strong + setup.n_weak;
    Lemma2Report r;
    r.nu = nu;
    r.setup = setup;
    r.draws = draws;
    r.on_target = setup.beta_strong;
    r.off_target = nu / (1.0 + nu) * setup.beta_weak;

    std::vector<std::vector<double>> on(draws), off(draws), on_first(draws), off_first(draws);
    std::vector<char> found(draws, 0);
    const Matrix identity = Matrix::identity(d);

    parallel_for(draws, [&](std::size_t draw) {
        std::mt19937_64 rng(seed + draw);
        std::normal_distribution<double> normal(0.0, setup.noise_sd);
        Matrix y(d, 1);
        for (std::size_t i = 0; i < d; ++i) {
            y(i, 0) = (i < setup.n_strong ? setup.beta_strong : setup.beta_weak) + normal(rng);
        }

        Hyperparams hyper;
        hyper.kappa = setup.kappa;
        hyper.nu = nu;
        hyper.t_max = 1.0;
        hyper.record_every = 1;
        hyper.loss_scale = 0.5;
        const Problem problem(identity, y, hyper);

        // Activation of coordinate j needs roughly t = (1 + nu) / |y_j|.
        double min_strong = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < setup.n_strong; ++i) min_strong = std::min(min_strong, std::abs(y(i, 0)));
        const double t_cap = 10.0 * (1.0 + nu) / std::max(min_strong, 1e-3);

        std::optional<double> t_first;
        std::optional<Matrix> first, last;
        trace_path(problem, std::numeric_limits<std::size_t>::max(), [&](const SolverState& s) {
            bool strong_all = true;
            bool outside = false;
            for (std::size_t i = 0; i < d; ++i) {
                const bool active = s.Gamma(i, 0) != 0.0;
                if (i < setup.n_strong) {
                    strong_all = strong_all && active;
                } else {
                    outside = outside || active;
                }
            }
            if (outside) return false;
            if (strong_all) {
                if (!t_first) {
                    t_first = s.t;
                    first = s.B;
                }
                last = s.B;
                if (s.t >= 2.0 * *t_first) return false;
            }
            return s.t < t_cap;
        });

        if (last) {
            found[draw] = 1;
            for (std::size_t i = 0; i < d; ++i) {
                (i < setup.n_strong ? on : off)[draw].push_back((*last)(i, 0));
                (i < setup.n_strong ? on_first : off_first)[draw].push_back((*first)(i, 0));
            }
        }
    });

    std::vector<double> on_all, off_all, on_first_all, off_first_all;
    for (std::size_t i = 0; i < draws; ++i) {
        r.found += found[i] ? 1 : 0;
        on_all.insert(on_all.end(), on[i].begin(), on[i].end());
        off_all.insert(off_all.end(), off[i].begin(), off[i].end());
        on_first_all.insert(on_first_all.end(), on_first[i].begin(), on_first[i].end());
        off_first_all.insert(off_first_all.end(), off_first[i].begin(), off_first[i].end());
    }
    r.on_support_first = monte_carlo_mean(on_first_all);
    r.off_support_first = monte_carlo_mean(off_first_all);
    r.on_z_first = r.on_support_first.z(r.on_target);
    r.off_z_first = setup.n_weak ? r.off_support_first.z(r.off_target) : 0.0;
    r.on_support = monte_carlo_mean(on_all);
    r.off_support = monte_carlo_mean(off_all);
    r.on_z = r.on_support.z(r.on_target);
    r.off_z = setup.n_weak ? r.off_support.z(r.off_target) : 0.0;
    return r;
}

} // namespace msplit::sim

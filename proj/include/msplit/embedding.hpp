#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <msplit/baselines.hpp>
#include <msplit/errors.hpp>
#include <msplit/io.hpp>
#include <msplit/matrix.hpp>
#include <msplit/solver.hpp>

namespace msplit::embed {

/// Feature rows with integer class labels in [0, K).
struct LabeledFeatures
{
    Matrix X;
    std::vector<int> labels;
    std::size_t K = 0;

    void validate() const
    {
        if (labels.size() != X.rows()) {
            throw DimensionError("LabeledFeatures: " + std::to_string(labels.size()) + " labels for "
                                 + std::to_string(X.rows()) + " rows");
        }
        for (int l : labels) {
            if (l < 0 || static_cast<std::size_t>(l) >= K) {
                throw InvalidArgument("LabeledFeatures: label " + std::to_string(l) + " outside [0, "
                                      + std::to_string(K) + ")");
            }
        }
    }
};

/// One prototype (row) per class.
struct PrototypeSet
{
    Matrix F;

    std::size_t classes() const noexcept { return F.rows(); }
};

inline Matrix one_hot(const std::vector<int>& labels, std::size_t K)
{
    Matrix E(labels.size(), K);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int l = labels[i];
        if (l < 0 || static_cast<std::size_t>(l) >= K) {
            throw InvalidArgument("one_hot: label " + std::to_string(l) + " outside [0, " + std::to_string(K) + ")");
        }
        E(i, static_cast<std::size_t>(l)) = 1.0;
    }
    return E;
}

enum class Method { msplit_dense, msplit_sparse, lasso, ridge };

inline Method parse_method(const std::string& s)
{
    if (s == "msplit_dense" || s == "msplit") return Method::msplit_dense;
    if (s == "msplit_sparse") return Method::msplit_sparse;
    if (s == "lasso") return Method::lasso;
    if (s == "ridge") return Method::ridge;
    throw InvalidArgument("unknown method '" + s + "' (msplit_dense, msplit_sparse, lasso, ridge)");
}

inline const char* to_string(Method m) noexcept
{
    switch (m) {
    case Method::msplit_dense: return "msplit_dense";
    case Method::msplit_sparse: return "msplit_sparse";
    case Method::lasso: return "lasso";
    case Method::ridge: return "ridge";
    }
    return "?";
}

struct FitParams
{
    /// MSplit settings; t_max bounds the cross-validation grid.
    Hyperparams hyper;
    /// Fixed t for the MSplit variants; chosen by cross-validation when unset.
    std::optional<double> t;
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    /// Penalty for lasso / ridge.
    double lambda = 0.0;
};

/// B and B~ of an MSplit path at one t, with Gamma for support queries.
struct MSplitFit
{
    double t = 0.0;
    PathPoint point;
    std::optional<CvSelection> cv;
};

/// Runs the MSplit path to `t` and returns its last recorded point.
inline PathPoint msplit_point_at(const Matrix& X, const Matrix& E, Hyperparams hyper, double t)
{
    hyper.t_max = t;
    hyper.record_every = std::numeric_limits<std::size_t>::max() / 2;
    // t below one step yields the initial point.
    if (!(t > 0.0)) return PathPoint{0, 0.0, Matrix(X.cols(), E.cols()), Matrix(X.cols(), E.cols()), Matrix(X.cols(), E.cols())};
    const Problem problem(X, E, hyper);
    Path path = run_path(problem);
    return std::move(path.points.back());
}

/// MSplit fit at params.t, or at the cross-validated t for the requested estimator.
inline MSplitFit fit_msplit(const Matrix& X, const Matrix& E, const FitParams& params, Estimator which)
{
    MSplitFit fit;
    if (params.t) {
        fit.t = *params.t;
    } else {
        const Problem problem(X, E, params.hyper);
        fit.cv = select_t_cv(problem, params.folds, params.seed);
        fit.t = which == Estimator::dense ? fit.cv->t_dense : fit.cv->t_sparse;
    }
    fit.point = msplit_point_at(X, E, params.hyper, fit.t);
    return fit;
}

/// Linear embedding B (d x p) with E ~ X B.
inline Matrix fit_embedding(const Matrix& X, const Matrix& E, Method method, const FitParams& params)
{
    if (X.rows() != E.rows()) throw DimensionError("fit_embedding: X and E row counts differ");
    switch (method) {
    case Method::ridge: return ridge_fit(X, E, params.lambda);
    case Method::lasso: return lasso_fit(X, E, params.lambda);
    case Method::msplit_dense: return fit_msplit(X, E, params, Estimator::dense).point.B;
    case Method::msplit_sparse: return fit_msplit(X, E, params, Estimator::sparse).point.Btilde;
    }
    throw InvalidArgument("fit_embedding: unknown method");
}

/// argmax_k (x B)_k, ties to the smallest index.
inline std::size_t predict_fsl(const Matrix& B, const Matrix& x)
{
    if (x.rows() != 1 || x.cols() != B.rows()) throw DimensionError("predict_fsl: x must be 1 x d");
    const Matrix scores = matmul(x, B);
    std::size_t best = 0;
    for (std::size_t k = 1; k < scores.cols(); ++k) {
        if (scores(0, k) > scores(0, best)) best = k;
    }
    return best;
}

/// Row k is the mean of the samples labelled k.
inline PrototypeSet class_prototypes(const LabeledFeatures& data)
{
    data.validate();
    Matrix F(data.K, data.X.cols());
    std::vector<std::size_t> counts(data.K, 0);
    for (std::size_t i = 0; i < data.X.rows(); ++i) {
        const auto k = static_cast<std::size_t>(data.labels[i]);
        ++counts[k];
        auto src = data.X.row(i);
        auto dst = F.row(k);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
    for (std::size_t k = 0; k < data.K; ++k) {
        if (counts[k] == 0) throw InvalidArgument("class_prototypes: class " + std::to_string(k) + " has no samples");
        for (double& v : F.row(k)) v /= static_cast<double>(counts[k]);
    }
    return {std::move(F)};
}

/// Target prototype j = sum_k B(k, j) * source prototype k.
inline PrototypeSet synthesize_prototypes(const PrototypeSet& source, const Matrix& B)
{
    if (B.rows() != source.classes()) {
        throw DimensionError("synthesize_prototypes: B has " + std::to_string(B.rows()) + " rows for "
                             + std::to_string(source.classes()) + " source classes");
    }
    return {matmul_tn(B, source.F)};
}

/// Index of the nearest prototype in Euclidean distance, ties to the smallest index.
inline std::size_t predict_zsl(const Matrix& x, const PrototypeSet& prototypes)
{
    if (x.rows() != 1 || x.cols() != prototypes.F.cols()) throw DimensionError("predict_zsl: x must be 1 x d");
    if (prototypes.classes() == 0) throw InvalidArgument("predict_zsl: no prototypes");
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < prototypes.classes(); ++k) {
        auto f = prototypes.F.row(k);
        double d2 = 0.0;
        for (std::size_t j = 0; j < f.size(); ++j) d2 += (x(0, j) - f[j]) * (x(0, j) - f[j]);
        if (d2 < best_dist) {
            best_dist = d2;
            best = k;
        }
    }
    return best;
}

/**
 * Structure matrix B (K_s x K_t) with E_target^T ~ E_source^T B.
 *
 * Semantic vectors are the rows of E_source (K_s x q) and E_target (K_t x q);
 * the regression design is the q x K_s matrix of source semantic columns and
 * each target class is one response column.
 */
inline Matrix learn_structure(const Matrix& E_source, const Matrix& E_target, Method method, const FitParams& params)
{
    if (E_source.cols() != E_target.cols()) {
        throw DimensionError("learn_structure: semantic dimensions differ (" + std::to_string(E_source.cols())
                             + " vs " + std::to_string(E_target.cols()) + ")");
    }
    if (E_target.rows() == 0) return Matrix(E_source.rows(), 0);
    return fit_embedding(transpose(E_source), transpose(E_target), method, params);
}

struct Signal
{
    std::size_t source = 0;
    double weight = 0.0;
};

struct ColumnSignals
{
    std::vector<Signal> strong;
    std::vector<Signal> weak;
};

/// Per target column: top-m strong (|Btilde| on supp Gamma) and weak (|B - Btilde| off supp Gamma) entries.
struct SignalReport
{
    std::vector<ColumnSignals> columns;
};

inline SignalReport signal_report(const PathPoint& point, std::size_t m)
{
    if (m < 1) throw InvalidArgument("signal_report: m must be >= 1");
    if (!point.B.same_shape(point.Gamma) || !point.B.same_shape(point.Btilde)) {
        throw DimensionError("signal_report: B, Gamma, Btilde shapes differ");
    }
    auto by_magnitude = [](const Signal& a, const Signal& b) {
        const double ma = std::abs(a.weight), mb = std::abs(b.weight);
        return ma != mb ? ma > mb : a.source < b.source;
    };

    SignalReport report;
    report.columns.resize(point.B.cols());
    for (std::size_t j = 0; j < point.B.cols(); ++j) {
        auto& col = report.columns[j];
        for (std::size_t i = 0; i < point.B.rows(); ++i) {
            if (point.Gamma(i, j) != 0.0) {
                if (point.Btilde(i, j) != 0.0) col.strong.push_back({i, point.Btilde(i, j)});
            } else {
                const double residual = point.B(i, j) - point.Btilde(i, j);
                if (residual != 0.0) col.weak.push_back({i, residual});
            }
        }
        std::sort(col.strong.begin(), col.strong.end(), by_magnitude);
        std::sort(col.weak.begin(), col.weak.end(), by_magnitude);
        if (col.strong.size() > m) col.strong.resize(m);
        if (col.weak.size() > m) col.weak.resize(m);
    }
    return report;
}

/// target_class,kind,rank,source_index,weight; ranks are 1-based.
inline void write_signal_report_csv(std::ostream& out, const SignalReport& report)
{
    out << "target_class,kind,rank,source_index,weight\n";
    for (std::size_t j = 0; j < report.columns.size(); ++j) {
        const auto& col = report.columns[j];
        for (std::size_t r = 0; r < col.strong.size(); ++r) {
            out << j << ",strong," << r + 1 << ',' << col.strong[r].source << ','
                << io::format_double(col.strong[r].weight) << '\n';
        }
        for (std::size_t r = 0; r < col.weak.size(); ++r) {
            out << j << ",weak," << r + 1 << ',' << col.weak[r].source << ','
                << io::format_double(col.weak[r].weight) << '\n';
        }
    }
}

/// Fraction of rows whose predicted class equals the label.
template <class Predict>
double accuracy(const Matrix& X, const std::vector<int>& labels, Predict&& predict)
{
    if (labels.size() != X.rows()) throw DimensionError("accuracy: label count mismatch");
    if (labels.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < X.rows(); ++i) {
        Matrix x(1, X.cols(), std::vector<double>(X.row(i).begin(), X.row(i).end()));
        hits += static_cast<int>(predict(x)) == labels[i];
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

} // namespace msplit::embed

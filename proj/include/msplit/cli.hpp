#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <msplit/baselines.hpp>
#include <msplit/embedding.hpp>
#include <msplit/errors.hpp>
#include <msplit/io.hpp>
#include <msplit/matrix.hpp>
#include <msplit/simulation.hpp>
#include <msplit/solver.hpp>

namespace msplit::cli {

enum ExitCode : int { ok = 0, usage = 1, numeric = 2, verification = 3 };

namespace fs = std::filesystem;

/// UTC ISO-8601 time; SOURCE_DATE_EPOCH pins it for reproducible manifests.
inline std::string timestamp()
{
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
        try {
            now = static_cast<std::time_t>(std::stoll(epoch));
        } catch (const std::exception&) {
        }
    }
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/**
 * Tracks every file a command writes under its output directory. The
 * manifest is written last, so its presence implies the run completed.
 */
class RunManifest
{
public:
    RunManifest(std::string command, fs::path out_dir)
        : command_(std::move(command)), out_dir_(std::move(out_dir)), started_(timestamp())
    {
        fs::create_directories(out_dir_);
    }

    nlohmann::json& parameters() { return parameters_; }
    void set_seed(std::uint64_t seed) { seed_ = seed; }

    /// Writes `name` inside the output directory and records it.
    void write(const std::string& name, const std::string& contents)
    {
        const fs::path rel(name);
        if (rel.is_absolute() || rel.has_parent_path()) throw InvalidArgument("output names must be plain file names");
        io::write_text(out_dir_ / rel, contents);
        outputs_.push_back(name);
    }

    fs::path finish()
    {
        nlohmann::json j{{"command", command_},
                         {"parameters", parameters_},
                         {"seed", seed_ ? nlohmann::json(*seed_) : nlohmann::json(nullptr)},
                         {"started_at", started_},
                         {"finished_at", timestamp()},
                         {"outputs", outputs_}};
        const fs::path path = out_dir_ / "manifest.json";
        io::write_text(path, j.dump(2) + "\n");
        return path;
    }

private:
    std::string command_;
    fs::path out_dir_;
    std::string started_;
    nlohmann::json parameters_ = nlohmann::json::object();
    std::optional<std::uint64_t> seed_;
    std::vector<std::string> outputs_;
};

/// Flags shared by the MSplit-running commands.
struct SolverFlags
{
    double kappa = 5.0;
    double nu = 1.0;
    std::optional<double> alpha;
    double t_max = 10.0;
    std::optional<std::size_t> record_every;

    void add_to(CLI::App& app)
    {
        app.add_option("--kappa", kappa, "Damping factor kappa (> 0)")->capture_default_str();
        app.add_option("--nu", nu, "Variable-splitting strength nu (> 0)")->capture_default_str();
        app.add_option("--alpha", alpha, "Step size; default is the largest stable value");
        app.add_option("--t-max", t_max, "Path horizon t_max (> 0)")->capture_default_str();
        app.add_option("--record-every", record_every, "Iterations between recorded path points");
    }

    Hyperparams hyper() const
    {
        Hyperparams h;
        h.kappa = kappa;
        h.nu = nu;
        h.alpha = alpha;
        h.t_max = t_max;
        h.record_every = record_every;
        return h;
    }
};

inline std::string to_csv(const Matrix& m)
{
    std::ostringstream s;
    io::write_matrix_csv(s, m);
    return s.str();
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs
{
    std::vector<double> sigmas{0.2, 0.4, 0.6, 0.8};
    std::size_t trials = 20;
    std::uint64_t seed = 0;
    double kappa = 5.0;
    std::optional<double> nu;
    std::optional<double> alpha;
    double noise_sd = 0.5;
    std::size_t n = 100;
    std::size_t d = 80;
    double lambda_max = 5.0;
    std::size_t grid_points = 500;
    bool with_cv = false;
    bool curve = false;
    std::string out = ".";
};

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out)
{
    sim::SimConfig base;
    base.N = a.n;
    base.d = a.d;
    base.noise_sd = a.noise_sd;
    base.trials = a.trials;
    base.seed = a.seed;
    base.kappa = a.kappa;
    base.nu = a.nu;
    base.alpha = a.alpha;
    base.lambda_max = a.lambda_max;
    base.grid_points = a.grid_points;
    base.with_cv = a.with_cv;
    if (a.sigmas.empty()) throw InvalidArgument("at least one --sigma is required");
    for (double s : a.sigmas) {
        sim::SimConfig c = base;
        c.sigma = s;
        c.validate();
    }

    RunManifest manifest("simulate", a.out);
    manifest.set_seed(a.seed);
    auto& p = manifest.parameters();
    p["sigma"] = a.sigmas;
    p["trials"] = a.trials;
    p["kappa"] = a.kappa;
    p["alpha"] = a.alpha ? nlohmann::json(*a.alpha) : nlohmann::json("auto");
    p["noise_sd"] = a.noise_sd;
    p["N"] = a.n;
    p["d"] = a.d;
    p["lambda_max"] = a.lambda_max;
    p["grid_points"] = a.grid_points;
    p["mixture_points"] = base.mixture_points;
    p["horizon_factor"] = base.horizon_factor;
    p["with_cv"] = a.with_cv;
    if (a.nu) {
        p["nu"] = *a.nu;
    } else {
        nlohmann::json map = nlohmann::json::object();
        for (const auto& [s, v] : base.nu_by_sigma) map[io::format_double(s)] = v;
        p["nu"] = map;
    }

    const sim::ErrorTable table = sim::run_table1(base, a.sigmas);
    std::ostringstream wide, longform;
    sim::write_table_csv(wide, table);
    sim::write_table_long_csv(longform, table);
    manifest.write("table1.csv", wide.str());
    manifest.write("table1_long.csv", longform.str());

    if (a.curve) {
        for (double s : a.sigmas) {
            sim::SimConfig c = base;
            c.sigma = s;
            std::ostringstream csv;
            sim::write_curve_csv(csv, sim::path_error_curve(c, c.design_seed(0)));
            manifest.write("curve_sigma=" + io::format_double(s) + ".csv", csv.str());
        }
    }
    manifest.finish();
    out << wide.str();
    return ok;
}

// ---------------------------------------------------------------------------
// path

struct PathArgs
{
    std::string x_file;
    std::string e_file;
    SolverFlags solver;
    std::optional<double> t;
    std::optional<double> decompose_tau;
    bool json = false;
    std::string out = ".";
};

inline int cmd_path(const PathArgs& a, std::ostream& out)
{
    Matrix X = io::read_matrix(a.x_file);
    Matrix E = io::read_matrix(a.e_file);
    const Problem problem(std::move(X), std::move(E), a.solver.hyper());
    if (a.t && (*a.t < 0.0 || *a.t > problem.hyper().t_max)) {
        throw InvalidArgument("--t " + io::format_double(*a.t) + " is outside the path range [0, "
                              + io::format_double(problem.hyper().t_max) + "]");
    }
    if (a.decompose_tau && *a.decompose_tau < 0.0) throw InvalidArgument("--decompose-tau must be >= 0");

    RunManifest manifest("path", a.out);
    auto& p = manifest.parameters();
    p["x_file"] = a.x_file;
    p["e_file"] = a.e_file;
    p["hyper"] = to_json(problem.hyper());

    const Path path = run_path(problem);
    std::ostringstream csv;
    write_path_csv(csv, path);
    manifest.write("path.csv", csv.str());
    if (a.json) manifest.write("path.json", path_to_json(path).dump() + "\n");

    if (a.t || a.decompose_tau) {
        const double t = a.t.value_or(path.points.back().t);
        const PathPoint* chosen = &path.points.front();
        for (const auto& pt : path.points) {
            if (pt.t <= t * (1.0 + 1e-12)) chosen = &pt;
        }
        const double tau = a.decompose_tau.value_or(default_decomposition_tau(chosen->B, chosen->Btilde));
        std::ostringstream dec;
        write_decomposition_csv(dec, decompose(chosen->B, chosen->Btilde, tau));
        manifest.write("decomposition.csv", dec.str());
        p["decompose_t"] = chosen->t;
        p["decompose_tau"] = tau;
        out << "decomposition at t = " << io::format_double(chosen->t) << ", tau = " << io::format_double(tau) << '\n';
    }
    manifest.finish();
    out << "path: " << path.points.size() << " points, t in [0, " << io::format_double(path.points.back().t)
        << "], alpha = " << io::format_double(problem.alpha()) << '\n';
    return ok;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs
{
    std::string lemma = "all";
    double lambda1 = 0.5;
    double lambda2 = 1.0;
    double nu = 3.0;
    double kappa = 100.0;
    std::optional<std::size_t> draws;
    std::uint64_t seed = 0;
    std::string out = ".";
};

inline int cmd_verify(const VerifyArgs& a, std::ostream& out)
{
    const bool one = a.lemma == "1" || a.lemma == "all";
    const bool two = a.lemma == "2" || a.lemma == "all";
    if (!one && !two) throw InvalidArgument("--lemma must be 1, 2 or all");
    if (a.draws && *a.draws < sim::kMinDraws) {
        throw InvalidArgument("--draws must be >= " + std::to_string(sim::kMinDraws));
    }
    if (!(a.kappa >= 100.0)) throw InvalidArgument("--kappa must be >= 100 for the lemma 2 check");

    RunManifest manifest("verify", a.out);
    manifest.set_seed(a.seed);
    nlohmann::json report = nlohmann::json::object();
    bool pass = true;
    out.setf(std::ios::fixed);
    out.precision(4);

    if (one) {
        const auto r = sim::verify_lemma1(a.lambda2, a.lambda1, a.draws.value_or(10000), a.seed);
        pass = pass && r.pass();
        out << "lemma 1 (X = I, beta* = " << r.beta_star << ", noise sd " << r.noise_sd << ", " << r.draws << " draws)\n"
            << "  ridge   mean " << r.ridge.mean << " +- " << r.ridge.se << "  target " << r.ridge_target
            << "  z " << r.ridge_z << "  factor " << r.ridge.mean / r.beta_star << (r.ridge_ok ? "  PASS" : "  FAIL")
            << '\n';
        if (r.lambda_l2 > 0.0) {
            out << "  ridge bias vs beta*  z " << r.ridge_bias_z << (r.bias_detected ? "  PASS" : "  FAIL") << '\n';
        }
        out << "  elastic mean " << r.elastic.mean << " +- " << r.elastic.se << "  target(draws) "
            << r.elastic_target_empirical << "  z " << r.elastic_z_empirical << "  target(gaussian) "
            << r.elastic_target_gaussian << "  z " << r.elastic_z_gaussian << (r.elastic_ok ? "  PASS" : "  FAIL")
            << '\n';
        report["lemma1"] = {{"lambda_l1", r.lambda_l1},
                            {"lambda_l2", r.lambda_l2},
                            {"beta_star", r.beta_star},
                            {"noise_sd", r.noise_sd},
                            {"draws", r.draws},
                            {"ridge_mean", r.ridge.mean},
                            {"ridge_se", r.ridge.se},
                            {"ridge_target", r.ridge_target},
                            {"ridge_z", r.ridge_z},
                            {"ridge_bias_z", r.ridge_bias_z},
                            {"elastic_mean", r.elastic.mean},
                            {"elastic_se", r.elastic.se},
                            {"elastic_target_empirical", r.elastic_target_empirical},
                            {"elastic_z_empirical", r.elastic_z_empirical},
                            {"elastic_target_gaussian", r.elastic_target_gaussian},
                            {"elastic_z_gaussian", r.elastic_z_gaussian},
                            {"pass", r.pass()}};
    }
    if (two) {
        sim::Lemma2Setup setup;
        setup.kappa = a.kappa;
        const auto r = sim::verify_lemma2(a.nu, a.draws.value_or(1000), a.seed, setup);
        pass = pass && r.pass();
        out << "lemma 2 (X = I, kappa " << setup.kappa << ", nu " << r.nu << ", " << r.draws
            << " draws, supp = S reached in " << r.fraction_found() * 100.0 << "%)\n"
            << "  on S    mean " << r.on_support.mean << " +- " << r.on_support.se << "  target " << r.on_target
            << "  z " << r.on_z << (std::abs(r.on_z) < sim::kZTolerance ? "  PASS" : "  FAIL") << '\n'
            << "  off S   mean " << r.off_support.mean << " +- " << r.off_support.se << "  target " << r.off_target
            << "  z " << r.off_z << "  factor " << r.off_support.mean / setup.beta_weak
            << (std::abs(r.off_z) < sim::kZTolerance ? "  PASS" : "  FAIL") << '\n'
            << "  at first supp = S iterate (not checked): on S mean " << r.on_support_first.mean << " (z "
            << r.on_z_first << "), off S mean " << r.off_support_first.mean << " (z " << r.off_z_first << ")\n";
        report["lemma2"] = {{"nu", r.nu},
                            {"kappa", setup.kappa},
                            {"draws", r.draws},
                            {"found", r.found},
                            {"on_mean", r.on_support.mean},
                            {"on_se", r.on_support.se},
                            {"on_target", r.on_target},
                            {"on_z", r.on_z},
                            {"off_mean", r.off_support.mean},
                            {"off_se", r.off_support.se},
                            {"off_target", r.off_target},
                            {"off_z", r.off_z},
                            {"first_on_mean", r.on_support_first.mean},
                            {"first_on_z", r.on_z_first},
                            {"first_off_mean", r.off_support_first.mean},
                            {"first_off_z", r.off_z_first},
                            {"pass", r.pass()}};
    }
    out << (pass ? "PASS" : "FAIL") << '\n';

    auto& p = manifest.parameters();
    p["lemma"] = a.lemma;
    p["lambda1"] = a.lambda1;
    p["lambda2"] = a.lambda2;
    p["nu"] = a.nu;
    p["kappa"] = a.kappa;
    p["draws"] = a.draws ? nlohmann::json(*a.draws) : nlohmann::json("default");
    manifest.write("verify.json", report.dump(2) + "\n");
    manifest.finish();
    return pass ? ok : verification;
}

// ---------------------------------------------------------------------------
// embed

struct EmbedArgs
{
    std::string x_file;
    std::string labels_file;
    std::string test_x_file;
    std::string test_labels_file;
    std::string source_semantic;
    std::string target_semantic;
    std::string method = "msplit_dense";
    SolverFlags solver;
    std::optional<double> t;
    std::size_t folds = 5;
    double lambda = 0.0;
    std::size_t top = 3;
    std::uint64_t seed = 0;
    std::string out = ".";
};

inline embed::FitParams fit_params(const EmbedArgs& a)
{
    embed::FitParams params;
    params.hyper = a.solver.hyper();
    params.t = a.t;
    params.folds = a.folds;
    params.seed = a.seed;
    params.lambda = a.lambda;
    return params;
}

inline embed::LabeledFeatures read_labeled(const std::string& x_file, const std::string& labels_file,
                                           std::optional<std::size_t> K = std::nullopt)
{
    embed::LabeledFeatures data{io::read_matrix(x_file), io::read_labels(labels_file), 0};
    if (K) {
        data.K = *K;
    } else {
        int max_label = -1;
        for (int l : data.labels) max_label = std::max(max_label, l);
        data.K = static_cast<std::size_t>(max_label + 1);
    }
    data.validate();
    return data;
}

inline void common_embed_parameters(RunManifest& manifest, const EmbedArgs& a)
{
    auto& p = manifest.parameters();
    p["method"] = a.method;
    p["hyper"] = to_json(a.solver.hyper());
    p["t"] = a.t ? nlohmann::json(*a.t) : nlohmann::json("cv");
    p["folds"] = a.folds;
    p["lambda"] = a.lambda;
}

inline std::string predictions_csv(const std::vector<int>& labels, const std::vector<std::size_t>& predicted)
{
    std::ostringstream s;
    s << "index,label,predicted\n";
    for (std::size_t i = 0; i < predicted.size(); ++i) s << i << ',' << labels[i] << ',' << predicted[i] << '\n';
    return s.str();
}

inline int cmd_embed_fsl(const EmbedArgs& a, std::ostream& out)
{
    const embed::Method method = embed::parse_method(a.method);
    const auto train = read_labeled(a.x_file, a.labels_file);
    const auto test = read_labeled(a.test_x_file, a.test_labels_file, train.K);
    if (test.X.cols() != train.X.cols()) throw DimensionError("test features have a different dimension");

    RunManifest manifest("embed fsl", a.out);
    manifest.set_seed(a.seed);
    common_embed_parameters(manifest, a);
    manifest.parameters()["x_file"] = a.x_file;
    manifest.parameters()["labels_file"] = a.labels_file;
    manifest.parameters()["test_x_file"] = a.test_x_file;
    manifest.parameters()["test_labels_file"] = a.test_labels_file;

    const Matrix E = embed::one_hot(train.labels, train.K);
    const Matrix B = embed::fit_embedding(train.X, E, method, fit_params(a));

    std::vector<std::size_t> predicted;
    for (std::size_t i = 0; i < test.X.rows(); ++i) {
        predicted.push_back(embed::predict_fsl(B, Matrix(1, test.X.cols(), {test.X.row(i).begin(), test.X.row(i).end()})));
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == static_cast<std::size_t>(test.labels[i]);
    const double acc = predicted.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(predicted.size());

    manifest.write("embedding.csv", to_csv(B));
    manifest.write("predictions.csv", predictions_csv(test.labels, predicted));
    manifest.parameters()["accuracy"] = acc;
    manifest.finish();
    out << "fsl " << train.K << "-way, " << train.X.rows() << " training rows, method " << a.method << '\n'
        << "accuracy " << io::format_double(acc) << " (" << hits << "/" << predicted.size() << ")\n";
    return ok;
}

inline int cmd_embed_zsl(const EmbedArgs& a, std::ostream& out)
{
    const embed::Method method = embed::parse_method(a.method);
    const auto source = read_labeled(a.x_file, a.labels_file);
    const Matrix es = io::read_matrix(a.source_semantic);
    const Matrix et = io::read_matrix(a.target_semantic);
    if (es.rows() != source.K) {
        throw DimensionError("source semantic matrix has " + std::to_string(es.rows()) + " rows for "
                             + std::to_string(source.K) + " source classes");
    }
    const auto test = read_labeled(a.test_x_file, a.test_labels_file, et.rows());
    if (test.X.cols() != source.X.cols()) throw DimensionError("test features have a different dimension");

    RunManifest manifest("embed zsl", a.out);
    manifest.set_seed(a.seed);
    common_embed_parameters(manifest, a);
    auto& p = manifest.parameters();
    p["x_file"] = a.x_file;
    p["labels_file"] = a.labels_file;
    p["source_semantic"] = a.source_semantic;
    p["target_semantic"] = a.target_semantic;
    p["test_x_file"] = a.test_x_file;
    p["test_labels_file"] = a.test_labels_file;
    p["top"] = a.top;

    const embed::FitParams params = fit_params(a);
    const embed::PrototypeSet fs = embed::class_prototypes(source);

    // The MSplit variants keep the whole path point so strong/weak signals can be reported.
    Matrix B;
    std::optional<PathPoint> point;
    if (method == embed::Method::msplit_dense || method == embed::Method::msplit_sparse) {
        const auto fit = embed::fit_msplit(transpose(es), transpose(et), params,
                                           method == embed::Method::msplit_dense ? Estimator::dense : Estimator::sparse);
        point = fit.point;
        B = method == embed::Method::msplit_dense ? fit.point.B : fit.point.Btilde;
        p["t_selected"] = fit.t;
    } else {
        B = embed::learn_structure(es, et, method, params);
    }
    const embed::PrototypeSet ft = embed::synthesize_prototypes(fs, B);

    std::vector<std::size_t> predicted;
    for (std::size_t i = 0; i < test.X.rows(); ++i) {
        predicted.push_back(embed::predict_zsl(Matrix(1, test.X.cols(), {test.X.row(i).begin(), test.X.row(i).end()}), ft));
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == static_cast<std::size_t>(test.labels[i]);
    const double acc = predicted.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(predicted.size());

    manifest.write("structure.csv", to_csv(B));
    manifest.write("prototypes.csv", to_csv(ft.F));
    manifest.write("predictions.csv", predictions_csv(test.labels, predicted));
    if (point) {
        std::ostringstream sig;
        embed::write_signal_report_csv(sig, embed::signal_report(*point, a.top));
        manifest.write("signals.csv", sig.str());
    }
    p["accuracy"] = acc;
    manifest.finish();
    out << "zsl " << source.K << " source -> " << et.rows() << " target classes, method " << a.method << '\n'
        << "accuracy " << io::format_double(acc) << " (" << hits << "/" << predicted.size() << ")\n";
    return ok;
}

// ---------------------------------------------------------------------------
// toy-data

/**
 * Small synthetic inputs for the path and embed commands:
 *   path_X.csv, path_E.csv        sparse multi-response regression (N=40, d=8, p=2)
 *   fsl_*.csv                     5-way 5-shot separable clusters, 10 test rows per class
 *   zsl_*.csv                     linear-consistency instance: target semantics and
 *                                 features are exact combinations of source classes
 */
struct ToyData
{
    Matrix path_x, path_e;
    Matrix fsl_train_x, fsl_test_x;
    std::vector<int> fsl_train_labels, fsl_test_labels;
    Matrix zsl_source_x, zsl_test_x, zsl_source_semantic, zsl_target_semantic;
    std::vector<int> zsl_source_labels, zsl_test_labels;
    /// True target prototypes and combination weights (K_s x K_t).
    Matrix zsl_target_prototypes, zsl_weights;
};

inline ToyData make_toy_data(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    ToyData t;

    {
        const std::size_t n = 40, d = 8, p = 2;
        t.path_x = Matrix(n, d);
        for (double& v : t.path_x.data()) v = normal(rng);
        Matrix b(d, p);
        b(0, 0) = 2.0;
        b(1, 0) = -1.5;
        b(2, 0) = 0.3;
        b(3, 1) = 1.8;
        b(4, 1) = 0.25;
        t.path_e = matmul(t.path_x, b);
        for (double& v : t.path_e.data()) v += 0.3 * normal(rng);
    }
    {
        const std::size_t ways = 5, shots = 5, test_per = 10, d = 20;
        Matrix means(ways, d);
        for (double& v : means.data()) v = 2.0 * normal(rng);
        auto draw = [&](std::size_t per, Matrix& x, std::vector<int>& labels) {
            x = Matrix(ways * per, d);
            for (std::size_t k = 0; k < ways; ++k) {
                for (std::size_t s = 0; s < per; ++s) {
                    const std::size_t row = k * per + s;
                    for (std::size_t j = 0; j < d; ++j) x(row, j) = means(k, j) + 0.5 * normal(rng);
                    labels.push_back(static_cast<int>(k));
                }
            }
        };
        draw(shots, t.fsl_train_x, t.fsl_train_labels);
        draw(test_per, t.fsl_test_x, t.fsl_test_labels);
    }
    {
        const std::size_t ks = 5, kt = 3, q = 8, d = 12, per_source = 6, per_test = 8;
        t.zsl_source_semantic = Matrix(ks, q);
        for (double& v : t.zsl_source_semantic.data()) v = normal(rng);
        t.zsl_weights = Matrix(ks, kt);
        t.zsl_weights(0, 0) = 0.7;
        t.zsl_weights(1, 0) = 0.3;
        t.zsl_weights(2, 1) = 1.0;
        t.zsl_weights(3, 2) = 0.5;
        t.zsl_weights(4, 2) = 0.5;
        t.zsl_target_semantic = matmul_tn(t.zsl_weights, t.zsl_source_semantic);

        Matrix source_means(ks, d);
        for (double& v : source_means.data()) v = 3.0 * normal(rng);
        // Zero-mean noise per class so the sample means equal the class means exactly.
        t.zsl_source_x = Matrix(ks * per_source, d);
        for (std::size_t k = 0; k < ks; ++k) {
            std::vector<double> noise(per_source * d);
            for (double& v : noise) v = 0.3 * normal(rng);
            for (std::size_t j = 0; j < d; ++j) {
                double mean = 0.0;
                for (std::size_t s = 0; s < per_source; ++s) mean += noise[s * d + j];
                mean /= static_cast<double>(per_source);
                for (std::size_t s = 0; s < per_source; ++s) {
                    t.zsl_source_x(k * per_source + s, j) = source_means(k, j) + noise[s * d + j] - mean;
                }
            }
            for (std::size_t s = 0; s < per_source; ++s) t.zsl_source_labels.push_back(static_cast<int>(k));
        }
        t.zsl_target_prototypes = matmul_tn(t.zsl_weights, source_means);
        t.zsl_test_x = Matrix(kt * per_test, d);
        for (std::size_t k = 0; k < kt; ++k) {
            for (std::size_t s = 0; s < per_test; ++s) {
                for (std::size_t j = 0; j < d; ++j) {
                    t.zsl_test_x(k * per_test + s, j) = t.zsl_target_prototypes(k, j) + 0.3 * normal(rng);
                }
                t.zsl_test_labels.push_back(static_cast<int>(k));
            }
        }
    }
    return t;
}

inline std::string labels_text(const std::vector<int>& labels)
{
    std::ostringstream s;
    for (int l : labels) s << l << '\n';
    return s.str();
}

inline int cmd_toy_data(std::uint64_t seed, const std::string& out_dir, std::ostream& out)
{
    const ToyData t = make_toy_data(seed);
    RunManifest manifest("toy-data", out_dir);
    manifest.set_seed(seed);
    manifest.write("path_X.csv", to_csv(t.path_x));
    manifest.write("path_E.csv", to_csv(t.path_e));
    manifest.write("fsl_train_x.csv", to_csv(t.fsl_train_x));
    manifest.write("fsl_train_labels.csv", labels_text(t.fsl_train_labels));
    manifest.write("fsl_test_x.csv", to_csv(t.fsl_test_x));
    manifest.write("fsl_test_labels.csv", labels_text(t.fsl_test_labels));
    manifest.write("zsl_source_x.csv", to_csv(t.zsl_source_x));
    manifest.write("zsl_source_labels.csv", labels_text(t.zsl_source_labels));
    manifest.write("zsl_source_semantic.csv", to_csv(t.zsl_source_semantic));
    manifest.write("zsl_target_semantic.csv", to_csv(t.zsl_target_semantic));
    manifest.write("zsl_test_x.csv", to_csv(t.zsl_test_x));
    manifest.write("zsl_test_labels.csv", labels_text(t.zsl_test_labels));
    manifest.write("zsl_target_prototypes.csv", to_csv(t.zsl_target_prototypes));
    manifest.finish();
    out << "toy data: 13 files and manifest.json (seed " << seed << ")\n";
    return ok;
}

// ---------------------------------------------------------------------------
// entry point

/// Parses argv and dispatches. Never throws; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"MSplit LBI regularization paths, baselines, simulation and embedding pipelines"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    SimulateArgs sim_args;
    auto* simulate = app.add_subcommand("simulate", "Synthetic comparison of MSplit LBI with MLE, ridge, lasso, elastic net");
    simulate->add_option("--sigma", sim_args.sigmas, "Design correlation values in [0, 1)")->capture_default_str();
    simulate->add_option("--trials", sim_args.trials, "Trials per sigma")->capture_default_str();
    simulate->add_option("--seed", sim_args.seed, "Base seed")->capture_default_str();
    simulate->add_option("--kappa", sim_args.kappa, "Damping factor kappa")->capture_default_str();
    simulate->add_option("--nu", sim_args.nu, "nu for every sigma (default 3/5/7/10 for sigma 0.2/0.4/0.6/0.8)");
    simulate->add_option("--alpha", sim_args.alpha, "Step size (default: largest stable)");
    simulate->add_option("--noise-sd", sim_args.noise_sd, "Noise standard deviation")->capture_default_str();
    simulate->add_option("--n", sim_args.n, "Samples per trial")->capture_default_str();
    simulate->add_option("--d", sim_args.d, "Features")->capture_default_str();
    simulate->add_option("--lambda-max", sim_args.lambda_max, "Largest baseline penalty")->capture_default_str();
    simulate->add_option("--grid-points", sim_args.grid_points, "Baseline penalty grid size")->capture_default_str();
    simulate->add_flag("--with-cv", sim_args.with_cv, "Also report MSplit (beta) at a cross-validated t");
    simulate->add_flag("--curve", sim_args.curve, "Also write the path error curve of trial 0 per sigma");
    simulate->add_option("--out", sim_args.out, "Output directory")->capture_default_str();

    PathArgs path_args;
    auto* path = app.add_subcommand("path", "Run MSplit LBI on X and E matrix files and export the path");
    path->add_option("--x-file", path_args.x_file, "Design matrix (CSV or JSON)")->required();
    path->add_option("--e-file", path_args.e_file, "Response matrix (CSV or JSON)")->required();
    path_args.solver.add_to(*path);
    path->add_option("--t", path_args.t, "Write a decomposition at the last recorded point with t' <= t");
    path->add_option("--decompose-tau", path_args.decompose_tau, "Weak/noise threshold (default: robust noise scale)");
    path->add_flag("--json", path_args.json, "Also write the dense JSON path");
    path->add_option("--out", path_args.out, "Output directory")->capture_default_str();

    VerifyArgs verify_args;
    auto* verify = app.add_subcommand("verify", "Monte-Carlo bias checks for ridge/elastic net and MSplit LBI under X = I");
    verify->add_option("--lemma", verify_args.lemma, "1, 2 or all")->capture_default_str();
    verify->add_option("--lambda1", verify_args.lambda1, "Elastic-net l1 penalty")->capture_default_str();
    verify->add_option("--lambda2", verify_args.lambda2, "Ridge / elastic-net l2 penalty")->capture_default_str();
    verify->add_option("--nu", verify_args.nu, "MSplit nu")->capture_default_str();
    verify->add_option("--kappa", verify_args.kappa, "MSplit kappa (>= 100)")->capture_default_str();
    verify->add_option("--draws", verify_args.draws, "Monte-Carlo draws (default 10000 for lemma 1, 1000 for lemma 2)");
    verify->add_option("--seed", verify_args.seed, "Seed")->capture_default_str();
    verify->add_option("--out", verify_args.out, "Output directory")->capture_default_str();

    EmbedArgs fsl_args, zsl_args;
    auto* embed_cmd = app.add_subcommand("embed", "Few-shot and zero-shot linear-embedding pipelines");
    embed_cmd->require_subcommand(1);
    auto add_embed_common = [](CLI::App& sub, EmbedArgs& a) {
        sub.add_option("--method", a.method, "msplit_dense, msplit_sparse, lasso or ridge")->capture_default_str();
        a.solver.add_to(sub);
        sub.add_option("--t", a.t, "Fixed path time for MSplit (default: cross-validated)");
        sub.add_option("--folds", a.folds, "Cross-validation folds")->capture_default_str();
        sub.add_option("--lambda", a.lambda, "Penalty for lasso / ridge")->capture_default_str();
        sub.add_option("--seed", a.seed, "Fold-shuffle seed")->capture_default_str();
        sub.add_option("--out", a.out, "Output directory")->capture_default_str();
    };
    auto* fsl = embed_cmd->add_subcommand("fsl", "Fit a one-hot label embedding and classify by argmax");
    fsl->add_option("--x-file", fsl_args.x_file, "Training features")->required();
    fsl->add_option("--labels-file", fsl_args.labels_file, "Training labels, one integer per line")->required();
    fsl->add_option("--test-x-file", fsl_args.test_x_file, "Test features")->required();
    fsl->add_option("--test-labels-file", fsl_args.test_labels_file, "Test labels")->required();
    add_embed_common(*fsl, fsl_args);

    auto* zsl = embed_cmd->add_subcommand("zsl", "Transfer class structure to synthesize unseen-class prototypes");
    zsl->add_option("--x-file", zsl_args.x_file, "Source-class features")->required();
    zsl->add_option("--labels-file", zsl_args.labels_file, "Source labels, one integer per line")->required();
    zsl->add_option("--source-semantic", zsl_args.source_semantic, "Source semantic vectors, K_s x q")->required();
    zsl->add_option("--target-semantic", zsl_args.target_semantic, "Target semantic vectors, K_t x q")->required();
    zsl->add_option("--test-x-file", zsl_args.test_x_file, "Target-class test features")->required();
    zsl->add_option("--test-labels-file", zsl_args.test_labels_file, "Target test labels in [0, K_t)")->required();
    zsl->add_option("--top", zsl_args.top, "Strong / weak signals reported per target class")->capture_default_str();
    add_embed_common(*zsl, zsl_args);

    std::uint64_t toy_seed = 0;
    std::string toy_out = ".";
    auto* toy = app.add_subcommand("toy-data", "Write small synthetic inputs for path and embed");
    toy->add_option("--seed", toy_seed, "Seed")->capture_default_str();
    toy->add_option("--out", toy_out, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();  // delegates to the selected subcommand
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\nRun with --help for usage.\n";
        return usage;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim_args, out);
        if (path->parsed()) return cmd_path(path_args, out);
        if (verify->parsed()) return cmd_verify(verify_args, out);
        if (fsl->parsed()) return cmd_embed_fsl(fsl_args, out);
        if (zsl->parsed()) return cmd_embed_zsl(zsl_args, out);
        if (toy->parsed()) return cmd_toy_data(toy_seed, toy_out, out);
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\nRun with --help for usage.\n";
        return usage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return numeric;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << '\n';
        return numeric;
    }
    return usage;
}

} // namespace msplit::cli

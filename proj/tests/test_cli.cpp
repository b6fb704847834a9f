#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include <msplit/cli.hpp>

namespace fs = std::filesystem;
using msplit::Matrix;

namespace {

struct Result
{
    int code = -1;
    std::string out;
    std::string err;
};

Result run(std::initializer_list<std::string> args)
{
    std::vector<std::string> owned{"msplit"};
    owned.insert(owned.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : owned) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Result r;
    r.code = msplit::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

class CliTest : public ::testing::Test
{
protected:
    void SetUp() override
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("msplit_cli_") + info->name() + "_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    std::string toy()
    {
        const std::string d = path("toy");
        EXPECT_EQ(run({"toy-data", "--seed", "4", "--out", d}).code, 0);
        return d;
    }

    fs::path dir_;
};

} // namespace

TEST_F(CliTest, HelpSucceeds)
{
    const auto top = run({"--help"});
    EXPECT_EQ(top.code, 0);
    EXPECT_NE(top.out.find("simulate"), std::string::npos);
    const auto sub = run({"path", "--help"});
    EXPECT_EQ(sub.code, 0);
    EXPECT_NE(sub.out.find("--x-file"), std::string::npos);
}

TEST_F(CliTest, MissingOrUnknownSubcommandIsUsageError)
{
    EXPECT_EQ(run({}).code, 1);
    EXPECT_EQ(run({"frobnicate"}).code, 1);
    EXPECT_EQ(run({"simulate", "--no-such-flag"}).code, 1);
}

TEST_F(CliTest, InvalidArgumentsExitWithUsage)
{
    EXPECT_EQ(run({"simulate", "--trials", "0", "--out", path("s")}).code, 1);
    EXPECT_EQ(run({"simulate", "--sigma", "1.5", "--out", path("s")}).code, 1);
    EXPECT_EQ(run({"verify", "--draws", "10", "--out", path("v")}).code, 1);
    EXPECT_EQ(run({"verify", "--lemma", "3", "--out", path("v")}).code, 1);
    EXPECT_EQ(run({"verify", "--kappa", "5", "--out", path("v")}).code, 1);
}

TEST_F(CliTest, MissingLabelsFileNamesThePath)
{
    const std::string d = toy();
    const std::string missing = path("nope.csv");
    const auto r = run({"embed", "fsl", "--x-file", d + "/fsl_train_x.csv", "--labels-file", missing, "--test-x-file",
                        d + "/fsl_test_x.csv", "--test-labels-file", d + "/fsl_test_labels.csv", "--out", path("o")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(path("o") + "/manifest.json"));
}

TEST_F(CliTest, UnknownMethodIsUsageError)
{
    const std::string d = toy();
    const auto r = run({"embed", "fsl", "--x-file", d + "/fsl_train_x.csv", "--labels-file", d + "/fsl_train_labels.csv",
                        "--test-x-file", d + "/fsl_test_x.csv", "--test-labels-file", d + "/fsl_test_labels.csv",
                        "--method", "svm", "--out", path("o")});
    EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, PathTBeyondHorizonIsRejected)
{
    const std::string d = toy();
    const auto r = run({"path", "--x-file", d + "/path_X.csv", "--e-file", d + "/path_E.csv", "--t-max", "2", "--t", "5",
                        "--out", path("p")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--t"), std::string::npos);
}

TEST_F(CliTest, PathAlphaAboveBoundIsRejected)
{
    const std::string d = toy();
    EXPECT_EQ(run({"path", "--x-file", d + "/path_X.csv", "--e-file", d + "/path_E.csv", "--alpha", "10", "--out",
                   path("p")}).code,
              1);
}

TEST_F(CliTest, PathWritesOutputsAndZeroTauDecomposition)
{
    const std::string d = toy();
    const std::string o = path("p");
    const auto r = run({"path", "--x-file", d + "/path_X.csv", "--e-file", d + "/path_E.csv", "--t-max", "5", "--json",
                        "--decompose-tau", "0", "--out", o});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"path.csv", "path.json", "decomposition.csv", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(o + "/" + f)) << f;
    }
    std::istringstream dec(slurp(o + "/decomposition.csv"));
    std::string line;
    std::getline(dec, line);
    EXPECT_EQ(line, "row_index,column_index,strong,weak,noise");
    std::size_t rows = 0;
    while (std::getline(dec, line)) {
        EXPECT_EQ(line.substr(line.rfind(',') + 1), "0") << line;
        ++rows;
    }
    EXPECT_EQ(rows, 8u * 2u);

    const auto manifest = nlohmann::json::parse(slurp(o + "/manifest.json"));
    EXPECT_EQ(manifest["command"], "path");
    EXPECT_EQ(manifest["outputs"].size(), 3u);
    EXPECT_EQ(manifest["started_at"], "2023-11-14T22:13:20Z");
}

TEST_F(CliTest, PathIsByteDeterministic)
{
    const std::string d = toy();
    for (const char* o : {"a", "b"}) {
        ASSERT_EQ(run({"path", "--x-file", d + "/path_X.csv", "--e-file", d + "/path_E.csv", "--t-max", "3", "--out",
                       path(o)}).code,
                  0);
    }
    EXPECT_EQ(slurp(path("a") + "/path.csv"), slurp(path("b") + "/path.csv"));
    EXPECT_EQ(slurp(path("a") + "/manifest.json").size(), slurp(path("b") + "/manifest.json").size());
}

TEST_F(CliTest, ToyDataIsSeedDeterministic)
{
    ASSERT_EQ(run({"toy-data", "--seed", "9", "--out", path("a")}).code, 0);
    ASSERT_EQ(run({"toy-data", "--seed", "9", "--out", path("b")}).code, 0);
    ASSERT_EQ(run({"toy-data", "--seed", "10", "--out", path("c")}).code, 0);
    for (const auto& entry : fs::directory_iterator(path("a"))) {
        const auto name = entry.path().filename().string();
        EXPECT_EQ(slurp(entry.path()), slurp(path("b") + "/" + name)) << name;
    }
    EXPECT_NE(slurp(path("a") + "/path_X.csv"), slurp(path("c") + "/path_X.csv"));
}

TEST_F(CliTest, FewShotPipelineRuns)
{
    const std::string d = toy();
    const std::string o = path("fsl");
    const auto r = run({"embed", "fsl", "--x-file", d + "/fsl_train_x.csv", "--labels-file", d + "/fsl_train_labels.csv",
                        "--test-x-file", d + "/fsl_test_x.csv", "--test-labels-file", d + "/fsl_test_labels.csv",
                        "--out", o});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(o + "/embedding.csv"));
    EXPECT_TRUE(fs::exists(o + "/predictions.csv"));
    const Matrix B = msplit::io::read_matrix(o + "/embedding.csv");
    EXPECT_EQ(B.rows(), 20u);
    EXPECT_EQ(B.cols(), 5u);
}

TEST_F(CliTest, ZeroShotRidgeRecoversExactPrototypes)
{
    const std::string d = toy();
    const std::string o = path("zsl");
    const auto r = run({"embed", "zsl", "--x-file", d + "/zsl_source_x.csv", "--labels-file",
                        d + "/zsl_source_labels.csv", "--source-semantic", d + "/zsl_source_semantic.csv",
                        "--target-semantic", d + "/zsl_target_semantic.csv", "--test-x-file", d + "/zsl_test_x.csv",
                        "--test-labels-file", d + "/zsl_test_labels.csv", "--method", "ridge", "--lambda", "0",
                        "--out", o});
    ASSERT_EQ(r.code, 0) << r.err;
    const Matrix got = msplit::io::read_matrix(o + "/prototypes.csv");
    const Matrix expected = msplit::io::read_matrix(d + "/zsl_target_prototypes.csv");
    ASSERT_TRUE(got.same_shape(expected));
    EXPECT_LT(msplit::max_abs(got - expected), 1e-8);
}

TEST_F(CliTest, ZeroShotMsplitWritesSignals)
{
    const std::string d = toy();
    const std::string o = path("zsl");
    const auto r = run({"embed", "zsl", "--x-file", d + "/zsl_source_x.csv", "--labels-file",
                        d + "/zsl_source_labels.csv", "--source-semantic", d + "/zsl_source_semantic.csv",
                        "--target-semantic", d + "/zsl_target_semantic.csv", "--test-x-file", d + "/zsl_test_x.csv",
                        "--test-labels-file", d + "/zsl_test_labels.csv", "--folds", "4", "--out", o});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"structure.csv", "prototypes.csv", "predictions.csv", "signals.csv", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(o + "/" + f)) << f;
    }
}

TEST_F(CliTest, VerifyBiasCheckWritesReport)
{
    const std::string o = path("v");
    const auto r = run({"verify", "--lemma", "1", "--draws", "2000", "--out", o});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    const auto report = nlohmann::json::parse(slurp(o + "/verify.json"));
    EXPECT_TRUE(report.contains("lemma1"));
}

TEST_F(CliTest, SimulateSmallRun)
{
    const std::string o = path("s");
    const auto r = run({"simulate", "--sigma", "0.2", "--trials", "2", "--n", "50", "--d", "40", "--grid-points", "20",
                        "--curve", "--out", o});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"table1.csv", "table1_long.csv", "curve_sigma=0.2.csv", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(o + "/" + f)) << f;
    }
}

#include "fxpnn/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace fxpnn;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args)
{
    args.insert(args.begin(), "fxpnn");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() /
               ("fxpnn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    // A quickly trained float model shared by several tests.
    std::string trained()
    {
        const auto p = path("float.txt");
        if (!fs::exists(p)) {
            const auto r = invoke({"train", "--steps", "200", "--seed", "3", "--out", p});
            EXPECT_EQ(r.code, 0) << r.err;
        }
        return p;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, ComplexityTable)
{
    const auto r = invoke({"complexity", "--k", "14"});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "receiver,k,additions,ratio\nml,14,30464,1.0\nnn,14,10496,0.3445\n");

    const auto r8 = invoke({"complexity", "--k", "8"});
    EXPECT_NE(r8.out.find("nn,8,10496,"), std::string::npos);
    EXPECT_NE(r8.out.find("ml,8,18176,1.0"), std::string::npos);

    const auto bad = invoke({"complexity", "--k", "2"});
    EXPECT_EQ(bad.code, cli::usage_error);
    EXPECT_NE(bad.err.find("--k"), std::string::npos);
}

TEST_F(CliTest, UsageErrors)
{
    EXPECT_EQ(invoke({}).code, cli::usage_error);
    EXPECT_EQ(invoke({"frobnicate"}).code, cli::usage_error);
    EXPECT_EQ(invoke({"train"}).code, cli::usage_error);
    EXPECT_EQ(invoke({"eval", "--receiver", "psychic"}).code, cli::usage_error);
    EXPECT_EQ(invoke({"eval", "--receiver", "nn-float"}).code, cli::usage_error);
    EXPECT_EQ(invoke({"quantize", "--model", trained(), "--out", path("q.txt"), "--method", "xx"}).code,
              cli::usage_error);
    EXPECT_EQ(invoke({"eval", "--model", path("missing.txt"), "--receiver", "nn-float"}).code,
              cli::runtime_error);
}

TEST_F(CliTest, TrainingDivergenceHasItsOwnExitCode)
{
    const auto r = invoke({"train", "--steps", "200", "--lr", "1e300", "--out", path("d.txt")});
    EXPECT_EQ(r.code, cli::diverged) << r.err;
    EXPECT_NE(cli::diverged, cli::usage_error);
}

TEST_F(CliTest, TrainIsDeterministic)
{
    const auto a = path("a.txt"), b = path("b.txt");
    const auto ra = invoke({"train", "--steps", "100", "--seed", "5", "--out", a});
    const auto rb = invoke({"train", "--steps", "100", "--seed", "5", "--out", b});
    ASSERT_EQ(ra.code, 0);
    ASSERT_EQ(rb.code, 0);
    EXPECT_EQ(ra.out, rb.out);
    EXPECT_NE(ra.out.find("final training loss: "), std::string::npos);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_TRUE(std::holds_alternative<MlpModel>(load_model(a)));
}

TEST_F(CliTest, DirectCompressionIsIdempotent)
{
    const auto q1 = path("q1.txt"), q2 = path("q2.txt");
    const auto r1 = invoke({"quantize", "--model", trained(), "--method", "dc", "--ki", "5", "--kf", "8", "--out", q1});
    ASSERT_EQ(r1.code, 0) << r1.err;
    EXPECT_NE(r1.out.find("format 5 8"), std::string::npos);
    EXPECT_NE(r1.out.find("codebook size: 51"), std::string::npos);
    EXPECT_EQ(slurp(q1).substr(0, slurp(q1).find("\nw ")), "fxpnn v1\narch 8 64 32 256\nformat 5 8");

    const auto r2 = invoke({"quantize", "--model", q1, "--method", "dc", "--out", q2});
    ASSERT_EQ(r2.code, 0) << r2.err;
    EXPECT_EQ(slurp(q1), slurp(q2));
}

TEST_F(CliTest, LcOutputIsOnCodebookAndTraced)
{
    const auto q = path("lc.txt"), trace = path("trace.csv");
    const auto r = invoke({"quantize", "--model", trained(), "--method", "lc", "--kf", "8", "--lc-iters", "3",
                        "--lc-steps", "20", "--trace", trace, "--out", q});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto file = std::get<QuantizedModelFile>(load_model(q));
    const fxp::FixedPointFormat f(5, 8);
    EXPECT_TRUE(ParameterQuantizer(file.model.arch(), build_weight_codebook(14), BiasQuantizer(f))
                    .all_members(file.model.dequantize().params()));
    const auto t = slurp(trace);
    EXPECT_EQ(t.substr(0, t.find('\n')), "iter,mu,psi_gap,loss");
    EXPECT_EQ(file.lc_not_converged, r.out.find("converged: no") != std::string::npos);
}

TEST_F(CliTest, FixedPointNeedsQuantizedModel)
{
    const auto r = invoke({"eval", "--receiver", "nn-fixed", "--model", trained(), "--blocks", "10"});
    EXPECT_EQ(r.code, cli::usage_error);
}

TEST_F(CliTest, EvalCsvDeterministicAndWorkerInvariant)
{
    const auto q = path("q.txt");
    ASSERT_EQ(invoke({"quantize", "--model", trained(), "--method", "dc", "--out", q}).code, 0);
    for (const std::string rx : {"ml", "nn-float", "nn-fixed"}) {
        std::vector<std::string> base{"eval", "--receiver", rx, "--snr-start", "0", "--snr-stop", "8",
                                      "--snr-step", "4", "--blocks", "2500", "--seed", "9"};
        if (rx != "ml") {
            base.push_back("--model");
            base.push_back(q);
        }
        auto one = base, two = base, three = base;
        one.insert(one.end(), {"--workers", "1", "--out", path(rx + "1.csv")});
        two.insert(two.end(), {"--workers", "1", "--out", path(rx + "2.csv")});
        three.insert(three.end(), {"--workers", "3", "--out", path(rx + "3.csv")});
        ASSERT_EQ(invoke(one).code, 0);
        ASSERT_EQ(invoke(two).code, 0);
        ASSERT_EQ(invoke(three).code, 0);
        const auto a = slurp(path(rx + "1.csv"));
        EXPECT_EQ(a, slurp(path(rx + "2.csv")));
        EXPECT_EQ(a, slurp(path(rx + "3.csv")));
        EXPECT_EQ(a.substr(0, a.find('\n')), "snr,bler,blocks,errors,receiver");
        EXPECT_NE(a.find("," + rx + "\n"), std::string::npos);
    }
}

TEST_F(CliTest, ConfigFileSuppliesDefaultsAndCliWins)
{
    const auto conf = path("run.conf");
    std::ofstream(conf) << "# eval settings\nblocks = 300\nsnr-start=5\nsnr-stop = 5\n";
    const auto r = invoke({"eval", "--config", conf, "--snr-stop", "6"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("\n5,"), std::string::npos);
    EXPECT_NE(r.out.find("\n6,"), std::string::npos);
    EXPECT_NE(r.out.find(",300,"), std::string::npos);

    std::ofstream(path("bad.conf")) << "nonsense = 1\n";
    EXPECT_EQ(invoke({"eval", "--config", path("bad.conf")}).code, cli::usage_error);
}

TEST_F(CliTest, CustomConstellationMustMatchModel)
{
    const auto c = path("c.txt");
    std::ofstream(c) << "1 0\n0 1\n-1 0\n0 -1\n";
    const auto r = invoke({"eval", "--constellation", c, "--blocks", "1000", "--snr-start", "30", "--snr-stop", "30"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("30,0,1000,0,ml"), std::string::npos);
    EXPECT_EQ(invoke({"eval", "--constellation", c, "--receiver", "nn-float", "--model", trained()}).code,
              cli::usage_error);
}

TEST_F(CliTest, BinaryExitCodes)
{
    const char* exe = std::getenv("FXPNN_CLI");
    if (exe == nullptr)
        GTEST_SKIP() << "FXPNN_CLI not set";
    auto status = [&](const std::string& args) {
        const int s = std::system((std::string(exe) + " " + args + " >/dev/null 2>&1").c_str());
        return WEXITSTATUS(s);
    };
    EXPECT_EQ(status("complexity --k 14"), 0);
    EXPECT_EQ(status("complexity --k 2"), 2);
    EXPECT_EQ(status("--help"), 0);
    EXPECT_EQ(status("eval --receiver nn-float --model /nonexistent"), 1);
}

#include "fxpnn/lc.hpp"
#include "fxpnn/model_io.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace fxpnn;

namespace {

std::string to_text(const MlpModel& m)
{
    std::ostringstream os;
    write_model(os, m);
    return os.str();
}

std::string to_text(const QuantizedMlpModel& q, bool flag = false)
{
    std::ostringstream os;
    write_model(os, q, flag);
    return os.str();
}

ModelFile from_text(const std::string& s)
{
    std::istringstream is(s);
    return read_model(is);
}

int parse_error_line(const std::string& text)
{
    try {
        from_text(text);
    } catch (const ParseError& e) {
        return static_cast<int>(e.line());
    }
    return -1;
}

const std::string tiny_header = "fxpnn v1\narch 2 1\nformat 5 8\n";

}  // namespace

TEST(ModelIo, FloatRoundTripIsExact)
{
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto m = MlpModel::glorot(MlpArchitecture::receiver(), seed);
        const auto text = to_text(m);
        const auto back = std::get<MlpModel>(from_text(text));
        EXPECT_TRUE(back.arch() == m.arch());
        EXPECT_TRUE(std::equal(back.params().begin(), back.params().end(), m.params().begin()));
        EXPECT_EQ(to_text(back), text);
    }
}

TEST(ModelIo, QuantizedRoundTripIsExact)
{
    const auto cb = build_weight_codebook(14);
    const BiasQuantizer bq(fxp::FixedPointFormat(5, 8));
    for (std::uint64_t seed : {1u, 2u}) {
        const auto q = dc_quantize(MlpModel::glorot(MlpArchitecture::receiver(), seed), cb, bq);
        for (bool flag : {false, true}) {
            const auto text = to_text(q, flag);
            const auto back = std::get<QuantizedModelFile>(from_text(text));
            EXPECT_EQ(back.model, q);
            EXPECT_EQ(back.lc_not_converged, flag);
            EXPECT_EQ(to_text(back.model, back.lc_not_converged), text);
        }
    }
}

TEST(ModelIo, QuantizedHeader)
{
    const auto q = quantized_from_reals(MlpArchitecture({2, 1}, {false}), std::vector<double>{0.5, -4.0},
                                        fxp::FixedPointFormat(5, 8));
    EXPECT_EQ(to_text(q), "fxpnn v1\narch 2 1\nformat 5 8\nw 0 0 0 + -1\nw 0 0 1 - 2\n");
}

TEST(ModelIo, ParseErrorsCarryLineNumbers)
{
    EXPECT_EQ(parse_error_line("fxpnn v2\narch 2 1\n"), 1);
    EXPECT_EQ(parse_error_line("fxpnn v1\narch 2 x\n"), 2);
    EXPECT_EQ(parse_error_line(tiny_header + "w 0 0 0 + 1\nw 0 0 1 + 13\n"), 5);
    EXPECT_EQ(parse_error_line(tiny_header + "w 0 0 0 + 1\nw 0 0 2 + 1\n"), 5);
    EXPECT_EQ(parse_error_line(tiny_header + "w 0 0 0 + 1\nw 0 0 0 + 1\n"), 5);
    EXPECT_EQ(parse_error_line(tiny_header + "w 0 0 0 * 1\n"), 4);
    EXPECT_EQ(parse_error_line(tiny_header + "w 0 0 0 Z\nbogus\n"), 5);
    EXPECT_EQ(parse_error_line(tiny_header + "w 0 0 0 Z\nwf 0 0 1 0.5\n"), 5);
    EXPECT_NE(parse_error_line(tiny_header + "w 0 0 0 Z\n"), -1);  // missing record
    EXPECT_EQ(parse_error_line(tiny_header + "w 0 0 0 Z\nw 0 0 1 Z\n"), -1);
}

TEST(ModelIo, LoadReportsPath)
{
    EXPECT_THROW(load_model("/nonexistent/model.txt"), std::runtime_error);
}

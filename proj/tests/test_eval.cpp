#include "fxpnn/eval.hpp"
#include "fxpnn/lc.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace fxpnn;

namespace {

const auto e8 = build_constellation();

BlerConfig config(std::vector<double> snr, std::uint64_t blocks, unsigned workers = 1)
{
    BlerConfig c;
    c.snr_db = std::move(snr);
    c.blocks = blocks;
    c.seed = 7;
    c.workers = workers;
    return c;
}

}  // namespace

TEST(Wilson, KnownValues)
{
    auto w = wilson_interval(0, 100);
    EXPECT_NEAR(w.lo, 0.0, 1e-15);
    EXPECT_NEAR(w.hi, 0.03699349820698568, 1e-12);
    w = wilson_interval(10, 100);
    EXPECT_NEAR(w.lo, 0.0552291370606751, 1e-12);
    EXPECT_NEAR(w.hi, 0.17436566150491345, 1e-12);
    w = wilson_interval(36, 100000);
    EXPECT_NEAR(w.lo, 0.00026006211445195267, 1e-15);
    EXPECT_NEAR(w.hi, 0.0004983233406900272, 1e-15);
    EXPECT_TRUE(wilson_interval(10, 100).overlaps(wilson_interval(15, 100)));
    EXPECT_FALSE(wilson_interval(1, 1000).overlaps(wilson_interval(100, 1000)));
}

TEST(Bler, NoiselessMlIsErrorFree)
{
    auto cfg = config({-10.0, 0.0, 10.0}, 5000);
    cfg.noiseless = true;
    for (const auto& p : estimate_bler(MlReceiver(e8), e8, cfg).points)
        EXPECT_EQ(p.errors, 0u);
}

TEST(Bler, MlDecreasesWithSnr)
{
    const auto r = estimate_bler(MlReceiver(e8), e8, config({-2.0, 4.0, 11.0}, 10000));
    EXPECT_GT(r.points[0].bler, r.points[1].bler);
    EXPECT_GT(r.points[1].bler, r.points[2].bler);
    EXPECT_EQ(r.points[0].receiver, "ml");
}

TEST(Bler, MlHighSnrAndLowSnrLimits)
{
    const auto r = estimate_bler(MlReceiver(e8), e8, config({20.0, -40.0}, 100000, 4));
    EXPECT_LT(r.points[0].bler, 1e-4);
    const double chance = 1.0 - 1.0 / 256;
    EXPECT_NEAR(r.points[1].bler, chance, 4.0 * std::sqrt(chance * (1 - chance) / 1e5));
}

TEST(Bler, ReproducibleAndWorkerInvariant)
{
    const auto q = dc_quantize(MlpModel::glorot(MlpArchitecture::receiver(), 3), build_weight_codebook(14),
                               BiasQuantizer(fxp::FixedPointFormat(5, 8)));
    const auto m = q.dequantize();
    const auto snr = std::vector<double>{0.0, 6.0};
    // 2500 blocks: the last chunk is partial.
    const auto ml1 = estimate_bler(MlReceiver(e8), e8, config(snr, 2500, 1));
    const auto ml3 = estimate_bler(MlReceiver(e8), e8, config(snr, 2500, 3));
    const auto fx1 = estimate_bler(FixedNnReceiver(q), e8, config(snr, 2500, 1));
    const auto fx3 = estimate_bler(FixedNnReceiver(q), e8, config(snr, 2500, 3));
    const auto fl1 = estimate_bler(FloatNnReceiver(m), e8, config(snr, 2500, 1));
    const auto fl2 = estimate_bler(FloatNnReceiver(m), e8, config(snr, 2500, 2));
    for (std::size_t s = 0; s < snr.size(); ++s) {
        EXPECT_EQ(ml1.points[s].errors, ml3.points[s].errors);
        EXPECT_EQ(fx1.points[s].errors, fx3.points[s].errors);
        EXPECT_EQ(fl1.points[s].errors, fl2.points[s].errors);
    }
    EXPECT_EQ(fx1.saturations, fx3.saturations);
    const auto again = estimate_bler(MlReceiver(e8), e8, config(snr, 2500, 1));
    EXPECT_EQ(again.points[0].errors, ml1.points[0].errors);
    auto other = config(snr, 2500, 1);
    other.seed = 8;
    EXPECT_NE(estimate_bler(MlReceiver(e8), e8, other).points[0].errors, ml1.points[0].errors);
}

TEST(Bler, SnrPointsShareRealisations)
{
    // Estimating one SNR alone gives the same count as inside a grid.
    const auto grid = estimate_bler(MlReceiver(e8), e8, config({0.0, 3.0, 6.0}, 3000));
    const auto alone = estimate_bler(MlReceiver(e8), e8, config({3.0}, 3000));
    EXPECT_EQ(grid.points[1].errors, alone.points[0].errors);
}

TEST(Bler, UsageErrors)
{
    EXPECT_THROW(estimate_bler(MlReceiver(e8), e8, config({0.0}, 0)), std::invalid_argument);
    EXPECT_THROW(estimate_bler(MlReceiver(e8), e8, config({}, 10)), std::invalid_argument);
}

TEST(Bler, CsvFormat)
{
    const std::vector<BlerPoint> pts{{10.0, 3.6e-4, 100000, 36, "ml"}, {-2.5, 0.5, 2, 1, "nn-fixed"}};
    std::ostringstream os;
    write_bler_csv(os, pts);
    EXPECT_EQ(os.str(), "snr,bler,blocks,errors,receiver\n10,0.00036,100000,36,ml\n-2.5,0.5,2,1,nn-fixed\n");
}

TEST(SnrGrid, InclusiveEnd)
{
    EXPECT_EQ(snr_grid(-2.0, 11.0, 1.0).size(), 14u);
    EXPECT_EQ(snr_grid(0.0, 1.0, 0.1).size(), 11u);
    EXPECT_THROW(snr_grid(0.0, 1.0, 0.0), std::invalid_argument);
    EXPECT_THROW(snr_grid(2.0, 1.0, 1.0), std::invalid_argument);
}

TEST(Complexity, ClosedForms)
{
    const auto arch = MlpArchitecture::receiver();
    const auto ml = count_additions(ReceiverKind::ml, arch, 256, 4, 14);
    const auto nn = count_additions(ReceiverKind::nn, arch, 256, 4, 14);
    EXPECT_EQ(ml.additions, 30464u);
    EXPECT_EQ(nn.additions, 10496u);
    EXPECT_EQ(format_ratio(ml.ratio_vs_ml), "1.0");
    EXPECT_EQ(format_ratio(nn.ratio_vs_ml), "0.3445");
    for (int k = 3; k <= 32; ++k) {
        EXPECT_EQ(count_additions(ReceiverKind::ml, arch, 256, 4, k).additions,
                  2048u * static_cast<unsigned>(k - 1) + 3840u);
        EXPECT_EQ(count_additions(ReceiverKind::nn, arch, 256, 4, k).additions, 10496u);
    }
    EXPECT_LT(count_additions(ReceiverKind::nn, arch, 256, 4, 8).ratio_vs_ml,
              count_additions(ReceiverKind::nn, arch, 256, 4, 3).ratio_vs_ml);
    EXPECT_THROW(count_additions(ReceiverKind::ml, arch, 256, 4, 2), std::invalid_argument);

    std::ostringstream os;
    const std::vector<ComplexityReport> rows{ml, nn};
    write_complexity_csv(os, rows);
    EXPECT_EQ(os.str(), "receiver,k,additions,ratio\nml,14,30464,1.0\nnn,14,10496,0.3445\n");
}

TEST(Complexity, InstrumentedCountMatchesClosedForm)
{
    const auto arch = MlpArchitecture::receiver();
    const fxp::FixedPointFormat f(5, 8);
    const auto q = dc_quantize(MlpModel::glorot(arch, 1), build_weight_codebook(14), BiasQuantizer(f));
    FixedPointInference engine(q);
    std::vector<std::int64_t> x(8, 100), out(256);
    fxp::Context ctx;
    engine.run(x, ctx, out);
    EXPECT_EQ(ctx.additions(), nn_additions(arch));

    const MlpArchitecture tiny({3, 4, 2}, {true, false});
    EXPECT_EQ(nn_additions(tiny), 4u * 2 + 4 + 2u * 3);
}

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "zone/attention.hpp"
#include "zone/denoise.hpp"
#include "zone/fixtures.hpp"
#include "zone/random.hpp"

using namespace zone;

namespace {

double cfg_scalar(double uu, double iu, double it, double si, double st) {
    return uu + si * (iu - uu) + st * (it - iu);
}

double fuse_scalar(double a, double b, double beta) { return (a + beta * b) / (1.0 + beta); }

// Centred square covering a quarter of the side.
BinaryMask centred_square(std::size_t n) { return region_mask(n, RegionShape::Square, n / 2, n / 2, n / 4); }

}  // namespace

TEST(Actions, LabelsAndNames) {
    EXPECT_EQ(action_from_label(0), EditAction::Change);
    EXPECT_EQ(action_from_label(1), EditAction::Add);
    EXPECT_EQ(action_from_label(2), EditAction::Remove);
    EXPECT_THROW(action_from_label(3), Error);
    for (auto a : {EditAction::Change, EditAction::Add, EditAction::Remove})
        EXPECT_EQ(parse_action(to_string(a)), a);
    EXPECT_FALSE(parse_action("paint").has_value());
}

TEST(CfgCombine, ConstantInputsStayConstant) {
    const Grid2D c = Grid2D::filled(3, 3, 0.7f);
    for (auto s : {GuidanceScales{0, 0}, GuidanceScales{1.5, 7.5}, GuidanceScales{20, 3}}) {
        const Grid2D r = cfg_combine(c, c, c, s);
        for (float v : r.values()) EXPECT_FLOAT_EQ(v, 0.7f);
    }
}

TEST(CfgCombine, UnitScalesReturnFull) {
    std::mt19937_64 rng(1);
    const Grid2D a = oracle::random_grid(rng, 4, 4), b = oracle::random_grid(rng, 4, 4), c = oracle::random_grid(rng, 4, 4);
    EXPECT_EQ(cfg_combine(a, b, c, {1, 1}), c);
}

TEST(CfgCombine, MatchesScalarOracle) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        const Grid2D a = oracle::random_grid(rng, 5, 6), b = oracle::random_grid(rng, 5, 6),
                     c = oracle::random_grid(rng, 5, 6);
        const Grid2D r = cfg_combine(a, b, c, {7.5, 1.5});
        for (std::size_t i = 0; i < r.size(); ++i)
            EXPECT_NEAR(r.values()[i], cfg_scalar(a.values()[i], b.values()[i], c.values()[i], 7.5, 1.5), 1e-6);
    }
}

TEST(CfgCombine, Linearity) {
    std::mt19937_64 rng(3);
    const Grid2D a = oracle::random_grid(rng, 3, 3), b = oracle::random_grid(rng, 3, 3), c = oracle::random_grid(rng, 3, 3);
    auto scaled = [](const Grid2D& g, float k) {
        return Grid2D::generate(g.height(), g.width(), [&](std::size_t r, std::size_t cc) { return k * g(r, cc); });
    };
    const Grid2D base = cfg_combine(a, b, c, {1.5, 7.5});
    const Grid2D k3 = cfg_combine(scaled(a, 3), scaled(b, 3), scaled(c, 3), {1.5, 7.5});
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(k3.values()[i], 3 * base.values()[i], 1e-5);
}

TEST(CfgCombine, Errors) {
    const Grid2D a = Grid2D::filled(2, 2, 0), b = Grid2D::filled(2, 3, 0);
    EXPECT_THROW(cfg_combine(a, a, b, {}), ShapeError);
    EXPECT_THROW(cfg_combine(a, a, a, {-1, 1}), Error);
}

TEST(FuseLatents, RemoveExample) {
    const Grid2D r = fuse_latents(Grid2D(1, 1, {1.0f}), Grid2D(1, 1, {2.0f}), EditAction::Remove, FusionConfig{});
    EXPECT_NEAR(r(0, 0), 1.1666667, 1e-6);
}

TEST(FuseLatents, OtherActionsUseSmallBeta) {
    for (auto a : {EditAction::Change, EditAction::Add}) {
        const Grid2D r = fuse_latents(Grid2D(1, 1, {1.0f}), Grid2D(1, 1, {2.0f}), a, FusionConfig{});
        EXPECT_NEAR(r(0, 0), fuse_scalar(1, 2, 0.01), 1e-6);
    }
}

TEST(FuseLatents, ZeroBetaReturnsPrimary) {
    std::mt19937_64 rng(4);
    const Grid2D a = oracle::random_grid(rng, 4, 4), b = oracle::random_grid(rng, 4, 4);
    FusionConfig zero{0.0, 0.0, 20};
    for (auto act : {EditAction::Change, EditAction::Remove}) EXPECT_EQ(fuse_latents(a, b, act, zero), a);
}

TEST(FuseLatents, FixedPoint) {
    std::mt19937_64 rng(5);
    const Grid2D a = oracle::random_grid(rng, 4, 4);
    for (double beta : {0.0, 0.01, 0.2, 3.0}) EXPECT_EQ(fuse_latents(a, a, EditAction::Remove, {beta, beta, 20}), a);
}

TEST(FuseLatents, MatchesScalarOracleAndStaysBetween) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 20; ++t) {
        const Grid2D a = oracle::random_grid(rng, 6, 6, -10, 10), b = oracle::random_grid(rng, 6, 6, -10, 10);
        for (auto act : {EditAction::Change, EditAction::Add, EditAction::Remove}) {
            const double beta = act == EditAction::Remove ? 0.2 : 0.01;
            const Grid2D r = fuse_latents(a, b, act, FusionConfig{});
            for (std::size_t i = 0; i < r.size(); ++i) {
                const double x = a.values()[i], y = b.values()[i];
                EXPECT_NEAR(r.values()[i], fuse_scalar(x, y, beta), 1e-6);
                EXPECT_GE(r.values()[i], std::min(x, y));
                EXPECT_LE(r.values()[i], std::max(x, y));
            }
        }
    }
}

TEST(FuseLatents, Errors) {
    EXPECT_THROW(fuse_latents(Grid2D::filled(1, 2, 0), Grid2D::filled(2, 1, 0), EditAction::Add, {}), ShapeError);
    EXPECT_THROW(fuse_latents(Grid2D::filled(1, 1, 0), Grid2D::filled(1, 1, 0), EditAction::Add, {-0.1, 0.1, 20}),
                 Error);
}

TEST(Random, CounterHashIsStableAndSpread) {
    EXPECT_EQ(splitmix64(0), splitmix64(0));
    EXPECT_NE(counter_hash(1, 2, 3), counter_hash(1, 2, 4));
    EXPECT_NE(counter_hash(1, 2, 3), counter_hash(1, 3, 3));
    double mean = 0.0;
    for (std::uint64_t i = 0; i < 10000; ++i) {
        const double u = counter_uniform(42, 7, i);
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        mean += u;
    }
    EXPECT_NEAR(mean / 10000, 0.5, 0.02);
}

TEST(MockDenoiser, Deterministic) {
    const BinaryMask region = centred_square(64);
    const auto mock = MockDenoiser::with_defaults(9, region, 20);
    const auto a = run_fused_denoise(mock, EditAction::Change, {}, {});
    const auto b = run_fused_denoise(mock, EditAction::Change, {}, {});
    EXPECT_EQ(a.canvas_latent, b.canvas_latent);
    ASSERT_EQ(a.attention.entries.size(), b.attention.entries.size());
    for (std::size_t i = 0; i < a.attention.entries.size(); ++i) EXPECT_EQ(a.attention.entries[i].maps, b.attention.entries[i].maps);
    const auto c = run_fused_denoise(MockDenoiser::with_defaults(10, region, 20), EditAction::Change, {}, {});
    // The last step has alpha = 1, so seeds differ only in the attention maps.
    EXPECT_NE(a.attention.entries.front().maps, c.attention.entries.front().maps);
}

TEST(MockDenoiser, ShapeOfCollection) {
    const auto mock = MockDenoiser::with_defaults(1, centred_square(64), 20);
    const auto r = run_fused_denoise(mock, EditAction::Remove, {}, {});
    EXPECT_EQ(r.attention.step_count(), 20u);
    EXPECT_EQ(r.attention.block_ids().size(), 6u);
    EXPECT_EQ(r.attention.entries.size(), 120u);
    EXPECT_EQ(r.attention.entries[0].maps.height(), 8u);
    for (const auto& e : r.attention.entries)
        for (std::size_t p = 0; p < 64; ++p) {
            double s = 0;
            for (std::size_t l = 0; l < e.maps.layers(); ++l) s += e.maps.values()[l * 64 + p];
            ASSERT_NEAR(s, 1.0, 1e-5);
        }
}

TEST(MockDenoiser, FullFrameRegionRecoversFullFrame) {
    const BinaryMask full = BinaryMask::filled(64, 64, true);
    const auto r = run_fused_denoise(MockDenoiser::with_defaults(3, full, 20), EditAction::Change, {}, {});
    const BinaryMask m = binarize_location(average_maps(r.attention, {128, 64, 64, false}), {128, 64, 64, false});
    EXPECT_EQ(m.count(), 64u * 64u);
}

TEST(MockDenoiser, ImplantedSquareRecovered) {
    const BinaryMask square = region_mask(512, RegionShape::Square, 256, 256, 64);
    const auto r = run_fused_denoise(MockDenoiser::with_defaults(1, square, 20), EditAction::Change, {}, {});
    const LocalizerConfig lc{128, 512, 512, false};
    const BinaryMask m = binarize_location(average_maps(r.attention, lc), lc);
    EXPECT_GE(oracle::iou(m, square), 0.9);
}

TEST(MockDenoiser, ValidationErrors) {
    auto mock = MockDenoiser::with_defaults(1, centred_square(16), 20);
    EXPECT_THROW(run_fused_denoise(mock, EditAction::Add, {}, {0.2, 0.01, 10}), Error);
    mock.token_count = 2;
    EXPECT_THROW(run_fused_denoise(mock, EditAction::Add, {}, {}), Error);
    mock = MockDenoiser::with_defaults(1, centred_square(16), 20);
    mock.alphas[3] = 0.0;
    EXPECT_THROW(run_fused_denoise(mock, EditAction::Add, {}, {}), Error);
}

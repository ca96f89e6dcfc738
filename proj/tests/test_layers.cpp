#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "zone/layers.hpp"

using namespace zone;

namespace {

EditLayer make_layer(std::mt19937_64& rng, const std::string& name, std::size_t h, std::size_t w, double p = 0.3) {
    return extract_layer(oracle::random_image(rng, h, w, 3), oracle::random_mask(rng, h, w, p), {name, "i " + name, EditAction::Add});
}

std::vector<Image> pixels_of(const std::vector<EditLayer>& layers) {
    std::vector<Image> out;
    for (const auto& l : layers) out.push_back(l.pixels);
    return out;
}

}  // namespace

TEST(ExtractLayer, FullMaskCopiesCanvas) {
    std::mt19937_64 rng(1);
    const Image canvas = oracle::random_image(rng, 6, 7, 3);
    const EditLayer l = extract_layer(canvas, BinaryMask::filled(6, 7, true), {"a", "", EditAction::Change});
    for (std::size_t i = 0; i < canvas.pixel_count(); ++i) {
        for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(l.pixels.pixel(i)[k], canvas.pixel(i)[k]);
        EXPECT_EQ(l.pixels.pixel(i)[3], 255);
    }
}

TEST(ExtractLayer, EmptyMaskIsTransparent) {
    std::mt19937_64 rng(2);
    const EditLayer l = extract_layer(oracle::random_image(rng, 5, 5, 3), BinaryMask::filled(5, 5, false), {"a", "", EditAction::Change});
    for (auto v : l.pixels.samples()) EXPECT_EQ(v, 0);
}

TEST(ExtractLayer, CheckerboardAlphaEqualsMask) {
    std::mt19937_64 rng(3);
    const Image canvas = oracle::random_image(rng, 8, 8, 4);
    const BinaryMask m = BinaryMask::generate(8, 8, [](std::size_t r, std::size_t c) { return (r + c) % 2 == 0; });
    const EditLayer l = extract_layer(canvas, m, {"a", "", EditAction::Change});
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) {
            EXPECT_EQ(l.pixels(r, c, 3), m(r, c) ? 255 : 0);
            for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(l.pixels(r, c, k), m(r, c) ? canvas(r, c, k) : 0);
        }
    EXPECT_THROW(extract_layer(canvas, BinaryMask::filled(8, 9, true), {"a", "", EditAction::Change}), ShapeError);
}

TEST(Composite, NoLayersIsBase) {
    std::mt19937_64 rng(4);
    const Image base = oracle::random_image(rng, 9, 9, 3);
    EXPECT_EQ(composite(base, {}), base);
}

TEST(Composite, FullAlphaLayerWins) {
    std::mt19937_64 rng(5);
    const Image base = oracle::random_image(rng, 9, 9, 3), canvas = oracle::random_image(rng, 9, 9, 3);
    const std::vector<EditLayer> layers{extract_layer(canvas, BinaryMask::filled(9, 9, true), {"a", "", EditAction::Add})};
    EXPECT_EQ(composite(base, layers), canvas);
}

TEST(Composite, MatchesPaintersAlgorithm) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 20; ++t) {
        const std::size_t ch = t % 2 ? 4 : 3;
        Image base = oracle::random_image(rng, 16, 12, ch);
        std::vector<EditLayer> layers;
        for (int k = 0; k < 1 + t % 4; ++k) layers.push_back(make_layer(rng, "l" + std::to_string(k), 16, 12, 0.4));
        EXPECT_EQ(composite(base, layers), oracle::paint(base, pixels_of(layers)));
    }
}

TEST(Composite, PixelsOutsideEveryMaskAreBitIdentical) {
    std::mt19937_64 rng(7);
    const Image base = oracle::random_image(rng, 32, 32, 3);
    std::vector<EditLayer> layers;
    for (int k = 0; k < 3; ++k) layers.push_back(make_layer(rng, "l" + std::to_string(k), 32, 32, 0.2));
    const Image out = composite(base, layers);
    BinaryMask outside = BinaryMask::generate(32, 32, [&](std::size_t r, std::size_t c) {
        return std::none_of(layers.begin(), layers.end(), [&](const EditLayer& l) { return l.mask(r, c); });
    });
    for (std::size_t i = 0; i < base.pixel_count(); ++i)
        if (outside.bits()[i]) {
            for (std::size_t k = 0; k < 3; ++k) ASSERT_EQ(out.pixel(i)[k], base.pixel(i)[k]);
        }
    const auto m = pixel_metrics(out, base, &outside);
    EXPECT_EQ(m.l1, 0.0);
    EXPECT_EQ(m.l2, 0.0);
}

TEST(Composite, AssociativeAndIdempotent) {
    std::mt19937_64 rng(8);
    const Image base = oracle::random_image(rng, 10, 10, 3);
    std::vector<EditLayer> a{make_layer(rng, "a", 10, 10), make_layer(rng, "b", 10, 10)};
    std::vector<EditLayer> b{make_layer(rng, "c", 10, 10)};
    std::vector<EditLayer> all = a;
    all.insert(all.end(), b.begin(), b.end());
    EXPECT_EQ(composite(composite(base, a), b), composite(base, all));
    const Image once = composite(base, all);
    EXPECT_EQ(composite(once, all), once);
}

TEST(Composite, ShapeErrors) {
    std::mt19937_64 rng(9);
    const Image base = oracle::random_image(rng, 10, 10, 3);
    const std::vector<EditLayer> bad{make_layer(rng, "a", 10, 11)};
    EXPECT_THROW(composite(base, bad), ShapeError);
}

TEST(Session, EmptyFlattenIsBase) {
    std::mt19937_64 rng(10);
    const Image base = oracle::random_image(rng, 8, 8, 3);
    EXPECT_EQ(EditSession(base).flatten(), base);
}

TEST(Session, AddThenRemoveRestoresBase) {
    std::mt19937_64 rng(11);
    const Image base = oracle::random_image(rng, 8, 8, 3);
    EditSession s(base);
    s.add_layer(make_layer(rng, "x", 8, 8, 0.9));
    EXPECT_NE(s.flatten(), base);
    s.remove_layer("x");
    EXPECT_EQ(s.flatten(), base);
    ASSERT_EQ(s.history().size(), 2u);
    EXPECT_EQ(s.history()[0].op, "add");
    EXPECT_EQ(s.history()[1].op, "remove");
    EXPECT_EQ(s.history()[1].seq, 2u);
}

TEST(Session, ReorderMatchesPermutedComposite) {
    std::mt19937_64 rng(12);
    const Image base = oracle::random_image(rng, 12, 12, 3);
    EditSession s(base);
    std::vector<EditLayer> layers{make_layer(rng, "a", 12, 12, 0.5), make_layer(rng, "b", 12, 12, 0.5),
                                  make_layer(rng, "c", 12, 12, 0.5)};
    for (const auto& l : layers) s.add_layer(l);
    s.reorder("c", 0);
    s.reorder("a", 2);
    const std::vector<EditLayer> permuted{layers[2], layers[1], layers[0]};
    EXPECT_EQ(s.flatten(), oracle::paint(base, pixels_of(permuted)));
    EXPECT_EQ(s.layers()[0].name, "c");
}

TEST(Session, Errors) {
    std::mt19937_64 rng(13);
    EditSession s(oracle::random_image(rng, 8, 8, 3));
    s.add_layer(make_layer(rng, "x", 8, 8));
    EXPECT_THROW(s.add_layer(make_layer(rng, "x", 8, 8)), Error);
    EXPECT_THROW(s.add_layer(make_layer(rng, "bad name", 8, 8)), Error);
    EXPECT_THROW(s.add_layer(make_layer(rng, "y", 9, 8)), ShapeError);
    EXPECT_THROW(s.remove_layer("nope"), Error);
    EXPECT_THROW(s.reorder("x", 1), Error);
    EXPECT_THROW(s.reorder("nope", 0), Error);
}

TEST(Session, NextLayerName) {
    std::mt19937_64 rng(14);
    EditSession s(oracle::random_image(rng, 4, 4, 3));
    EXPECT_EQ(s.next_layer_name(), "edit1");
    s.add_layer(make_layer(rng, "edit1", 4, 4));
    EXPECT_EQ(s.next_layer_name(), "edit2");
}

TEST(Session, ReplayReproducesFlatten) {
    std::mt19937_64 rng(15);
    const Image base = oracle::random_image(rng, 10, 10, 3);
    EditSession s(base);
    std::vector<EditLayer> pool;
    for (const char* n : {"a", "b", "c", "d"}) {
        pool.push_back(make_layer(rng, n, 10, 10, 0.4));
        s.add_layer(pool.back());
    }
    s.reorder("d", 1);
    s.remove_layer("b");
    s.reorder("a", 2);
    const EditSession replayed = EditSession::replay(base, pool, s.history());
    EXPECT_EQ(replayed.flatten(), s.flatten());
    EXPECT_EQ(replayed.history(), s.history());
}

TEST(Session, SaveLoadRoundTripAndLayout) {
    oracle::TempDir dir("session");
    std::mt19937_64 rng(16);
    EditSession s(oracle::random_image(rng, 10, 10, 3));
    s.add_layer(make_layer(rng, "first", 10, 10));
    s.add_layer(make_layer(rng, "second", 10, 10));
    s.reorder("second", 0);
    save_session(s, dir.path / "s");
    EXPECT_TRUE(std::filesystem::exists(dir.path / "s" / "base.png"));
    EXPECT_TRUE(std::filesystem::exists(dir.path / "s" / "session.json"));
    EXPECT_TRUE(std::filesystem::exists(dir.path / "s" / "layers" / "00_second.png"));
    EXPECT_TRUE(std::filesystem::exists(dir.path / "s" / "layers" / "01_first.mask.png"));
    const EditSession back = load_session(dir.path / "s");
    EXPECT_EQ(back.flatten(), s.flatten());
    EXPECT_EQ(back.history(), s.history());
    ASSERT_EQ(back.layers().size(), 2u);
    EXPECT_EQ(back.layers()[0].instruction, "i second");
    EXPECT_EQ(back.layers()[0].action, EditAction::Add);
    EXPECT_EQ(back.layers()[1].mask, s.layers()[1].mask);

    // Re-saving after a removal leaves no stale layer files.
    EditSession t = back;
    t.remove_layer("first");
    save_session(t, dir.path / "s");
    EXPECT_FALSE(std::filesystem::exists(dir.path / "s" / "layers" / "01_first.png"));
    EXPECT_EQ(load_session(dir.path / "s").layers().size(), 1u);
}

TEST(PixelMetrics, Examples) {
    const std::uint8_t zero[3] = {0, 0, 0}, full[3] = {255, 255, 255};
    const Image a = Image::filled(4, 4, 3, zero), b = Image::filled(4, 4, 3, full);
    EXPECT_EQ(pixel_metrics(a, a).l1, 0.0);
    EXPECT_EQ(pixel_metrics(a, a).l2, 0.0);
    EXPECT_DOUBLE_EQ(pixel_metrics(a, b).l1, 1.0);
    EXPECT_DOUBLE_EQ(pixel_metrics(a, b).l2, 1.0);
    EXPECT_THROW(pixel_metrics(a, Image::filled(4, 5, 3, zero)), ShapeError);
}

TEST(PixelMetrics, MatchesOracle) {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 10; ++t) {
        const Image a = oracle::random_image(rng, 13, 17, 3), b = oracle::random_image(rng, 13, 17, 3);
        double s1 = 0, s2 = 0;
        for (std::size_t i = 0; i < a.samples().size(); ++i) {
            const double d = (double(a.samples()[i]) - double(b.samples()[i])) / 255.0;
            s1 += std::fabs(d);
            s2 += d * d;
        }
        const auto m = pixel_metrics(a, b);
        EXPECT_NEAR(m.l1, s1 / double(a.samples().size()), 1e-9);
        EXPECT_NEAR(m.l2, s2 / double(a.samples().size()), 1e-9);
    }
}

TEST(Upr, Examples) {
    const std::vector<double> equal(6, 3.0);
    for (double v : upr(equal)) EXPECT_NEAR(v, 100.0 / 6.0, 1e-12);
    const std::vector<double> one{0, 0, 5, 0};
    EXPECT_EQ(upr(one), (std::vector<double>{0, 0, 100, 0}));
    const std::vector<double> two{69, 31};
    const auto r = upr(two);
    EXPECT_NEAR(r[0], 69.0, 1e-12);
    EXPECT_NEAR(r[1], 31.0, 1e-12);
    const std::vector<double> zeros{0, 0};
    EXPECT_THROW(upr(zeros), Error);
    const std::vector<double> negative{1, -1};
    EXPECT_THROW(upr(negative), Error);
}

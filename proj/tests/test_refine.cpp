#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "zone/refine.hpp"

using namespace zone;

namespace {

BinaryMask left_half() {
    return BinaryMask::generate(4, 4, [](std::size_t, std::size_t c) { return c < 2; });
}
BinaryMask top_half() {
    return BinaryMask::generate(4, 4, [](std::size_t r, std::size_t) { return r < 2; });
}

}  // namespace

TEST(RegionIou, IdenticalDisjointAndHalves) {
    const BinaryMask a = left_half();
    EXPECT_EQ(region_iou(a, a), 1.0);
    EXPECT_EQ(region_iou(a, a.complement()), 0.0);
    EXPECT_NEAR(region_iou(left_half(), top_half()), 4.0 / 12.0, 1e-9);
}

TEST(RegionIou, EmptyUnionIsZero) {
    const BinaryMask e = BinaryMask::filled(3, 3, false);
    EXPECT_EQ(region_iou(e, e), 0.0);
}

TEST(RegionIou, MatchesCountingOracleAndIsSymmetric) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
        const std::size_t h = 1 + rng() % 30, w = 1 + rng() % 30;
        const BinaryMask a = oracle::random_mask(rng, h, w, 0.3), b = oracle::random_mask(rng, h, w, 0.6);
        const double s = region_iou(a, b);
        EXPECT_NEAR(s, oracle::iou(a, b), 1e-12);
        EXPECT_EQ(s, region_iou(b, a));
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
        EXPECT_EQ(mask_iou(a, b), s);
    }
}

TEST(RegionIou, DimensionMismatch) {
    EXPECT_THROW(region_iou(BinaryMask::filled(2, 2, true), BinaryMask::filled(2, 3, true)), ShapeError);
}

TEST(Refine, PerfectCandidateWins) {
    std::mt19937_64 rng(2);
    const BinaryMask loc = BinaryMask::generate(10, 10, [](std::size_t r, std::size_t c) { return r < 3 && c < 3; });
    SegmentSet set;
    set.segments.push_back(BinaryMask::generate(10, 10, [](std::size_t r, std::size_t) { return r > 5; }));
    set.segments.push_back(loc);
    set.segments.push_back(BinaryMask::generate(10, 10, [](std::size_t, std::size_t c) { return c > 5; }));
    const auto r = refine(set, loc);
    EXPECT_EQ(r.index, 1u);
    EXPECT_EQ(r.score, 1.0);
    EXPECT_EQ(r.mask, loc);
}

TEST(Refine, TiesGoToLowestIndex) {
    const BinaryMask loc = top_half();
    SegmentSet set{{left_half(), left_half()}, {}};
    EXPECT_EQ(refine(set, loc).index, 0u);
}

TEST(Refine, ImplantedEightyPercentCandidate) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 48;
        const BinaryMask loc = BinaryMask::generate(n, n, [](std::size_t r, std::size_t c) {
            return r >= 10 && r < 30 && c >= 10 && c < 30;
        });
        SegmentSet set;
        for (int k = 0; k < 100; ++k) set.segments.push_back(oracle::random_mask(rng, n, n, 0.2));
        // Drop 20% of the location rows: IoU 0.8.
        const BinaryMask implant = BinaryMask::generate(n, n, [&](std::size_t r, std::size_t c) { return loc(r, c) && r >= 14; });
        ASSERT_NEAR(oracle::iou(implant, loc), 0.8, 1e-12);
        const auto pos = static_cast<std::size_t>(rng() % 101);
        set.segments.insert(set.segments.begin() + static_cast<std::ptrdiff_t>(pos), implant);
        const auto r = refine(set, loc);
        EXPECT_EQ(r.index, pos);
        double best = -1;
        for (const auto& s : set.segments) best = std::max(best, oracle::iou(s, loc));
        EXPECT_NEAR(r.score, best, 1e-12);
    }
}

TEST(Refine, OrderInvariantUpToTies) {
    std::mt19937_64 rng(4);
    SegmentSet set;
    for (int k = 0; k < 30; ++k) set.segments.push_back(oracle::random_mask(rng, 12, 12, 0.1 + 0.02 * k));
    const BinaryMask loc = oracle::random_mask(rng, 12, 12, 0.4);
    const auto ref = refine(set, loc);
    for (int t = 0; t < 10; ++t) {
        std::shuffle(set.segments.begin(), set.segments.end(), rng);
        const auto r = refine(set, loc);
        EXPECT_EQ(r.score, ref.score);
        EXPECT_EQ(oracle::iou(r.mask, loc), oracle::iou(ref.mask, loc));
    }
}

TEST(Refine, Errors) {
    const BinaryMask loc = top_half();
    EXPECT_THROW(refine(SegmentSet{}, loc), Error);
    SegmentSet set{{left_half()}, {}};
    try {
        refine(set, BinaryMask::filled(4, 4, false));
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "no edit region located");
    }
    EXPECT_THROW(refine(set, BinaryMask::filled(5, 4, true)), ShapeError);
    SegmentSet ragged{{left_half(), BinaryMask::filled(3, 3, true)}, {}};
    EXPECT_THROW(refine(ragged, loc), ShapeError);
}

TEST(SegmentSetIo, RoundTripWithLevels) {
    oracle::TempDir dir("seg");
    std::mt19937_64 rng(5);
    SegmentSet set;
    for (int k = 0; k < 5; ++k) {
        set.segments.push_back(oracle::random_mask(rng, 9, 11));
        set.levels.emplace_back(k % 2 ? std::optional<int>(k) : std::nullopt);
    }
    write_segment_set(set, dir.path / "segments");
    const SegmentSet back = read_segment_set(dir.path / "segments" / "manifest.json");
    EXPECT_EQ(back.segments, set.segments);
    EXPECT_EQ(back.levels, set.levels);
}

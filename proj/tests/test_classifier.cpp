#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "zone/classifier.hpp"

using namespace zone;

TEST(Mlp, ZeroParamsGiveZeroLogitsAndChange) {
    const auto p = ClassifierParams::zeros();
    const std::vector<double> x(kEmbeddingDim, 0.3);
    EXPECT_EQ(forward<double>(p, x), (std::vector<double>{0, 0, 0}));
    EXPECT_EQ(classify<double>(p, x), EditAction::Change);
}

TEST(Mlp, BiasOnlyModel) {
    auto p = ClassifierParams::zeros();
    p.b2 = {1, 2, 3};
    std::mt19937_64 rng(1);
    std::vector<double> x(kEmbeddingDim);
    for (auto& v : x) v = std::normal_distribution<double>()(rng);
    EXPECT_EQ(forward<double>(p, x), (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(classify<double>(p, x), EditAction::Remove);
    for (int label = 0; label < 3; ++label) {
        p.b2 = {0, 0, 0};
        p.b2[static_cast<std::size_t>(label)] = 5;
        EXPECT_EQ(classify<double>(p, x), action_from_label(label));
    }
}

TEST(Mlp, ForwardMatchesOracle) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 10; ++t) {
        const auto p = ClassifierParams::initialize(rng());
        const Dataset d = oracle::random_dataset(rng, 1, kEmbeddingDim, 3);
        const auto got = forward<double>(p, d.row(0));
        const auto want = oracle::logits_oracle(p, d.row(0));
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(got[k], want[k], 1e-10);
    }
    EXPECT_THROW(forward<double>(ClassifierParams::zeros(), std::vector<double>(5)), ShapeError);
}

TEST(Mlp, FloatModelAgreesWithDouble) {
    const auto p = ClassifierParams::initialize(3);
    const auto f = p.cast<float>();
    std::mt19937_64 rng(3);
    const Dataset d = oracle::random_dataset(rng, 1, kEmbeddingDim, 3);
    const std::vector<float> xf(d.row(0).begin(), d.row(0).end());
    const auto a = forward<double>(p, d.row(0));
    const auto b = forward<float>(f, xf);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-4);
}

TEST(Loss, UniformLogitsGiveLogThree) {
    std::mt19937_64 rng(4);
    const Dataset d = oracle::random_dataset(rng, 10, 7, 3);
    EXPECT_NEAR(loss(ClassifierParams::zeros(7, 4, 3), d), std::log(3.0), 1e-12);
    EXPECT_NEAR(loss_and_grad(ClassifierParams::zeros(7, 4, 3), d).loss, std::log(3.0), 1e-12);
}

TEST(Loss, LargeCorrectMarginIsNearZero) {
    auto p = ClassifierParams::zeros(4, 2, 3);
    p.b2 = {0, 100, 0};
    Dataset d{4, std::vector<double>(8, 1.0), {1, 1}};
    EXPECT_LT(loss(p, d), 1e-12);
}

TEST(Loss, ShiftInvariant) {
    std::mt19937_64 rng(5);
    auto p = ClassifierParams::initialize(5, 6, 5, 3);
    const Dataset d = oracle::random_dataset(rng, 8, 6, 3);
    const double base = loss(p, d);
    for (auto& b : p.b2) b += 1000.0;
    EXPECT_NEAR(loss(p, d), base, 1e-9);
    EXPECT_NEAR(base, oracle::loss_oracle(ClassifierParams::initialize(5, 6, 5, 3), d), 1e-12);
}

TEST(Gradient, MatchesFiniteDifferencesOnSmallConfigs) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 100; ++t) {
        const std::size_t in = 1 + rng() % 12, hid = 1 + rng() % 8, out = 2 + rng() % 3, n = 1 + rng() % 6;
        const auto p = ClassifierParams::initialize(rng(), in, hid, out);
        const Dataset d = oracle::random_dataset(rng, n, in, out);
        const auto lg = loss_and_grad(p, d);
        EXPECT_NEAR(lg.loss, oracle::loss_oracle(p, d), 1e-12);
        EXPECT_LT(oracle::worst_gradient_error(p, d, lg.grad, oracle::all_coords(p)), 1e-3) << "config " << t;
    }
}

TEST(Gradient, SampledFullSizeCheck) {
    std::mt19937_64 rng(7);
    const auto p = ClassifierParams::initialize(7);
    const Dataset d = oracle::random_dataset(rng, 6, kEmbeddingDim, 3);
    const auto lg = loss_and_grad(p, d);
    std::vector<std::pair<int, std::size_t>> coords;
    for (int k = 0; k < 60; ++k) coords.emplace_back(0, rng() % p.w1.size());
    for (std::size_t i = 0; i < p.b1.size(); i += 8) coords.emplace_back(1, i);
    for (std::size_t i = 0; i < p.w2.size(); i += 7) coords.emplace_back(2, i);
    for (std::size_t i = 0; i < 3; ++i) coords.emplace_back(3, i);
    EXPECT_LT(oracle::worst_gradient_error(p, d, lg.grad, coords), 1e-3);
}

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
    auto p = ClassifierParams::initialize(8, 5, 4, 3);
    const auto before = p;
    auto state = AdamState::for_params(p);
    adam_step(p, ClassifierParams::zeros(5, 4, 3), state);
    EXPECT_EQ(p, before);
    EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    // With bias correction the first step is lr * g / (|g| + eps).
    auto p = ClassifierParams::zeros(2, 2, 3);
    auto g = ClassifierParams::zeros(2, 2, 3);
    g.w1 = {0.5, -2.0, 1e-3, 0};
    auto state = AdamState::for_params(p, 0.1);
    adam_step(p, g, state);
    for (std::size_t i = 0; i < 4; ++i) {
        const double gi = g.w1[i];
        EXPECT_NEAR(p.w1[i], -0.1 * gi / (std::fabs(gi) + 1e-8), 1e-9);
    }
}

TEST(Adam, TwoStepsMatchScalarOracle) {
    auto p = ClassifierParams::initialize(9, 3, 2, 3);
    std::mt19937_64 rng(9);
    std::vector<ClassifierParams> grads;
    for (int k = 0; k < 2; ++k) {
        auto g = ClassifierParams::initialize(rng(), 3, 2, 3);
        grads.push_back(g);
    }
    auto want = p;
    auto state = AdamState::for_params(p, 0.05);
    for (const auto& g : grads) adam_step(p, g, state);
    for (int w = 0; w < 4; ++w) {
        auto& values = *oracle::field(want, w);
        for (std::size_t i = 0; i < values.size(); ++i) {
            double m = 0, v = 0, x = values[i];
            for (int t = 1; t <= 2; ++t) {
                const double gi = (*oracle::field(grads[static_cast<std::size_t>(t - 1)], w))[i];
                m = 0.9 * m + (1.0 - 0.9) * gi;
                v = 0.999 * v + (1.0 - 0.999) * gi * gi;
                const double mh = m / (1.0 - std::pow(0.9, double(t))), vh = v / (1.0 - std::pow(0.999, double(t)));
                x -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
            }
            values[i] = x;
        }
    }
    EXPECT_EQ(p, want);
}

TEST(Adam, ShapeMismatch) {
    auto p = ClassifierParams::zeros(2, 2, 3);
    auto state = AdamState::for_params(p);
    EXPECT_THROW(adam_step(p, ClassifierParams::zeros(3, 2, 3), state), ShapeError);
}

TEST(Train, ZeroEpochsKeepsInitialization) {
    const auto s = make_blob_dataset(1, 5, 1, 16);
    const auto r = train(s, s, {0, 0.1, 4, 8});
    EXPECT_EQ(r.params, ClassifierParams::initialize(4, 16, 8, 3));
    EXPECT_TRUE(r.epoch_loss.empty());
}

TEST(Train, SameSeedIsBitIdentical) {
    const auto s = make_blob_dataset(2, 10, 1, 32);
    const auto a = train(s, s, {10, 0.1, 3, 16});
    const auto b = train(s, s, {10, 0.1, 3, 16});
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(Train, FixtureReachesFullTestAccuracy) {
    const auto splits = make_fixture_splits();
    EXPECT_EQ(splits.train.size(), 450u);
    EXPECT_EQ(splits.test.size(), 150u);
    const auto r = train(splits.train, splits.test, {30, 0.1, 0, kHiddenDim});
    EXPECT_EQ(r.test_accuracy, 1.0);
    EXPECT_EQ(r.epoch_loss.size(), 30u);
    EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(Train, LossNonIncreasingAcrossSeeds) {
    const auto splits = make_fixture_splits();
    int monotone = 0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        const auto r = train(splits.train, splits.test, {30, 0.1, static_cast<std::uint64_t>(seed), kHiddenDim});
        bool ok = true;
        for (std::size_t e = 1; e < r.epoch_loss.size(); ++e) ok = ok && r.epoch_loss[e] <= r.epoch_loss[e - 1];
        monotone += ok;
    }
    EXPECT_GE(monotone, 19);
}

TEST(Train, MissingSplit) {
    const auto s = make_blob_dataset(1, 5, 1, 8);
    EXPECT_THROW(train(Dataset{}, s, {}), Error);
    EXPECT_THROW(train(s, Dataset{}, {}), Error);
}

TEST(ClassifierIo, SaveLoadRoundTrip) {
    oracle::TempDir dir("clf");
    const auto p = ClassifierParams::initialize(11);
    save_classifier(p, dir.path / "m");
    const auto back = load_classifier(dir.path / "m");
    EXPECT_EQ(back, p.cast<float>());
    EXPECT_THROW(load_classifier(dir.path / "missing"), Error);
}

TEST(DatasetIo, RoundTripAndErrors) {
    oracle::TempDir dir("ds");
    const auto d = make_blob_dataset(3, 4, 1, 10);
    write_dataset(d, dir.path / "train");
    const auto back = read_dataset(dir.path / "train");
    EXPECT_EQ(back.labels, d.labels);
    for (std::size_t i = 0; i < d.features.size(); ++i)
        EXPECT_EQ(back.features[i], static_cast<double>(static_cast<float>(d.features[i])));
    std::filesystem::remove(dir.path / "train.labels");
    EXPECT_THROW(read_dataset(dir.path / "train"), Error);
}

TEST(Blobs, DirectionsAreOrthonormal) {
    const auto dirs = blob_directions(7);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) {
            double dot = 0;
            for (std::size_t i = 0; i < kEmbeddingDim; ++i) dot += dirs[a][i] * dirs[b][i];
            EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-12);
        }
}

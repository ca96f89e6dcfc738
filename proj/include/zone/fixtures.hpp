#pragma once

// Synthetic end-to-end cases: a textured scene, a canvas edited inside a known
// region with small over-edit noise elsewhere, mock attention stacks, segment
// candidates, the ground-truth mask and an instruction embedding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zone/classifier.hpp"
#include "zone/denoise.hpp"
#include "zone/grid.hpp"
#include "zone/pipeline.hpp"
#include "zone/random.hpp"
#include "zone/refine.hpp"
#include "zone/smoother.hpp"

namespace zone {

enum class RegionShape { Square, Disk };

struct FixtureSpec {
    std::size_t size = 512;
    std::uint64_t seed = 1;
    RegionShape shape = RegionShape::Square;
    std::size_t centre_row = 256;
    std::size_t centre_col = 256;
    std::size_t extent = 64;  // square side or disk diameter
    EditAction action = EditAction::Change;
    std::string instruction = "make it golden";
    int luma_shift = 90;  // per-channel shift inside the region
    int over_edit = 2;    // max per-channel noise outside the region
    int steps = 20;
};

struct FixtureCase {
    Image original;
    Image canvas;
    BinaryMask ground_truth;
    AttentionCollection attention;
    Grid2D canvas_latent;
    SegmentSet segments;
    std::vector<float> embedding;
    EditAction action = EditAction::Change;
    std::string instruction;
};

inline BinaryMask region_mask(std::size_t size, RegionShape shape, std::size_t cr, std::size_t cc, std::size_t extent) {
    if (shape == RegionShape::Square) {
        const double half = static_cast<double>(extent) / 2.0;
        const double r0 = static_cast<double>(cr) - half, c0 = static_cast<double>(cc) - half;
        return BinaryMask::generate(size, size, [&](std::size_t r, std::size_t c) {
            return r >= r0 && r < r0 + static_cast<double>(extent) && c >= c0 && c < c0 + static_cast<double>(extent);
        });
    }
    const double radius = static_cast<double>(extent) / 2.0;
    return BinaryMask::generate(size, size, [&](std::size_t r, std::size_t c) {
        const double dr = static_cast<double>(r) + 0.5 - static_cast<double>(cr);
        const double dc = static_cast<double>(c) + 0.5 - static_cast<double>(cc);
        return dr * dr + dc * dc <= radius * radius;
    });
}

/// Gradient background with a few flat shapes and mild texture. Channel
/// values stay within [30, 225].
inline Image synthesize_scene(std::size_t size, std::uint64_t seed) {
    CounterRng rng(seed, 0x5CE7E);
    struct Blob {
        double r0, c0, r1, c1;
        std::uint8_t rgb[3];
        bool round;
    };
    std::vector<Blob> blobs;
    for (int k = 0; k < 5; ++k) {
        Blob b{};
        const double s = static_cast<double>(size);
        b.r0 = rng.uniform(0.0, 0.7 * s);
        b.c0 = rng.uniform(0.0, 0.7 * s);
        b.r1 = b.r0 + rng.uniform(0.1 * s, 0.3 * s);
        b.c1 = b.c0 + rng.uniform(0.1 * s, 0.3 * s);
        for (auto& ch : b.rgb) ch = static_cast<std::uint8_t>(rng.uniform(50.0, 200.0));
        b.round = rng.uniform() < 0.5;
        blobs.push_back(b);
    }
    std::vector<std::uint8_t> px(size * size * 3);
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) {
            const double t = static_cast<double>(r) / static_cast<double>(size);
            double rgb[3] = {70 + 90 * t, 110 + 40 * t, 170 - 80 * t};
            for (const auto& b : blobs) {
                bool inside = r >= b.r0 && r < b.r1 && c >= b.c0 && c < b.c1;
                if (inside && b.round) {
                    const double cr = (b.r0 + b.r1) / 2, cc = (b.c0 + b.c1) / 2;
                    const double ar = (b.r1 - b.r0) / 2, ac = (b.c1 - b.c0) / 2;
                    const double dr = (static_cast<double>(r) - cr) / ar, dc = (static_cast<double>(c) - cc) / ac;
                    inside = dr * dr + dc * dc <= 1.0;
                }
                if (inside)
                    for (int ch = 0; ch < 3; ++ch) rgb[ch] = b.rgb[ch];
            }
            for (int ch = 0; ch < 3; ++ch) {
                const double tex = (counter_uniform(seed, 0x7E47, (r * size + c) * 3 + ch) - 0.5) * 20.0;
                px[(r * size + c) * 3 + ch] = static_cast<std::uint8_t>(std::clamp(rgb[ch] + tex, 30.0, 225.0));
            }
        }
    return {size, size, 3, std::move(px)};
}

/// Canvas: every channel inside the region shifted by +/- luma_shift (sign
/// from the region's mean luma); outside, uniform integer noise in
/// [-over_edit, over_edit].
inline Image synthesize_canvas(const Image& original, const BinaryMask& region, int luma_shift, int over_edit,
                               std::uint64_t seed) {
    const Grid2D y = luma(original);
    double sum = 0.0;
    for (std::size_t i = 0; i < region.size(); ++i)
        if (region.bits()[i]) sum += y.values()[i];
    const double mean = region.count() ? sum / static_cast<double>(region.count()) : 0.0;
    const int shift = mean < 128.0 ? luma_shift : -luma_shift;
    const std::size_t ch = original.channels();
    std::vector<std::uint8_t> out(original.samples().begin(), original.samples().end());
    for (std::size_t i = 0; i < original.pixel_count(); ++i)
        for (std::size_t k = 0; k < 3; ++k) {
            int v = out[i * ch + k];
            if (region.bits()[i]) {
                v += shift;
            } else if (over_edit > 0) {
                const auto span = static_cast<std::uint64_t>(2 * over_edit + 1);
                v += static_cast<int>(counter_hash(seed, 0x0E, i * 3 + k) % span) - over_edit;
            }
            out[i * ch + k] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
        }
    return {original.height(), original.width(), ch, std::move(out)};
}

/// Candidates a class-agnostic segmenter might return, pooled over levels:
/// background, scene rectangles, the object with a margin, the exact object
/// and its top half.
inline SegmentSet synthesize_segments(const BinaryMask& region, std::uint64_t seed) {
    const std::size_t h = region.height(), w = region.width();
    SegmentSet set;
    const BinaryMask grown = dilate(region, static_cast<int>(std::max<std::size_t>(4, std::min(h, w) / 48)));
    set.segments.push_back(grown.complement());
    set.levels.emplace_back(0);
    CounterRng rng(seed, 0x5E6);
    for (int k = 0; k < 4; ++k) {
        const auto r0 = static_cast<std::size_t>(rng.uniform(0.0, 0.75 * static_cast<double>(h)));
        const auto c0 = static_cast<std::size_t>(rng.uniform(0.0, 0.75 * static_cast<double>(w)));
        const auto r1 = r0 + std::max<std::size_t>(1, static_cast<std::size_t>(rng.uniform(0.05, 0.25) * h));
        const auto c1 = c0 + std::max<std::size_t>(1, static_cast<std::size_t>(rng.uniform(0.05, 0.25) * w));
        set.segments.push_back(BinaryMask::generate(
            h, w, [&](std::size_t r, std::size_t c) { return r >= r0 && r < r1 && c >= c0 && c < c1; }));
        set.levels.emplace_back(1);
    }
    set.segments.push_back(grown);
    set.levels.emplace_back(0);
    set.segments.push_back(region);
    set.levels.emplace_back(1);

    std::size_t top = h, bottom = 0;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
            if (region(r, c)) {
                top = std::min(top, r);
                bottom = std::max(bottom, r);
            }
    const std::size_t mid = (top + bottom) / 2;
    set.segments.push_back(
        BinaryMask::generate(h, w, [&](std::size_t r, std::size_t c) { return region(r, c) && r <= mid; }));
    set.levels.emplace_back(2);
    return set;
}

/// Builds a full case. With `base`, the scene is `base` instead of a
/// synthesized one (used for multi-turn sequences).
inline FixtureCase generate_fixture(const FixtureSpec& spec, const Image* base = nullptr) {
    if (spec.size < 16) throw Error("fixture size must be at least 16");
    if (base && (base->height() != spec.size || base->width() != spec.size))
        throw ShapeError("fixture base image does not match the requested size");
    FixtureCase fc;
    fc.original = base ? *base : synthesize_scene(spec.size, spec.seed);
    fc.ground_truth = region_mask(spec.size, spec.shape, spec.centre_row, spec.centre_col, spec.extent);
    if (fc.ground_truth.none()) throw Error("fixture region is empty");
    fc.canvas = synthesize_canvas(fc.original, fc.ground_truth, spec.luma_shift, spec.over_edit, spec.seed);

    const MockDenoiser mock = MockDenoiser::with_defaults(spec.seed, fc.ground_truth, spec.steps);
    FusionConfig fusion;
    fusion.steps = spec.steps;
    auto denoised = run_fused_denoise(mock, spec.action, GuidanceScales{}, fusion);
    fc.attention = std::move(denoised.attention);
    fc.canvas_latent = std::move(denoised.canvas_latent);

    fc.segments = synthesize_segments(fc.ground_truth, spec.seed);
    CounterRng rng(spec.seed, 0xE3B);
    const auto x = blob_sample(blob_directions(kFixtureDatasetSeed), static_cast<int>(spec.action), rng);
    fc.embedding.assign(x.begin(), x.end());
    fc.action = spec.action;
    fc.instruction = spec.instruction;
    return fc;
}

inline RunInputs to_run_inputs(const FixtureCase& fc, std::optional<MlpParams<float>> classifier = std::nullopt) {
    RunInputs in{fc.canvas, fc.attention, fc.segments, std::move(classifier), fc.embedding, fc.action};
    if (!in.classifier) in.embedding.reset();
    return in;
}

/// Writes original.png, canvas.png, ground_truth.png, canvas_latent.ztf,
/// instruction.ztf, attention/, segments/, optionally classifier/, and the
/// run manifest.json tying them together.
inline void write_fixture(const FixtureCase& fc, const std::filesystem::path& dir,
                          const ClassifierParams* classifier = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_image(fc.original, dir / "original.png");
    write_image(fc.canvas, dir / "canvas.png");
    write_mask(fc.ground_truth, dir / "ground_truth.png");
    write_tensor(fc.canvas_latent, dir / "canvas_latent.ztf");
    write_tensor(Grid2D(1, fc.embedding.size(), fc.embedding), dir / "instruction.ztf");
    write_attention_manifest(fc.attention, dir / "attention");
    write_segment_set(fc.segments, dir / "segments");
    nlohmann::json doc{{"canvas", "canvas.png"},
                       {"attention", "attention/manifest.json"},
                       {"segments", "segments/manifest.json"},
                       {"instruction", fc.instruction},
                       {"action", std::string(to_string(fc.action))}};
    if (classifier) {
        save_classifier(*classifier, dir / "classifier");
        doc["classifier"] = "classifier";
        doc["instruction_embedding"] = "instruction.ztf";
    }
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    os << doc.dump(2) << '\n';
    if (!os) throw Error("cannot write fixture manifest in " + dir.string());
}

}  // namespace zone

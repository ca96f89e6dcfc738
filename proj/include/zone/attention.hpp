#pragma once

// Cross-attention maps and edit localization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "zone/error.hpp"
#include "zone/grid.hpp"

namespace zone {

/// Learned projections W_Q (d x C), W_K (d x E), W_V (dv x E).
struct AttentionInputs {
    Grid2D query_proj;
    Grid2D key_proj;
    Grid2D value_proj;
    std::size_t key_dim = 0;
};

struct CrossAttentionResult {
    Grid3D maps;     // L token maps over H' x W'
    Grid2D updated;  // P x dv, the attended features M * V
};

/// Rows of `rows` (N x K) times the transpose of `weights` (M x K): N x M.
inline Grid2D project_rows(const Grid2D& rows, const Grid2D& weights) {
    if (rows.width() != weights.width()) throw ShapeError("project_rows: inner dimension mismatch");
    const std::size_t n = rows.height(), m = weights.height(), k = rows.width();
    std::vector<float> out(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += static_cast<double>(rows(i, t)) * weights(j, t);
            out[i * m + j] = static_cast<float>(acc);
        }
    return {n, m, std::move(out)};
}

/// softmax(Q K^T / sqrt(d)) over the L tokens for each of the P = H'W'
/// spatial queries, reshaped into L maps; `updated` is that matrix times V.
inline CrossAttentionResult cross_attention(const Grid2D& query, const Grid2D& key, const Grid2D& value,
                                            std::size_t key_dim, std::size_t map_height,
                                            std::size_t map_width) {
    if (key_dim == 0) throw ShapeError("cross_attention: key_dim must be positive");
    if (query.width() != key_dim || key.width() != key_dim)
        throw ShapeError("cross_attention: query/key width must equal key_dim");
    if (value.height() != key.height()) throw ShapeError("cross_attention: key/value token counts differ");
    const std::size_t p = query.height();
    if (map_height * map_width != p) throw ShapeError("cross_attention: query rows != map_height*map_width");

    const std::size_t tokens = key.height();
    const std::size_t dv = value.width();
    const double scale = 1.0 / std::sqrt(static_cast<double>(key_dim));

    std::vector<float> maps(tokens * p);
    std::vector<float> updated(p * dv);
    std::vector<double> logits(tokens);
    for (std::size_t i = 0; i < p; ++i) {
        double peak = -INFINITY;
        for (std::size_t l = 0; l < tokens; ++l) {
            double dot = 0.0;
            for (std::size_t t = 0; t < key_dim; ++t) dot += static_cast<double>(query(i, t)) * key(l, t);
            logits[l] = dot * scale;
            peak = std::max(peak, logits[l]);
        }
        double total = 0.0;
        for (auto& z : logits) total += (z = std::exp(z - peak));
        for (std::size_t l = 0; l < tokens; ++l) {
            const double w = logits[l] / total;
            maps[l * p + i] = static_cast<float>(w);
            for (std::size_t c = 0; c < dv; ++c) updated[i * dv + c] += static_cast<float>(w * value(l, c));
        }
    }
    return {Grid3D(tokens, map_height, map_width, std::move(maps)), Grid2D(p, dv, std::move(updated))};
}

/// Projects spatial features (P x C) and text embeddings (L x E) then attends.
inline CrossAttentionResult cross_attention(const Grid2D& features, const Grid2D& text,
                                            const AttentionInputs& in, std::size_t map_height,
                                            std::size_t map_width) {
    return cross_attention(project_rows(features, in.query_proj), project_rows(text, in.key_proj),
                           project_rows(text, in.value_proj), in.key_dim, map_height, map_width);
}

struct AttentionEntry {
    int step = 0;
    std::string block;
    Grid3D maps;
};

/// Attention stacks gathered over denoising steps and attention blocks.
struct AttentionCollection {
    std::vector<AttentionEntry> entries;

    std::size_t token_count() const { return entries.empty() ? 0 : entries.front().maps.layers(); }

    std::size_t step_count() const {
        std::vector<int> steps;
        for (const auto& e : entries) steps.push_back(e.step);
        std::sort(steps.begin(), steps.end());
        return static_cast<std::size_t>(std::unique(steps.begin(), steps.end()) - steps.begin());
    }

    std::vector<std::string> block_ids() const {
        std::vector<std::string> ids;
        for (const auto& e : entries)
            if (std::find(ids.begin(), ids.end(), e.block) == ids.end()) ids.push_back(e.block);
        return ids;
    }

    void validate() const {
        if (entries.empty()) throw Error("attention collection is empty");
        const std::size_t l = token_count();
        if (l < 2) throw ShapeError("attention stacks need at least 2 token maps (start and end of text)");
        for (const auto& e : entries)
            if (e.maps.layers() != l) throw ShapeError("attention stacks disagree on token count");
    }
};

struct LocalizerConfig {
    int threshold = 128;
    std::size_t target_height = 0;
    std::size_t target_width = 0;
    bool invert = false;

    void validate() const {
        if (threshold < 0 || threshold > 255) throw Error("threshold must be within [0, 255]");
        if (target_height == 0 || target_width == 0) throw ShapeError("localizer target size must be positive");
    }
};

/// Equal-weight mean over every stack, each token map resized to the target.
/// Stacks of different native resolutions are summed per resolution and then
/// resized, which equals resize-then-average because resizing is linear.
inline Grid3D mean_maps(const AttentionCollection& collection, std::size_t target_h, std::size_t target_w) {
    collection.validate();
    const std::size_t tokens = collection.token_count();

    // Canonical summation order makes the result independent of entry order.
    std::vector<const AttentionEntry*> order;
    for (const auto& e : collection.entries) order.push_back(&e);
    std::sort(order.begin(), order.end(), [](const AttentionEntry* a, const AttentionEntry* b) {
        if (a->step != b->step) return a->step < b->step;
        if (a->block != b->block) return a->block < b->block;
        if (a->maps.height() != b->maps.height()) return a->maps.height() < b->maps.height();
        if (a->maps.width() != b->maps.width()) return a->maps.width() < b->maps.width();
        auto av = a->maps.values(), bv = b->maps.values();
        return std::lexicographical_compare(av.begin(), av.end(), bv.begin(), bv.end());
    });

    std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> sums;
    for (const auto* e : order) {
        auto& acc = sums[{e->maps.height(), e->maps.width()}];
        if (acc.empty()) acc.assign(e->maps.size(), 0.0);
        auto v = e->maps.values();
        for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
    }

    const double n = static_cast<double>(collection.entries.size());
    std::vector<double> total(tokens * target_h * target_w, 0.0);
    for (const auto& [dims, acc] : sums) {
        const auto [h, w] = dims;
        for (std::size_t l = 0; l < tokens; ++l) {
            std::vector<float> mean(h * w);
            for (std::size_t i = 0; i < h * w; ++i) mean[i] = static_cast<float>(acc[l * h * w + i] / n);
            const Grid2D resized = resize_bilinear(Grid2D(h, w, std::move(mean)), target_h, target_w);
            auto rv = resized.values();
            for (std::size_t i = 0; i < rv.size(); ++i) total[l * target_h * target_w + i] += rv[i];
        }
    }
    return {tokens, target_h, target_w, std::vector<float>(total.begin(), total.end())};
}

/// Min-max normalization of the whole stack onto [0, 255] with one shared
/// scale. A constant stack maps to all zeros.
inline Grid3D normalize_joint(const Grid3D& stack) {
    auto v = stack.values();
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double min = *lo, range = static_cast<double>(*hi) - *lo;
    std::vector<float> out(v.size(), 0.0f);
    if (range > 0.0)
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>((v[i] - min) / range * 255.0);
    return {stack.layers(), stack.height(), stack.width(), std::move(out)};
}

/// Averaged attention maps M_A: mean, resize, then joint normalization.
inline Grid3D average_maps(const AttentionCollection& collection, const LocalizerConfig& config) {
    config.validate();
    return normalize_joint(mean_maps(collection, config.target_height, config.target_width));
}

/// Rough location mask: 1 where (first token map - last token map) < T.
/// `invert` flips the polarity.
inline BinaryMask binarize_location(const Grid3D& averaged, const LocalizerConfig& config) {
    if (averaged.layers() < 2) throw ShapeError("binarize_location: need at least 2 token maps");
    if (config.threshold < 0 || config.threshold > 255) throw Error("threshold must be within [0, 255]");
    auto first = averaged.layer_values(0);
    auto last = averaged.layer_values(averaged.layers() - 1);
    std::vector<std::uint8_t> bits(first.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        const bool set = static_cast<double>(first[i]) - static_cast<double>(last[i]) < config.threshold;
        bits[i] = set != config.invert ? 1 : 0;
    }
    return {averaged.height(), averaged.width(), std::move(bits)};
}

}  // namespace zone

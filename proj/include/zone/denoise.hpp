#pragma once

// Guidance and latent-fusion arithmetic of the fused denoiser, plus a
// deterministic mock denoiser that synthesizes attention stacks and latents.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "zone/attention.hpp"
#include "zone/error.hpp"
#include "zone/grid.hpp"
#include "zone/random.hpp"

namespace zone {

enum class EditAction : int { Change = 0, Add = 1, Remove = 2 };

inline constexpr std::string_view to_string(EditAction a) noexcept {
    switch (a) {
        case EditAction::Change: return "change";
        case EditAction::Add: return "add";
        case EditAction::Remove: return "remove";
    }
    return "change";
}

inline std::optional<EditAction> parse_action(std::string_view s) noexcept {
    if (s == "change" || s == "0") return EditAction::Change;
    if (s == "add" || s == "1") return EditAction::Add;
    if (s == "remove" || s == "2") return EditAction::Remove;
    return std::nullopt;
}

inline EditAction action_from_label(int label) {
    if (label < 0 || label > 2) throw Error("action label must be 0, 1 or 2");
    return static_cast<EditAction>(label);
}

struct GuidanceScales {
    double image_scale = 1.5;
    double text_scale = 7.5;

    void validate() const {
        if (!std::isfinite(image_scale) || !std::isfinite(text_scale) || image_scale < 0 || text_scale < 0)
            throw Error("guidance scales must be finite and non-negative");
    }
};

struct FusionConfig {
    double beta_remove = 0.2;
    double beta_other = 0.01;
    int steps = 20;

    double beta_for(EditAction a) const noexcept { return a == EditAction::Remove ? beta_remove : beta_other; }

    void validate() const {
        if (!(beta_remove >= 0) || !(beta_other >= 0)) throw Error("fusion betas must be non-negative");
        if (steps < 1) throw Error("fusion steps must be positive");
    }
};

/// Two-condition classifier-free guidance:
///   e_uu + s_I (e_iu - e_uu) + s_T (e_it - e_iu)
inline Grid2D cfg_combine(const Grid2D& eps_uncond, const Grid2D& eps_img, const Grid2D& eps_full,
                          const GuidanceScales& scales) {
    if (!eps_uncond.same_shape(eps_img) || !eps_uncond.same_shape(eps_full))
        throw ShapeError("cfg_combine: shape mismatch");
    scales.validate();
    auto u = eps_uncond.values(), i = eps_img.values(), f = eps_full.values();
    std::vector<float> out(u.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double uu = u[k], iu = i[k], it = f[k];
        out[k] = static_cast<float>(uu + scales.image_scale * (iu - uu) + scales.text_scale * (it - iu));
    }
    return {eps_uncond.height(), eps_uncond.width(), std::move(out)};
}

/// (z_primary + beta * z_secondary) / (1 + beta), beta chosen by action.
inline Grid2D fuse_latents(const Grid2D& z_primary, const Grid2D& z_secondary, EditAction action,
                           const FusionConfig& config) {
    if (!z_primary.same_shape(z_secondary)) throw ShapeError("fuse_latents: shape mismatch");
    config.validate();
    const double beta = config.beta_for(action);
    auto a = z_primary.values(), b = z_secondary.values();
    std::vector<float> out(a.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        if (a[k] == b[k]) {
            out[k] = a[k];
            continue;
        }
        double v = (a[k] + beta * b[k]) / (1.0 + beta);
        // Keep the result inside the closed segment despite rounding.
        v = std::clamp(v, static_cast<double>(std::min(a[k], b[k])), static_cast<double>(std::max(a[k], b[k])));
        out[k] = static_cast<float>(v);
    }
    return {z_primary.height(), z_primary.width(), std::move(out)};
}

/// Synthetic stand-in for the two locked denoisers. Token maps decrease in
/// brightness along the tokens; inside `implanted_region` the first and last
/// token maps are darkened by `darken`, so the localizer recovers the region.
struct MockDenoiser {
    std::uint64_t seed = 0;
    std::vector<double> alphas;  // signal level per step, increasing toward 1
    BinaryMask implanted_region;  // full image resolution
    std::size_t token_count = 8;
    std::size_t attention_height = 0;
    std::size_t attention_width = 0;
    std::vector<std::string> blocks;
    double darken = 0.2;
    double jitter = 0.1;

    /// Defaults: linear schedule alpha_k = (k+1)/steps, maps at 1/8 of the
    /// image size, the three first up-sampling and three down-sampling blocks.
    static MockDenoiser with_defaults(std::uint64_t seed, BinaryMask region, int steps = 20) {
        MockDenoiser m;
        m.seed = seed;
        for (int k = 0; k < steps; ++k) m.alphas.push_back(static_cast<double>(k + 1) / steps);
        m.attention_height = std::max<std::size_t>(1, region.height() / 8);
        m.attention_width = std::max<std::size_t>(1, region.width() / 8);
        m.implanted_region = std::move(region);
        m.blocks = {"down_blocks.1", "down_blocks.2", "down_blocks.3",
                    "up_blocks.0",   "up_blocks.1",   "up_blocks.2"};
        return m;
    }

    void validate(int steps) const {
        if (alphas.size() != static_cast<std::size_t>(steps))
            throw Error("mock denoiser: schedule length must equal the step count");
        for (double a : alphas)
            if (!(a > 0.0 && a <= 1.0)) throw Error("mock denoiser: alpha must lie in (0, 1]");
        if (token_count < 3)
            throw Error("mock denoiser: need at least 3 tokens (start, end and one reference token)");
        if (implanted_region.size() == 0) throw Error("mock denoiser: missing implanted region");
        if (attention_height == 0 || attention_width == 0) throw Error("mock denoiser: zero attention size");
        if (blocks.empty()) throw Error("mock denoiser: no attention blocks");
        if (!(darken > 0.0 && darken < 1.0)) throw Error("mock denoiser: darken must lie in (0, 1)");
    }

    /// Fraction of region pixels inside each attention cell's footprint under
    /// the align-corners mapping used by resize_bilinear.
    Grid2D coverage() const {
        const std::size_t H = implanted_region.height(), W = implanted_region.width();
        std::vector<std::size_t> integral((H + 1) * (W + 1), 0);
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c < W; ++c)
                integral[(r + 1) * (W + 1) + c + 1] = integral[r * (W + 1) + c + 1] +
                                                      integral[(r + 1) * (W + 1) + c] -
                                                      integral[r * (W + 1) + c] + implanted_region(r, c);
        auto span = [](std::size_t i, std::size_t cells, std::size_t pixels) {
            if (cells == 1) return std::pair<std::size_t, std::size_t>{0, pixels};
            const double step = static_cast<double>(pixels - 1) / static_cast<double>(cells - 1);
            const double centre = static_cast<double>(i) * step;
            const double lo = std::max(0.0, std::ceil(centre - step / 2));
            const double hi = std::min(static_cast<double>(pixels - 1), std::floor(centre + step / 2));
            return std::pair<std::size_t, std::size_t>{static_cast<std::size_t>(lo), static_cast<std::size_t>(hi) + 1};
        };
        return Grid2D::generate(attention_height, attention_width, [&](std::size_t i, std::size_t j) {
            const auto [r0, r1] = span(i, attention_height, H);
            const auto [c0, c1] = span(j, attention_width, W);
            const double area = static_cast<double>((r1 - r0) * (c1 - c0));
            const double inside = static_cast<double>(integral[r1 * (W + 1) + c1] - integral[r0 * (W + 1) + c1] -
                                                      integral[r1 * (W + 1) + c0] + integral[r0 * (W + 1) + c0]);
            return area > 0 ? inside / area : 0.0;
        });
    }
};

struct FusedDenoiseResult {
    Grid2D canvas_latent;
    AttentionCollection attention;
};

namespace mock_detail {

enum Stream : std::uint64_t { kAttention = 1, kEpsPrimary = 2, kEpsSecondary = 3 };

inline std::uint64_t stream(std::uint64_t kind, std::size_t step, std::size_t block, std::size_t sub = 0) {
    return (kind << 56) | (static_cast<std::uint64_t>(step) << 32) | (static_cast<std::uint64_t>(block) << 16) | sub;
}

// Three pseudo noise predictions with a shared base, combined by guidance.
inline Grid2D guided_noise(const MockDenoiser& mock, std::uint64_t kind, std::size_t step,
                           const GuidanceScales& scales) {
    const std::size_t h = mock.attention_height, w = mock.attention_width;
    auto field = [&](std::size_t sub, double amplitude, const Grid2D* base) {
        return Grid2D::generate(h, w, [&](std::size_t r, std::size_t c) {
            const std::size_t idx = r * w + c;
            const double u = counter_uniform(mock.seed, stream(kind, step, 0, sub), idx) * 2.0 - 1.0;
            return (base ? (*base)(r, c) : 0.0) + amplitude * u;
        });
    };
    const Grid2D uncond = field(0, 1.0, nullptr);
    const Grid2D image = field(1, 0.1, &uncond);
    const Grid2D full = field(2, 0.1, &image);
    return cfg_combine(uncond, image, full, scales);
}

}  // namespace mock_detail

/// Runs `config.steps` mock denoising iterations. Each step produces a primary
/// and a secondary latent that are fused by the action-dependent beta, and one
/// attention stack per block. Pure function of (mock, action, scales, config).
inline FusedDenoiseResult run_fused_denoise(const MockDenoiser& mock, EditAction action,
                                            const GuidanceScales& scales, const FusionConfig& config) {
    config.validate();
    scales.validate();
    mock.validate(config.steps);
    const std::size_t h = mock.attention_height, w = mock.attention_width, cells = h * w;
    const std::size_t tokens = mock.token_count;
    const Grid2D cover = mock.coverage();

    // Primary model brightens the edit region, the secondary darkens it.
    const Grid2D target_primary =
        Grid2D::generate(h, w, [&](std::size_t r, std::size_t c) { return 0.5 + 0.5 * cover(r, c); });
    const Grid2D target_secondary =
        Grid2D::generate(h, w, [&](std::size_t r, std::size_t c) { return 0.5 - 0.5 * cover(r, c); });

    std::vector<double> level(tokens);
    for (std::size_t l = 0; l < tokens; ++l)
        level[l] = 1.0 - 0.9 * static_cast<double>(l) / static_cast<double>(tokens - 1);

    FusedDenoiseResult result;
    Grid2D latent;
    for (int k = 0; k < config.steps; ++k) {
        const auto step = static_cast<std::size_t>(k);
        const double alpha = mock.alphas[step];
        const double signal = std::sqrt(alpha), noise = std::sqrt(1.0 - alpha);

        auto denoised = [&](const Grid2D& target, std::uint64_t kind) {
            const Grid2D eps = mock_detail::guided_noise(mock, kind, step, scales);
            return Grid2D::generate(h, w, [&](std::size_t r, std::size_t c) {
                return signal * target(r, c) + noise * eps(r, c);
            });
        };
        latent = fuse_latents(denoised(target_primary, mock_detail::kEpsPrimary),
                              denoised(target_secondary, mock_detail::kEpsSecondary), action, config);

        for (std::size_t b = 0; b < mock.blocks.size(); ++b) {
            const std::uint64_t s = mock_detail::stream(mock_detail::kAttention, step, b);
            std::vector<float> maps(tokens * cells);
            for (std::size_t i = 0; i < cells; ++i) {
                const double dark = 1.0 - (1.0 - mock.darken) * cover.values()[i];
                double total = 0.0;
                std::vector<double> weight(tokens);
                for (std::size_t l = 0; l < tokens; ++l) {
                    const double u = counter_uniform(mock.seed, s, l * cells + i) * 2.0 - 1.0;
                    weight[l] = level[l] * std::exp(mock.jitter * u);
                    if (l == 0 || l == tokens - 1) weight[l] *= dark;
                    total += weight[l];
                }
                for (std::size_t l = 0; l < tokens; ++l) maps[l * cells + i] = static_cast<float>(weight[l] / total);
            }
            result.attention.entries.push_back({k, mock.blocks[b], Grid3D(tokens, h, w, std::move(maps))});
        }
    }
    result.canvas_latent = std::move(latent);
    return result;
}

}  // namespace zone

#pragma once

// FFT edge smoother: dilate the refined mask, compare low-frequency content of
// the canvas and the original inside it, then binarize, close and fill.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <vector>

#include "zone/error.hpp"
#include "zone/fft.hpp"
#include "zone/grid.hpp"

namespace zone {

struct SmootherConfig {
    double cutoff = 200.0;     // ideal low-pass radius at 512 x 512
    int dilation_radius = 15;  // at 512 x 512
    double g_threshold = 10.0; // |difference| in 8-bit luma units
    int closing_radius = 5;

    void validate() const {
        if (!(cutoff > 0.0)) throw Error("cutoff must be positive");
        if (dilation_radius < 0) throw Error("dilation radius must be non-negative");
        if (!(g_threshold > 0.0)) throw Error("g threshold must be positive");
        if (closing_radius < 0) throw Error("closing radius must be non-negative");
    }

    // Both size-dependent parameters scale with min(H, W) / 512.
    double cutoff_for(std::size_t h, std::size_t w) const noexcept {
        return cutoff * static_cast<double>(std::min(h, w)) / 512.0;
    }
    int dilation_for(std::size_t h, std::size_t w) const noexcept {
        return static_cast<int>(std::lround(dilation_radius * static_cast<double>(std::min(h, w)) / 512.0));
    }
};

namespace morph_detail {

// Largest integer x with x*x <= n.
inline int isqrt(int n) {
    int x = static_cast<int>(std::sqrt(static_cast<double>(n)));
    while (x * x > n) --x;
    while ((x + 1) * (x + 1) <= n) ++x;
    return x;
}

}  // namespace morph_detail

/// Dilation by the Euclidean disk {(dx, dy) : dx^2 + dy^2 <= r^2}. Pixels
/// outside the raster count as unset.
inline BinaryMask dilate(const BinaryMask& mask, int radius) {
    if (radius < 0) throw Error("dilate: radius must be non-negative");
    if (radius == 0) return mask;
    const auto h = static_cast<long>(mask.height()), w = static_cast<long>(mask.width());
    auto bits = mask.bits();

    // Row prefix sums turn each horizontal span test into O(1).
    std::vector<int> prefix(static_cast<std::size_t>(h * (w + 1)), 0);
    for (long r = 0; r < h; ++r)
        for (long c = 0; c < w; ++c)
            prefix[r * (w + 1) + c + 1] = prefix[r * (w + 1) + c] + bits[r * w + c];

    std::vector<std::uint8_t> out(bits.size(), 0);
    for (int dy = -radius; dy <= radius; ++dy) {
        const long half = morph_detail::isqrt(radius * radius - dy * dy);
        for (long r = 0; r < h; ++r) {
            const long src = r + dy;
            if (src < 0 || src >= h) continue;
            const int* row = &prefix[src * (w + 1)];
            if (row[w] == 0) continue;
            for (long c = 0; c < w; ++c) {
                const long lo = std::max(0L, c - half), hi = std::min(w, c + half + 1);
                if (row[hi] - row[lo] > 0) out[r * w + c] = 1;
            }
        }
    }
    return {mask.height(), mask.width(), std::move(out)};
}

/// Erosion by the same disk. Pixels outside the raster count as set, which
/// keeps closing extensive at the border.
inline BinaryMask erode(const BinaryMask& mask, int radius) {
    if (radius < 0) throw Error("erode: radius must be non-negative");
    return dilate(mask.complement(), radius).complement();
}

/// Sets every unset pixel that is not 4-connected to the border through
/// unset pixels.
inline BinaryMask fill_holes(const BinaryMask& mask) {
    const std::size_t h = mask.height(), w = mask.width();
    auto bits = mask.bits();
    std::vector<std::uint8_t> outside(bits.size(), 0);
    std::deque<std::size_t> queue;
    auto seed = [&](std::size_t i) {
        if (!bits[i] && !outside[i]) {
            outside[i] = 1;
            queue.push_back(i);
        }
    };
    for (std::size_t c = 0; c < w; ++c) {
        seed(c);
        seed((h - 1) * w + c);
    }
    for (std::size_t r = 0; r < h; ++r) {
        seed(r * w);
        seed(r * w + w - 1);
    }
    while (!queue.empty()) {
        const std::size_t i = queue.front();
        queue.pop_front();
        const std::size_t r = i / w, c = i % w;
        if (r > 0) seed(i - w);
        if (r + 1 < h) seed(i + w);
        if (c > 0) seed(i - 1);
        if (c + 1 < w) seed(i + 1);
    }
    std::vector<std::uint8_t> out(bits.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = outside[i] ? 0 : 1;
    return {h, w, std::move(out)};
}

/// Morphological closing with a disk followed by hole filling.
inline BinaryMask close_and_fill(const BinaryMask& mask, int closing_radius) {
    return fill_holes(erode(dilate(mask, closing_radius), closing_radius));
}

/// Image with every pixel outside the mask zeroed (all channels).
inline Image apply_mask(const Image& img, const BinaryMask& mask) {
    if (!img.same_size(mask)) throw ShapeError("apply_mask: dimension mismatch");
    std::vector<std::uint8_t> out(img.samples().begin(), img.samples().end());
    const std::size_t ch = img.channels();
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
        if (!mask.bits()[i]) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i * ch), ch, std::uint8_t{0});
    return {img.height(), img.width(), ch, std::move(out)};
}

/// Real part of the inverse transform of the low-passed spectrum difference
/// between the two masked layers, in luma units.
inline Grid2D low_frequency_difference(const Image& layer_d, const Image& orig_d, double cutoff) {
    if (!layer_d.same_size(orig_d)) throw ShapeError("difference_mask: dimension mismatch");
    const Spectrum a = lowpass(fft2(luma(layer_d)), cutoff);
    const Spectrum b = lowpass(fft2(luma(orig_d)), cutoff);
    Spectrum d{a.height, a.width, std::vector<Complex>(a.bins.size())};
    for (std::size_t i = 0; i < d.bins.size(); ++i) d.bins[i] = a.bins[i] - b.bins[i];
    return ifft2(d);
}

/// Binarized difference mask: |low-frequency difference| > g_threshold.
inline BinaryMask difference_mask(const Image& layer_d, const Image& orig_d, const SmootherConfig& config) {
    config.validate();
    const Grid2D diff =
        low_frequency_difference(layer_d, orig_d, config.cutoff_for(layer_d.height(), layer_d.width()));
    std::vector<std::uint8_t> bits(diff.size());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = std::fabs(diff.values()[i]) > config.g_threshold;
    return {diff.height(), diff.width(), std::move(bits)};
}

/// Final edit mask from the original, the canvas and the refined mask.
inline BinaryMask smooth(const Image& original, const Image& canvas, const BinaryMask& refined,
                         const SmootherConfig& config) {
    config.validate();
    if (!original.same_size(canvas) || !original.same_size(refined))
        throw ShapeError("smooth: original, canvas and mask must share dimensions");
    const BinaryMask dilated = dilate(refined, config.dilation_for(original.height(), original.width()));
    const BinaryMask dm = difference_mask(apply_mask(canvas, dilated), apply_mask(original, dilated), config);
    return close_and_fill(dm, config.closing_radius);
}

}  // namespace zone

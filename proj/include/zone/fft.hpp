#pragma once

// 2-D discrete Fourier transform. Forward is unnormalized, inverse divides by
// H*W. Spectra are stored with the DC bin at (H/2, W/2) (integer division).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "zone/error.hpp"
#include "zone/grid.hpp"

namespace zone {

using Complex = std::complex<double>;

struct Spectrum {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<Complex> bins;  // row-major, DC centred

    Complex operator()(std::size_t r, std::size_t c) const noexcept { return bins[r * width + c]; }
    std::size_t centre_row() const noexcept { return height / 2; }
    std::size_t centre_col() const noexcept { return width / 2; }
};

namespace fft_detail {

inline bool is_pow2(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. sign = -1 forward, +1 inverse.
inline void radix2(std::vector<Complex>& a, int sign) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
        const std::size_t half = len / 2;
        std::vector<Complex> tw(half);
        for (std::size_t k = 0; k < half; ++k) tw[k] = std::polar(1.0, ang * static_cast<double>(k));
        for (std::size_t i = 0; i < n; i += len)
            for (std::size_t k = 0; k < half; ++k) {
                const Complex u = a[i + k];
                const Complex v = a[i + k + half] * tw[k];
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
    }
}

// O(n^2) transform for lengths that are not powers of two.
inline void direct(std::vector<Complex>& a, int sign) {
    const std::size_t n = a.size();
    std::vector<Complex> tw(n);
    for (std::size_t k = 0; k < n; ++k)
        tw[k] = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    std::vector<Complex> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        Complex acc{};
        for (std::size_t j = 0; j < n; ++j) acc += a[j] * tw[(j * k) % n];
        out[k] = acc;
    }
    a.swap(out);
}

inline void transform_1d(std::vector<Complex>& a, int sign) {
    if (is_pow2(a.size()))
        radix2(a, sign);
    else
        direct(a, sign);
}

// Separable transform over a row-major buffer.
inline void transform_2d(std::vector<Complex>& data, std::size_t h, std::size_t w, int sign) {
    std::vector<Complex> line(w);
    for (std::size_t r = 0; r < h; ++r) {
        std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(r * w), w, line.begin());
        transform_1d(line, sign);
        std::copy(line.begin(), line.end(), data.begin() + static_cast<std::ptrdiff_t>(r * w));
    }
    line.resize(h);
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r) line[r] = data[r * w + c];
        transform_1d(line, sign);
        for (std::size_t r = 0; r < h; ++r) data[r * w + c] = line[r];
    }
}

// shift = +1 moves DC from (0,0) to the centre, -1 moves it back.
inline std::vector<Complex> shift(const std::vector<Complex>& in, std::size_t h, std::size_t w, int dir) {
    std::vector<Complex> out(in.size());
    const std::size_t dr = dir > 0 ? h / 2 : h - h / 2;
    const std::size_t dc = dir > 0 ? w / 2 : w - w / 2;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) out[((r + dr) % h) * w + (c + dc) % w] = in[r * w + c];
    return out;
}

}  // namespace fft_detail

inline Spectrum fft2(const Grid2D& grid) {
    const std::size_t h = grid.height(), w = grid.width();
    if (h == 0 || w == 0) throw ShapeError("fft2: zero dimension");
    std::vector<Complex> data(grid.values().begin(), grid.values().end());
    fft_detail::transform_2d(data, h, w, -1);
    return {h, w, fft_detail::shift(data, h, w, +1)};
}

/// Full complex inverse transform (natural pixel order).
inline std::vector<Complex> ifft2_complex(const Spectrum& spec) {
    if (spec.height == 0 || spec.width == 0) throw ShapeError("ifft2: zero dimension");
    if (spec.bins.size() != spec.height * spec.width) throw ShapeError("ifft2: spectrum size mismatch");
    auto data = fft_detail::shift(spec.bins, spec.height, spec.width, -1);
    fft_detail::transform_2d(data, spec.height, spec.width, +1);
    const double norm = 1.0 / static_cast<double>(spec.height * spec.width);
    for (auto& z : data) z *= norm;
    return data;
}

/// Inverse transform keeping the real part.
inline Grid2D ifft2(const Spectrum& spec) {
    const auto data = ifft2_complex(spec);
    std::vector<float> out(data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(data[i].real());
    return {spec.height, spec.width, std::move(out)};
}

/// Ideal low-pass filter: bins within Euclidean distance `cutoff` of the
/// centred DC bin pass unchanged, all others are zeroed.
inline Spectrum lowpass(const Spectrum& spec, double cutoff) {
    if (!(cutoff > 0.0)) throw Error("lowpass: cutoff must be positive");
    Spectrum out = spec;
    const double r0 = static_cast<double>(spec.centre_row()), c0 = static_cast<double>(spec.centre_col());
    const double limit = cutoff * cutoff;
    for (std::size_t r = 0; r < spec.height; ++r)
        for (std::size_t c = 0; c < spec.width; ++c) {
            const double dr = static_cast<double>(r) - r0, dc = static_cast<double>(c) - c0;
            if (dr * dr + dc * dc > limit) out.bins[r * spec.width + c] = Complex{};
        }
    return out;
}

}  // namespace zone

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zone/error.hpp"

namespace zone {

namespace detail {

inline void require_positive_dims(std::size_t h, std::size_t w, const char* what) {
    if (h == 0 || w == 0)
        throw ShapeError(std::string(what) + ": dimensions must be positive");
}

inline void require_length(std::size_t got, std::size_t want, const char* what) {
    if (got != want)
        throw ShapeError(std::string(what) + ": data length " + std::to_string(got) +
                         " does not match shape (expected " + std::to_string(want) + ")");
}

inline void require_finite(std::span<const float> values, const char* what) {
    for (float v : values)
        if (!std::isfinite(v)) throw Error(std::string(what) + ": non-finite value");
}

}  // namespace detail

/// Dense H x W raster of 32-bit floats, row-major.
class Grid2D {
public:
    Grid2D() = default;
    Grid2D(std::size_t height, std::size_t width, std::vector<float> data)
        : height_(height), width_(width), data_(std::move(data)) {
        detail::require_positive_dims(height_, width_, "Grid2D");
        detail::require_length(data_.size(), height_ * width_, "Grid2D");
        detail::require_finite(data_, "Grid2D");
    }

    static Grid2D filled(std::size_t height, std::size_t width, float value) {
        return {height, width, std::vector<float>(height * width, value)};
    }

    template <class F>
    static Grid2D generate(std::size_t height, std::size_t width, F&& f) {
        std::vector<float> v(height * width);
        for (std::size_t r = 0; r < height; ++r)
            for (std::size_t c = 0; c < width; ++c) v[r * width + c] = static_cast<float>(f(r, c));
        return {height, width, std::move(v)};
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * width_ + c]; }
    std::span<const float> values() const noexcept { return data_; }

    bool same_shape(const Grid2D& o) const noexcept {
        return height_ == o.height_ && width_ == o.width_;
    }

    friend bool operator==(const Grid2D&, const Grid2D&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<float> data_;
};

/// L x H x W stack of 32-bit float maps, layer-major then row-major.
/// Token-map consumers additionally require L >= 2.
class Grid3D {
public:
    Grid3D() = default;
    Grid3D(std::size_t layers, std::size_t height, std::size_t width, std::vector<float> data)
        : layers_(layers), height_(height), width_(width), data_(std::move(data)) {
        if (layers_ == 0) throw ShapeError("Grid3D: layer count must be positive");
        detail::require_positive_dims(height_, width_, "Grid3D");
        detail::require_length(data_.size(), layers_ * height_ * width_, "Grid3D");
        detail::require_finite(data_, "Grid3D");
    }

    static Grid3D from_layers(const std::vector<Grid2D>& maps) {
        if (maps.empty()) throw ShapeError("Grid3D: no layers");
        std::vector<float> v;
        v.reserve(maps.size() * maps.front().size());
        for (const auto& m : maps) {
            if (!m.same_shape(maps.front())) throw ShapeError("Grid3D: layers differ in shape");
            v.insert(v.end(), m.values().begin(), m.values().end());
        }
        return {maps.size(), maps.front().height(), maps.front().width(), std::move(v)};
    }

    std::size_t layers() const noexcept { return layers_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    float operator()(std::size_t l, std::size_t r, std::size_t c) const noexcept {
        return data_[(l * height_ + r) * width_ + c];
    }
    std::span<const float> values() const noexcept { return data_; }
    std::span<const float> layer_values(std::size_t l) const noexcept {
        return std::span<const float>(data_).subspan(l * height_ * width_, height_ * width_);
    }
    Grid2D layer(std::size_t l) const {
        auto s = layer_values(l);
        return {height_, width_, std::vector<float>(s.begin(), s.end())};
    }

    friend bool operator==(const Grid3D&, const Grid3D&) = default;

private:
    std::size_t layers_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<float> data_;
};

/// H x W boolean raster stored one byte per pixel (0 or 1).
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits)
        : height_(height), width_(width), bits_(std::move(bits)) {
        detail::require_positive_dims(height_, width_, "BinaryMask");
        detail::require_length(bits_.size(), height_ * width_, "BinaryMask");
        for (auto& b : bits_) b = b ? 1 : 0;
    }

    static BinaryMask filled(std::size_t height, std::size_t width, bool value) {
        return {height, width, std::vector<std::uint8_t>(height * width, value ? 1 : 0)};
    }

    template <class F>
    static BinaryMask generate(std::size_t height, std::size_t width, F&& f) {
        std::vector<std::uint8_t> v(height * width);
        for (std::size_t r = 0; r < height; ++r)
            for (std::size_t c = 0; c < width; ++c) v[r * width + c] = f(r, c) ? 1 : 0;
        return {height, width, std::move(v)};
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return bits_.size(); }
    bool operator()(std::size_t r, std::size_t c) const noexcept { return bits_[r * width_ + c] != 0; }
    std::span<const std::uint8_t> bits() const noexcept { return bits_; }

    std::size_t count() const noexcept {
        return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
    }
    bool none() const noexcept { return count() == 0; }

    bool same_shape(const BinaryMask& o) const noexcept {
        return height_ == o.height_ && width_ == o.width_;
    }

    BinaryMask complement() const {
        std::vector<std::uint8_t> v(bits_.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = bits_[i] ? 0 : 1;
        return {height_, width_, std::move(v)};
    }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// H x W x C 8-bit raster, C = 3 (RGB) or 4 (RGBA with hard 0/255 alpha).
class Image {
public:
    Image() = default;
    Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<std::uint8_t> data)
        : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
        detail::require_positive_dims(height_, width_, "Image");
        if (channels_ != 3 && channels_ != 4) throw ShapeError("Image: channels must be 3 or 4");
        detail::require_length(data_.size(), height_ * width_ * channels_, "Image");
        if (channels_ == 4)
            for (std::size_t i = 3; i < data_.size(); i += 4)
                if (data_[i] != 0 && data_[i] != 255)
                    throw FormatError("Image: alpha must be 0 or 255");
    }

    static Image filled(std::size_t height, std::size_t width, std::size_t channels,
                        std::span<const std::uint8_t> pixel) {
        if (pixel.size() != channels) throw ShapeError("Image: fill pixel has wrong channel count");
        std::vector<std::uint8_t> v(height * width * channels);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = pixel[i % channels];
        return {height, width, channels, std::move(v)};
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept { return height_ * width_; }
    std::uint8_t operator()(std::size_t r, std::size_t c, std::size_t ch) const noexcept {
        return data_[(r * width_ + c) * channels_ + ch];
    }
    std::span<const std::uint8_t> samples() const noexcept { return data_; }
    std::span<const std::uint8_t> pixel(std::size_t index) const noexcept {
        return std::span<const std::uint8_t>(data_).subspan(index * channels_, channels_);
    }
    bool has_alpha() const noexcept { return channels_ == 4; }

    bool same_size(const Image& o) const noexcept {
        return height_ == o.height_ && width_ == o.width_;
    }
    bool same_size(const BinaryMask& m) const noexcept {
        return height_ == m.height() && width_ == m.width();
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<std::uint8_t> data_;
};

/// ITU-R BT.601 luma of every pixel, in 8-bit units.
inline Grid2D luma(const Image& img) {
    std::vector<float> v(img.pixel_count());
    for (std::size_t i = 0; i < v.size(); ++i) {
        auto p = img.pixel(i);
        v[i] = static_cast<float>(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]);
    }
    return {img.height(), img.width(), std::move(v)};
}

/// Bilinear resampling with align-corners coordinate mapping and edge clamping.
inline Grid2D resize_bilinear(const Grid2D& grid, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ShapeError("resize_bilinear: zero target dimension");
    const std::size_t in_h = grid.height();
    const std::size_t in_w = grid.width();
    if (in_h == out_h && in_w == out_w) return grid;

    auto axis = [](std::size_t in, std::size_t out) {
        struct Tap {
            std::size_t lo, hi;
            double frac;
        };
        std::vector<Tap> taps(out);
        const double scale = out > 1 ? static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
        for (std::size_t i = 0; i < out; ++i) {
            const double src = std::clamp(i * scale, 0.0, static_cast<double>(in - 1));
            const auto lo = static_cast<std::size_t>(std::floor(src));
            const std::size_t hi = std::min(lo + 1, in - 1);
            taps[i] = {lo, hi, src - static_cast<double>(lo)};
        }
        return taps;
    };
    const auto rows = axis(in_h, out_h);
    const auto cols = axis(in_w, out_w);

    std::vector<float> out(out_h * out_w);
    for (std::size_t r = 0; r < out_h; ++r) {
        const auto& ty = rows[r];
        for (std::size_t c = 0; c < out_w; ++c) {
            const auto& tx = cols[c];
            const double top = grid(ty.lo, tx.lo) * (1.0 - tx.frac) + grid(ty.lo, tx.hi) * tx.frac;
            const double bot = grid(ty.hi, tx.lo) * (1.0 - tx.frac) + grid(ty.hi, tx.hi) * tx.frac;
            out[r * out_w + c] = static_cast<float>(top * (1.0 - ty.frac) + bot * ty.frac);
        }
    }
    return {out_h, out_w, std::move(out)};
}

}  // namespace zone

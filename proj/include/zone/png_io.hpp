#pragma once

// 8-bit RGB/RGBA image and 1-bit mask PNG I/O on top of libpng.

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "zone/error.hpp"
#include "zone/grid.hpp"

namespace zone {

namespace png_detail {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct ErrorSink {
    std::jmp_buf jump;
    char message[256] = {};
};

extern "C" inline void on_error(png_structp png, png_const_charp msg) {
    auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
    std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
    std::longjmp(sink->jump, 1);
}

extern "C" inline void on_warning(png_structp, png_const_charp) {}

enum class ReadMode { Image, Mask };

struct Raw {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int bit_depth = 0;
    int color_type = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> data;
    std::string error;
};

// Everything between setjmp and the last libpng call is plain data: no
// objects with destructors are created in this frame after setjmp.
inline bool read_raw(std::FILE* fp, ReadMode mode, Raw& out) {
    ErrorSink sink;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, on_error, on_warning);
    if (!png) {
        out.error = "png: out of memory";
        return false;
    }
    png_infop info = png_create_info_struct(png);
    std::vector<png_bytep> rows;
    if (!info || setjmp(sink.jump)) {
        if (out.error.empty()) out.error = sink.message[0] ? sink.message : "png: read failure";
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        return false;
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    out.color_type = png_get_color_type(png, info);

    if (mode == ReadMode::Image) {
        if (out.bit_depth != 8) {
            out.error = "unsupported bit depth " + std::to_string(out.bit_depth);
            png_destroy_read_struct(&png, &info, nullptr);
            return false;
        }
        if (out.color_type != PNG_COLOR_TYPE_RGB && out.color_type != PNG_COLOR_TYPE_RGB_ALPHA) {
            out.error = "unsupported color type " + std::to_string(out.color_type);
            png_destroy_read_struct(&png, &info, nullptr);
            return false;
        }
        out.channels = out.color_type == PNG_COLOR_TYPE_RGB ? 3 : 4;
    } else {
        if (out.color_type != PNG_COLOR_TYPE_GRAY) {
            out.error = "unsupported color type " + std::to_string(out.color_type) + " for mask";
            png_destroy_read_struct(&png, &info, nullptr);
            return false;
        }
        if (out.bit_depth == 16) png_set_strip_16(png);
        if (out.bit_depth < 8) png_set_packing(png);
        out.channels = 1;
    }
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    out.data.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
    rows.resize(out.height);
    for (png_uint_32 r = 0; r < out.height; ++r)
        rows[r] = out.data.data() + static_cast<std::size_t>(r) * out.width * out.channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

inline bool write_raw(std::FILE* fp, png_uint_32 width, png_uint_32 height, int bit_depth, int color_type,
                      const std::uint8_t* data, std::size_t row_stride, std::string& error) {
    ErrorSink sink;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, on_error, on_warning);
    if (!png) {
        error = "png: out of memory";
        return false;
    }
    png_infop info = png_create_info_struct(png);
    std::vector<png_bytep> rows(height);
    if (!info || setjmp(sink.jump)) {
        error = sink.message[0] ? sink.message : "png: write failure";
        png_destroy_write_struct(&png, info ? &info : nullptr);
        return false;
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth < 8) png_set_packing(png);
    for (png_uint_32 r = 0; r < height; ++r)
        rows[r] = const_cast<png_bytep>(data + static_cast<std::size_t>(r) * row_stride);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

inline FilePtr open(const std::filesystem::path& path, const char* mode, const char* what) {
    FilePtr fp(std::fopen(path.c_str(), mode));
    if (!fp) throw Error(std::string(what) + ": cannot open " + path.string());
    return fp;
}

}  // namespace png_detail

/// Reads an 8-bit RGB or RGBA PNG. Alpha must be hard (0 or 255).
inline Image read_image(const std::filesystem::path& path) {
    auto fp = png_detail::open(path, "rb", "read_image");
    png_detail::Raw raw;
    if (!png_detail::read_raw(fp.get(), png_detail::ReadMode::Image, raw))
        throw FormatError(path.string() + ": " + raw.error);
    return {raw.height, raw.width, raw.channels, std::move(raw.data)};
}

inline void write_image(const Image& img, const std::filesystem::path& path) {
    auto fp = png_detail::open(path, "wb", "write_image");
    std::string err;
    const int type = img.channels() == 4 ? PNG_COLOR_TYPE_RGB_ALPHA : PNG_COLOR_TYPE_RGB;
    if (!png_detail::write_raw(fp.get(), static_cast<png_uint_32>(img.width()),
                               static_cast<png_uint_32>(img.height()), 8, type, img.samples().data(),
                               img.width() * img.channels(), err))
        throw Error(path.string() + ": " + err);
}

/// Reads a grayscale PNG of any bit depth as a mask; nonzero samples are set.
inline BinaryMask read_mask(const std::filesystem::path& path) {
    auto fp = png_detail::open(path, "rb", "read_mask");
    png_detail::Raw raw;
    if (!png_detail::read_raw(fp.get(), png_detail::ReadMode::Mask, raw))
        throw FormatError(path.string() + ": " + raw.error);
    return {raw.height, raw.width, std::move(raw.data)};
}

/// Writes a 1-bit grayscale PNG (set pixels white).
inline void write_mask(const BinaryMask& mask, const std::filesystem::path& path) {
    auto fp = png_detail::open(path, "wb", "write_mask");
    std::string err;
    if (!png_detail::write_raw(fp.get(), static_cast<png_uint_32>(mask.width()),
                               static_cast<png_uint_32>(mask.height()), 1, PNG_COLOR_TYPE_GRAY,
                               mask.bits().data(), mask.width(), err))
        throw Error(path.string() + ": " + err);
}

}  // namespace zone

#pragma once

// ZTF tensor exchange format:
//   "ZTF1" | rank:u8 (2 or 3) | dims:u32 LE x rank | payload: f32 LE, row-major
// Rank-3 payloads are layer-major.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <variant>
#include <vector>

#include "zone/error.hpp"
#include "zone/grid.hpp"

namespace zone {

using Tensor = std::variant<Grid2D, Grid3D>;

namespace ztf {

inline constexpr std::array<char, 4> kMagic{'Z', 'T', 'F', '1'};

namespace detail {

inline void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::vector<char> encode(std::span<const std::uint32_t> dims, std::span<const float> values) {
    std::vector<char> out(kMagic.begin(), kMagic.end());
    out.push_back(static_cast<char>(dims.size()));
    for (auto d : dims) put_u32(out, d);
    out.reserve(out.size() + values.size() * 4);
    for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("write_tensor: cannot open " + path.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("write_tensor: write failed for " + path.string());
}

inline std::uint32_t checked_dim(std::size_t d) {
    if (d > 0xFFFFFFFFu) throw Error("write_tensor: dimension exceeds u32");
    return static_cast<std::uint32_t>(d);
}

}  // namespace detail

inline Tensor decode(std::span<const unsigned char> bytes) {
    if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic.data(), 4) != 0)
        throw FormatError("bad magic");
    const unsigned rank = bytes[4];
    if (rank != 2 && rank != 3) throw FormatError("unsupported rank " + std::to_string(rank));
    const std::size_t header = 5 + 4 * rank;
    if (bytes.size() < header) throw FormatError("truncated header");
    std::vector<std::size_t> dims(rank);
    std::size_t count = 1;
    for (unsigned i = 0; i < rank; ++i) {
        dims[i] = detail::get_u32(bytes.data() + 5 + 4 * i);
        if (dims[i] == 0) throw FormatError("zero dimension");
        count *= dims[i];
        if (count > bytes.size()) throw FormatError("truncated payload");
    }
    if (bytes.size() - header < count * 4) throw FormatError("truncated payload");
    if (bytes.size() - header > count * 4) throw FormatError("trailing bytes after payload");
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        values[i] = std::bit_cast<float>(detail::get_u32(bytes.data() + header + 4 * i));
        if (!std::isfinite(values[i])) throw FormatError("non-finite value at index " + std::to_string(i));
    }
    if (rank == 2) return Grid2D(dims[0], dims[1], std::move(values));
    return Grid3D(dims[0], dims[1], dims[2], std::move(values));
}

}  // namespace ztf

inline Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("read_tensor: cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return ztf::decode(bytes);
}

inline Grid2D read_grid2d(const std::filesystem::path& path) {
    auto t = read_tensor(path);
    if (auto* g = std::get_if<Grid2D>(&t)) return std::move(*g);
    throw FormatError(path.string() + ": expected a rank-2 tensor");
}

inline Grid3D read_grid3d(const std::filesystem::path& path) {
    auto t = read_tensor(path);
    if (auto* g = std::get_if<Grid3D>(&t)) return std::move(*g);
    throw FormatError(path.string() + ": expected a rank-3 tensor");
}

inline std::vector<char> encode_tensor(const Grid2D& g) {
    const std::array dims{ztf::detail::checked_dim(g.height()), ztf::detail::checked_dim(g.width())};
    return ztf::detail::encode(dims, g.values());
}

inline std::vector<char> encode_tensor(const Grid3D& g) {
    const std::array dims{ztf::detail::checked_dim(g.layers()), ztf::detail::checked_dim(g.height()),
                          ztf::detail::checked_dim(g.width())};
    return ztf::detail::encode(dims, g.values());
}

inline void write_tensor(const Grid2D& g, const std::filesystem::path& path) {
    ztf::detail::write_bytes(path, encode_tensor(g));
}

inline void write_tensor(const Grid3D& g, const std::filesystem::path& path) {
    ztf::detail::write_bytes(path, encode_tensor(g));
}

inline void write_tensor(const Tensor& t, const std::filesystem::path& path) {
    std::visit([&](const auto& g) { write_tensor(g, path); }, t);
}

}  // namespace zone

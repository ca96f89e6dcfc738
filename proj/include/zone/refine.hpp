#pragma once

// Region-IoU selection of the refined mask among segment candidates.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zone/error.hpp"
#include "zone/grid.hpp"
#include "zone/png_io.hpp"

namespace zone {

/// Candidate segments from every segmentation level, pooled in one list.
struct SegmentSet {
    std::vector<BinaryMask> segments;
    std::vector<std::optional<int>> levels;  // parallel to segments; may be empty

    void validate() const {
        if (segments.empty()) throw Error("segment set is empty");
        for (const auto& s : segments)
            if (!s.same_shape(segments.front())) throw ShapeError("segments differ in size");
        if (!levels.empty() && levels.size() != segments.size())
            throw Error("segment levels do not match segment count");
    }
};

struct OverlapCounts {
    std::size_t intersection = 0;
    std::size_t union_ = 0;
};

inline OverlapCounts overlap(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw ShapeError("mask dimension mismatch");
    auto x = a.bits(), y = b.bits();
    OverlapCounts n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        n.intersection += x[i] & y[i];
        n.union_ += x[i] | y[i];
    }
    return n;
}

/// |S n M| / |S u M|; 0 when both masks are empty.
inline double region_iou(const BinaryMask& segment, const BinaryMask& location) {
    const auto n = overlap(segment, location);
    return n.union_ == 0 ? 0.0 : static_cast<double>(n.intersection) / static_cast<double>(n.union_);
}

/// Same contract as region_iou, under the evaluation name.
inline double mask_iou(const BinaryMask& a, const BinaryMask& b) { return region_iou(a, b); }

struct Refinement {
    BinaryMask mask;
    std::size_t index = 0;
    double score = 0.0;
};

/// Picks the candidate with the highest rIoU against the location mask.
/// Ties go to the lowest index.
inline Refinement refine(const SegmentSet& set, const BinaryMask& location) {
    set.validate();
    if (!set.segments.front().same_shape(location)) throw ShapeError("segments and location mask differ in size");
    if (location.none()) throw Error("no edit region located");
    Refinement best{set.segments.front(), 0, -1.0};
    for (std::size_t j = 0; j < set.segments.size(); ++j) {
        const double score = region_iou(set.segments[j], location);
        if (score > best.score) {
            best.score = score;
            best.index = j;
        }
    }
    best.mask = set.segments[best.index];
    return best;
}

/// Segment directory: `manifest.json` of the form
///   {"segments": [{"path": "000.png", "level": 0}, ...]}
/// with paths relative to the manifest and 1-bit grayscale PNG masks.
inline SegmentSet read_segment_set(const std::filesystem::path& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw Error("cannot open segment manifest " + manifest_path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    if (!doc.contains("segments") || !doc["segments"].is_array())
        throw FormatError(manifest_path.string() + ": missing 'segments' array");
    const auto dir = manifest_path.parent_path();
    SegmentSet set;
    for (const auto& item : doc["segments"]) {
        set.segments.push_back(read_mask(dir / item.at("path").get<std::string>()));
        if (item.contains("level") && !item["level"].is_null())
            set.levels.emplace_back(item["level"].get<int>());
        else
            set.levels.emplace_back(std::nullopt);
    }
    set.validate();
    return set;
}

inline void write_segment_set(const SegmentSet& set, const std::filesystem::path& dir) {
    set.validate();
    std::filesystem::create_directories(dir);
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t j = 0; j < set.segments.size(); ++j) {
        char name[32];
        std::snprintf(name, sizeof(name), "%03zu.png", j);
        write_mask(set.segments[j], dir / name);
        nlohmann::json item{{"path", name}};
        if (!set.levels.empty() && set.levels[j]) item["level"] = *set.levels[j];
        items.push_back(item);
    }
    std::ofstream os(dir / "manifest.json");
    os << nlohmann::json{{"segments", items}}.dump(2) << '\n';
    if (!os) throw Error("cannot write segment manifest in " + dir.string());
}

}  // namespace zone

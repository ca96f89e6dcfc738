#pragma once

// Edited image layers, hard-alpha compositing, multi-turn edit sessions and
// pixel-level metrics.

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "zone/denoise.hpp"
#include "zone/error.hpp"
#include "zone/grid.hpp"
#include "zone/png_io.hpp"

namespace zone {

struct LayerMeta {
    std::string name;
    std::string instruction;
    EditAction action = EditAction::Change;
};

/// RGBA layer: canvas colour with alpha 255 where the mask is set,
/// transparent black elsewhere.
struct EditLayer {
    std::string name;
    Image pixels;
    BinaryMask mask;
    std::string instruction;
    EditAction action = EditAction::Change;
};

inline EditLayer extract_layer(const Image& canvas, const BinaryMask& final_mask, LayerMeta meta) {
    if (!canvas.same_size(final_mask)) throw ShapeError("extract_layer: canvas and mask differ in size");
    std::vector<std::uint8_t> rgba(canvas.pixel_count() * 4, 0);
    for (std::size_t i = 0; i < canvas.pixel_count(); ++i) {
        if (!final_mask.bits()[i]) continue;
        auto p = canvas.pixel(i);
        std::copy_n(p.begin(), 3, rgba.begin() + static_cast<std::ptrdiff_t>(i * 4));
        rgba[i * 4 + 3] = 255;
    }
    return {std::move(meta.name), Image(canvas.height(), canvas.width(), 4, std::move(rgba)), final_mask,
            std::move(meta.instruction), meta.action};
}

/// Back-to-front hard overlay. The last opaque layer at a pixel wins; pixels
/// no layer covers are copied from the base unchanged.
inline Image composite(const Image& base, std::span<const EditLayer> layers) {
    for (const auto& l : layers)
        if (!base.same_size(l.pixels) || l.pixels.channels() != 4)
            throw ShapeError("composite: layer '" + l.name + "' does not match the base image");
    const std::size_t ch = base.channels();
    std::vector<std::uint8_t> out(base.samples().begin(), base.samples().end());
    for (std::size_t i = 0; i < base.pixel_count(); ++i) {
        for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
            auto p = it->pixels.pixel(i);
            if (p[3] != 255) continue;
            std::copy_n(p.begin(), 3, out.begin() + static_cast<std::ptrdiff_t>(i * ch));
            if (ch == 4) out[i * ch + 3] = 255;
            break;
        }
    }
    return {base.height(), base.width(), ch, std::move(out)};
}

struct HistoryEntry {
    std::size_t seq = 0;
    std::string op;  // "add", "remove" or "reorder"
    std::string layer;
    std::optional<std::size_t> index;

    friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

inline bool valid_layer_name(const std::string& name) {
    if (name.empty() || name.size() > 64) return false;
    return std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    });
}

/// Ordered layer stack over a base image with an append-only history.
/// Single writer; const access is safe to share between mutations.
class EditSession {
public:
    explicit EditSession(Image base) : base_(std::move(base)) {}

    const Image& base() const noexcept { return base_; }
    const std::vector<EditLayer>& layers() const noexcept { return layers_; }
    const std::vector<HistoryEntry>& history() const noexcept { return history_; }

    const EditLayer* find(const std::string& name) const {
        auto it = std::find_if(layers_.begin(), layers_.end(), [&](const EditLayer& l) { return l.name == name; });
        return it == layers_.end() ? nullptr : &*it;
    }

    void add_layer(EditLayer layer) {
        if (!valid_layer_name(layer.name)) throw Error("invalid layer name '" + layer.name + "'");
        if (find(layer.name)) throw Error("duplicate layer name '" + layer.name + "'");
        if (!base_.same_size(layer.pixels) || !base_.same_size(layer.mask) || layer.pixels.channels() != 4)
            throw ShapeError("layer '" + layer.name + "' does not match the base image");
        record("add", layer.name, std::nullopt);
        layers_.push_back(std::move(layer));
    }

    void remove_layer(const std::string& name) {
        layers_.erase(locate(name));
        record("remove", name, std::nullopt);
    }

    void reorder(const std::string& name, std::size_t index) {
        auto it = locate(name);
        if (index >= layers_.size()) throw Error("reorder: index out of range");
        EditLayer moved = std::move(*it);
        layers_.erase(it);
        layers_.insert(layers_.begin() + static_cast<std::ptrdiff_t>(index), std::move(moved));
        record("reorder", name, index);
    }

    Image flatten() const { return composite(base_, layers_); }

    /// Unique default layer name: edit1, edit2, ...
    std::string next_layer_name() const {
        for (std::size_t k = 1;; ++k) {
            std::string n = "edit" + std::to_string(k);
            if (!find(n)) return n;
        }
    }

    /// Rebuilds a session by applying `history` to `base`, taking added layers
    /// from `pool` by name.
    static EditSession replay(const Image& base, std::span<const EditLayer> pool,
                              std::span<const HistoryEntry> history) {
        EditSession s(base);
        for (const auto& h : history) {
            if (h.op == "add") {
                auto it = std::find_if(pool.begin(), pool.end(), [&](const EditLayer& l) { return l.name == h.layer; });
                if (it == pool.end()) throw Error("replay: no layer named '" + h.layer + "'");
                s.add_layer(*it);
            } else if (h.op == "remove") {
                s.remove_layer(h.layer);
            } else if (h.op == "reorder") {
                s.reorder(h.layer, h.index.value_or(0));
            } else {
                throw Error("replay: unknown operation '" + h.op + "'");
            }
        }
        return s;
    }

    // Restores persisted state without re-recording history.
    static EditSession restore(Image base, std::vector<EditLayer> layers, std::vector<HistoryEntry> history) {
        EditSession s(std::move(base));
        for (const auto& l : layers)
            if (!s.base_.same_size(l.pixels)) throw ShapeError("layer '" + l.name + "' does not match the base image");
        s.layers_ = std::move(layers);
        s.history_ = std::move(history);
        return s;
    }

private:
    std::vector<EditLayer>::iterator locate(const std::string& name) {
        auto it = std::find_if(layers_.begin(), layers_.end(), [&](const EditLayer& l) { return l.name == name; });
        if (it == layers_.end()) throw Error("unknown layer '" + name + "'");
        return it;
    }

    void record(std::string op, const std::string& name, std::optional<std::size_t> index) {
        history_.push_back({history_.size() + 1, std::move(op), name, index});
    }

    Image base_;
    std::vector<EditLayer> layers_;
    std::vector<HistoryEntry> history_;
};

// Session directory layout:
//   base.png
//   layers/NN_name.png        RGBA layer
//   layers/NN_name.mask.png   1-bit mask
//   session.json              order, instructions, actions, history
// Timestamps are the logical history sequence numbers, so identical inputs
// produce identical directories.

namespace session_detail {

inline std::string layer_stem(std::size_t index, const std::string& name) {
    char prefix[16];
    std::snprintf(prefix, sizeof(prefix), "%02zu_", index);
    return prefix + name;
}

inline nlohmann::json to_json(const HistoryEntry& h) {
    nlohmann::json j{{"seq", h.seq}, {"op", h.op}, {"layer", h.layer}};
    if (h.index) j["index"] = *h.index;
    return j;
}

}  // namespace session_detail

inline void save_session(const EditSession& session, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path layer_dir = dir / "layers";
    fs::create_directories(layer_dir);
    for (const auto& entry : fs::directory_iterator(layer_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png") fs::remove(entry.path());

    write_image(session.base(), dir / "base.png");

    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < session.layers().size(); ++i) {
        const auto& l = session.layers()[i];
        std::size_t added_seq = 0;
        const std::string stem = session_detail::layer_stem(i, l.name);
        write_image(l.pixels, layer_dir / (stem + ".png"));
        write_mask(l.mask, layer_dir / (stem + ".mask.png"));
        for (const auto& h : session.history())
            if (h.op == "add" && h.layer == l.name) added_seq = h.seq;
        layers.push_back({{"name", l.name},
                          {"file", "layers/" + stem + ".png"},
                          {"mask", "layers/" + stem + ".mask.png"},
                          {"instruction", l.instruction},
                          {"action", std::string(to_string(l.action))},
                          {"created", added_seq}});
    }
    nlohmann::json history = nlohmann::json::array();
    for (const auto& h : session.history()) history.push_back(session_detail::to_json(h));

    const nlohmann::json doc{{"version", 1}, {"base", "base.png"}, {"layers", layers}, {"history", history}};
    std::ofstream os(dir / "session.json", std::ios::trunc);
    os << doc.dump(2) << '\n';
    if (!os) throw Error("cannot write " + (dir / "session.json").string());
}

inline EditSession load_session(const std::filesystem::path& dir) {
    std::ifstream is(dir / "session.json");
    if (!is) throw Error("not a session directory: " + dir.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(is);
        Image base = read_image(dir / doc.at("base").get<std::string>());
        std::vector<EditLayer> layers;
        for (const auto& item : doc.at("layers")) {
            const auto action = parse_action(item.at("action").get<std::string>());
            if (!action) throw FormatError("unknown action in session manifest");
            layers.push_back({item.at("name").get<std::string>(), read_image(dir / item.at("file").get<std::string>()),
                              read_mask(dir / item.at("mask").get<std::string>()),
                              item.at("instruction").get<std::string>(), *action});
        }
        std::vector<HistoryEntry> history;
        for (const auto& item : doc.at("history")) {
            HistoryEntry h{item.at("seq").get<std::size_t>(), item.at("op").get<std::string>(),
                           item.at("layer").get<std::string>(), std::nullopt};
            if (item.contains("index")) h.index = item["index"].get<std::size_t>();
            history.push_back(std::move(h));
        }
        return EditSession::restore(std::move(base), std::move(layers), std::move(history));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError((dir / "session.json").string() + ": " + e.what());
    }
}

struct PixelMetrics {
    double l1 = 0.0;
    double l2 = 0.0;
};

/// Mean absolute and mean squared difference over all samples scaled to
/// [0, 1]. With a mask, only pixels where the mask is set are counted.
inline PixelMetrics pixel_metrics(const Image& a, const Image& b, const BinaryMask* region = nullptr) {
    if (!a.same_size(b) || a.channels() != b.channels()) throw ShapeError("pixel_metrics: image shapes differ");
    if (region && !a.same_size(*region)) throw ShapeError("pixel_metrics: region mask size differs");
    const std::size_t ch = a.channels();
    double s1 = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.pixel_count(); ++i) {
        if (region && !region->bits()[i]) continue;
        auto p = a.pixel(i), q = b.pixel(i);
        for (std::size_t c = 0; c < ch; ++c) {
            const double d = (static_cast<double>(p[c]) - static_cast<double>(q[c])) / 255.0;
            s1 += std::fabs(d);
            s2 += d * d;
        }
        n += ch;
    }
    if (n == 0) return {};
    return {s1 / static_cast<double>(n), s2 / static_cast<double>(n)};
}

/// User preference rate: 100 * S_i / sum(S).
inline std::vector<double> upr(std::span<const double> scores) {
    double total = 0.0;
    for (double s : scores) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw Error("upr: scores must be finite and non-negative");
        total += s;
    }
    if (!(total > 0.0)) throw Error("upr: all scores are zero");
    std::vector<double> out;
    out.reserve(scores.size());
    for (double s : scores) out.push_back(100.0 * s / total);
    return out;
}

}  // namespace zone

#pragma once

// End-to-end local editing: classify -> localize -> refine -> smooth ->
// extract layer -> composite, over in-memory inputs or a manifest directory.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zone/attention.hpp"
#include "zone/classifier.hpp"
#include "zone/denoise.hpp"
#include "zone/error.hpp"
#include "zone/layers.hpp"
#include "zone/png_io.hpp"
#include "zone/refine.hpp"
#include "zone/smoother.hpp"
#include "zone/ztf.hpp"

namespace zone {

/// Error tagged with the pipeline stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message)
        : Error(stage + ": " + message), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct PipelineConfig {
    int threshold_T = 128;
    double beta_remove = 0.2;
    double beta_other = 0.01;
    double cutoff_D0 = 200.0;
    int steps = 20;
    int dilation_radius = 15;
    double g_threshold = 10.0;
    int closing_radius = 5;
    double min_riou = 0.0;
    bool invert_localization = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (threshold_T < 0 || threshold_T > 255) throw Error("threshold_T must be within [0, 255]");
        if (!(beta_remove >= 0) || !(beta_other >= 0)) throw Error("betas must be non-negative");
        if (!(cutoff_D0 > 0)) throw Error("cutoff_D0 must be positive");
        if (steps < 1) throw Error("steps must be positive");
        if (dilation_radius < 0 || closing_radius < 0) throw Error("radii must be non-negative");
        if (!(g_threshold > 0)) throw Error("g_threshold must be positive");
        if (!(min_riou >= 0 && min_riou <= 1)) throw Error("min_riou must be within [0, 1]");
    }

    SmootherConfig smoother() const { return {cutoff_D0, dilation_radius, g_threshold, closing_radius}; }
    FusionConfig fusion() const { return {beta_remove, beta_other, steps}; }
    LocalizerConfig localizer(std::size_t h, std::size_t w) const {
        return {threshold_T, h, w, invert_localization};
    }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
    return {{"threshold_T", c.threshold_T},   {"beta_remove", c.beta_remove},
            {"beta_other", c.beta_other},     {"cutoff_D0", c.cutoff_D0},
            {"steps", c.steps},               {"dilation_radius", c.dilation_radius},
            {"g_threshold", c.g_threshold},   {"closing_radius", c.closing_radius},
            {"min_riou", c.min_riou},         {"invert_localization", c.invert_localization},
            {"seed", c.seed}};
}

namespace config_detail {

// Applies one key from a string source (environment or flag text).
inline void set_from_text(PipelineConfig& c, const std::string& key, const std::string& text) {
    auto as_double = [&] {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    };
    auto as_int = [&] {
        std::size_t used = 0;
        const long long v = std::stoll(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    };
    try {
        if (key == "threshold_T") c.threshold_T = static_cast<int>(as_int());
        else if (key == "beta_remove") c.beta_remove = as_double();
        else if (key == "beta_other") c.beta_other = as_double();
        else if (key == "cutoff_D0") c.cutoff_D0 = as_double();
        else if (key == "steps") c.steps = static_cast<int>(as_int());
        else if (key == "dilation_radius") c.dilation_radius = static_cast<int>(as_int());
        else if (key == "g_threshold") c.g_threshold = as_double();
        else if (key == "closing_radius") c.closing_radius = static_cast<int>(as_int());
        else if (key == "min_riou") c.min_riou = as_double();
        else if (key == "seed") c.seed = static_cast<std::uint64_t>(as_int());
        else if (key == "invert_localization") {
            if (text == "1" || text == "true") c.invert_localization = true;
            else if (text == "0" || text == "false") c.invert_localization = false;
            else throw std::invalid_argument(text);
        } else
            throw Error("unknown config key '" + key + "'");
    } catch (const std::logic_error&) {
        throw Error("invalid value '" + text + "' for config key '" + key + "'");
    }
}

inline const std::vector<std::string>& keys() {
    static const std::vector<std::string> k{"threshold_T", "beta_remove",     "beta_other",     "cutoff_D0",
                                            "steps",       "dilation_radius", "g_threshold",    "closing_radius",
                                            "min_riou",    "invert_localization", "seed"};
    return k;
}

}  // namespace config_detail

/// Overlays keys from a JSON config document. Unknown keys are rejected.
inline void apply_config_json(PipelineConfig& c, const nlohmann::json& doc) {
    if (!doc.is_object()) throw Error("config document must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        const std::string text = value.is_string() ? value.get<std::string>() : value.dump();
        config_detail::set_from_text(c, key, text);
    }
}

inline void apply_config_file(PipelineConfig& c, const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open config file " + path.string());
    try {
        apply_config_json(c, nlohmann::json::parse(is));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

/// Overlays ZONE_<KEY> variables, key upper-cased (ZONE_THRESHOLD_T, ...).
inline void apply_config_env(PipelineConfig& c,
                             const std::function<const char*(const char*)>& getenv_fn = std::getenv) {
    for (const auto& key : config_detail::keys()) {
        std::string var = "ZONE_";
        for (char ch : key) var += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        if (const char* v = getenv_fn(var.c_str())) config_detail::set_from_text(c, key, v);
    }
}

inline void apply_config_value(PipelineConfig& c, const std::string& key, const std::string& text) {
    config_detail::set_from_text(c, key, text);
}

// Attention manifest:
//   {"steps": 20, "blocks": [...],
//    "stacks": [{"step": 0, "block": "up_blocks.1", "path": "s00_b0.ztf"}, ...]}

inline void write_attention_manifest(const AttentionCollection& c, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json stacks = nlohmann::json::array();
    const auto blocks = c.block_ids();
    for (const auto& e : c.entries) {
        const auto b = static_cast<std::size_t>(std::find(blocks.begin(), blocks.end(), e.block) - blocks.begin());
        char name[48];
        std::snprintf(name, sizeof(name), "s%02d_b%zu.ztf", e.step, b);
        write_tensor(e.maps, dir / name);
        stacks.push_back({{"step", e.step},
                          {"block", e.block},
                          {"path", name},
                          {"height", e.maps.height()},
                          {"width", e.maps.width()}});
    }
    const nlohmann::json doc{{"steps", c.step_count()}, {"blocks", blocks}, {"tokens", c.token_count()},
                             {"stacks", stacks}};
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    os << doc.dump(2) << '\n';
    if (!os) throw Error("cannot write attention manifest in " + dir.string());
}

inline AttentionCollection read_attention_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open attention manifest " + path.string());
    try {
        const auto doc = nlohmann::json::parse(is);
        AttentionCollection c;
        for (const auto& s : doc.at("stacks"))
            c.entries.push_back({s.at("step").get<int>(), s.at("block").get<std::string>(),
                                 read_grid3d(path.parent_path() / s.at("path").get<std::string>())});
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

/// Everything the pipeline consumes besides the original image.
struct RunInputs {
    Image canvas;
    AttentionCollection attention;
    SegmentSet segments;
    std::optional<MlpParams<float>> classifier;
    std::optional<std::vector<float>> embedding;
    std::optional<EditAction> action;
};

// Run manifest (paths relative to the manifest file):
//   {"canvas": "canvas.png", "attention": "attention/manifest.json",
//    "segments": "segments/manifest.json", "classifier": "classifier",
//    "instruction_embedding": "instruction.ztf", "action": "change"}
// classifier + instruction_embedding, or action, must be present.

inline RunInputs read_run_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw StageError("manifest", "cannot open " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw StageError("manifest", e.what());
    }
    const auto dir = path.parent_path();
    auto field = [&](const char* key) -> std::optional<std::filesystem::path> {
        if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
        return dir / doc[key].get<std::string>();
    };
    auto required = [&](const char* key) {
        auto p = field(key);
        if (!p) throw StageError("manifest", std::string("missing '") + key + "'");
        return *p;
    };
    RunInputs in;
    try {
        in.canvas = read_image(required("canvas"));
    } catch (const Error& e) {
        throw StageError("manifest", e.what());
    }
    try {
        in.attention = read_attention_manifest(required("attention"));
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError("localize", e.what());
    }
    try {
        in.segments = read_segment_set(required("segments"));
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError("refine", e.what());
    }
    try {
        if (auto p = field("classifier")) in.classifier = load_classifier(*p);
        if (auto p = field("instruction_embedding")) {
            const Grid2D e = read_grid2d(*p);
            in.embedding = std::vector<float>(e.values().begin(), e.values().end());
        }
    } catch (const Error& e) {
        throw StageError("classify", e.what());
    }
    if (doc.contains("action")) {
        const auto a = parse_action(doc["action"].get<std::string>());
        if (!a) throw StageError("manifest", "unknown action '" + doc["action"].get<std::string>() + "'");
        in.action = a;
    }
    return in;
}

struct StageTiming {
    std::string stage;
    double milliseconds = 0.0;
};

struct RunOutcome {
    EditSession session;
    Image composite;
    EditAction action = EditAction::Change;
    BinaryMask location;     // M_b
    Refinement refinement;   // M_f with its index and rIoU
    BinaryMask final_mask;   // M_f*
    PixelMetrics vs_original;
    PixelMetrics outside_mask;
    std::vector<StageTiming> timings;
};

struct RunOptions {
    std::string instruction;
    std::string layer_name;                // empty: next free "editN"
    std::optional<EditSession> session;    // continue a multi-turn session
};

/// Runs one edit turn. `original` is the image the edit was made from (the
/// current composite in a multi-turn session).
inline RunOutcome run_edit(const Image& original, const RunInputs& in, const PipelineConfig& config,
                           RunOptions options = {}) {
    using Clock = std::chrono::steady_clock;
    try {
        config.validate();
    } catch (const Error& e) {
        throw StageError("config", e.what());
    }
    std::vector<StageTiming> timings;
    auto timed = [&](const char* stage, auto&& fn) {
        const auto t0 = Clock::now();
        try {
            auto r = fn();
            timings.push_back({stage, std::chrono::duration<double, std::milli>(Clock::now() - t0).count()});
            return r;
        } catch (const StageError&) {
            throw;
        } catch (const Error& e) {
            throw StageError(stage, e.what());
        }
    };

    const EditAction action = timed("classify", [&] {
        if (in.classifier && in.embedding) return classify<float>(*in.classifier, *in.embedding);
        if (in.action) return *in.action;
        throw Error("no classifier with instruction embedding and no explicit action");
    });

    const std::size_t h = original.height(), w = original.width();
    if (!original.same_size(in.canvas)) throw StageError("manifest", "canvas and original differ in size");

    const Grid3D averaged = timed("average_maps", [&] { return average_maps(in.attention, config.localizer(h, w)); });
    BinaryMask location = timed("binarize_location", [&] {
        auto m = binarize_location(averaged, config.localizer(h, w));
        if (m.none()) throw Error("no edit region located");
        return m;
    });
    Refinement refined = timed("refine", [&] {
        auto r = refine(in.segments, location);
        if (r.score < config.min_riou)
            throw Error("best rIoU " + std::to_string(r.score) + " is below min_riou " + std::to_string(config.min_riou));
        return r;
    });
    BinaryMask final_mask =
        timed("smooth", [&] { return smooth(original, in.canvas, refined.mask, config.smoother()); });

    EditSession session = options.session ? std::move(*options.session) : EditSession(original);
    if (!session.base().same_size(original)) throw StageError("session", "session base and original differ in size");
    const std::string name = options.layer_name.empty() ? session.next_layer_name() : options.layer_name;
    EditLayer layer = timed("extract_layer", [&] {
        return extract_layer(in.canvas, final_mask, {name, options.instruction, action});
    });
    timed("add_layer", [&] {
        session.add_layer(std::move(layer));
        return 0;
    });
    Image flat = timed("flatten", [&] { return session.flatten(); });

    const BinaryMask outside = final_mask.complement();
    RunOutcome out{std::move(session), std::move(flat), action, std::move(location), std::move(refined),
                   std::move(final_mask), {}, {}, std::move(timings)};
    out.vs_original = pixel_metrics(out.composite, original);
    out.outside_mask = pixel_metrics(out.composite, original, &outside);
    return out;
}

/// Machine-readable run report; embeds the resolved configuration.
inline nlohmann::json report_json(const RunOutcome& r, const PipelineConfig& config, const std::string& instruction) {
    nlohmann::json timings = nlohmann::json::object();
    for (const auto& t : r.timings) timings[t.stage] = t.milliseconds;
    return {{"config", to_json(config)},
            {"instruction", instruction},
            {"action", std::string(to_string(r.action))},
            {"refine", {{"index", r.refinement.index}, {"riou", r.refinement.score}}},
            {"areas",
             {{"location", r.location.count()}, {"refined", r.refinement.mask.count()}, {"final", r.final_mask.count()}}},
            {"metrics",
             {{"l1", r.vs_original.l1},
              {"l2", r.vs_original.l2},
              {"outside_l1", r.outside_mask.l1},
              {"outside_l2", r.outside_mask.l2}}},
            {"timings_ms", timings}};
}

/// Writes session/, final.png, masks/ and report.json under `out_dir`.
inline void write_run_outputs(const RunOutcome& r, const PipelineConfig& config, const std::string& instruction,
                              const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "masks");
    save_session(r.session, out_dir / "session");
    write_image(r.composite, out_dir / "final.png");
    write_mask(r.location, out_dir / "masks" / "location.png");
    write_mask(r.refinement.mask, out_dir / "masks" / "refined.png");
    write_mask(r.final_mask, out_dir / "masks" / "final.png");
    std::ofstream os(out_dir / "report.json", std::ios::trunc);
    os << report_json(r, config, instruction).dump(2) << '\n';
    if (!os) throw Error("cannot write report in " + out_dir.string());
}

}  // namespace zone

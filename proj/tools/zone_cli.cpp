// zone: command-line front end for the local editing pipeline.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "zone/zone.hpp"

namespace fs = std::filesystem;

namespace {

// Flags that override PipelineConfig keys; registered on the top-level app.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    bool invert = false;
    CLI::Option* invert_flag = nullptr;
};

void add_config_flags(CLI::App& app, ConfigFlags& f) {
    app.add_option("--config", f.config_path, "JSON config file")->check(CLI::ExistingFile);
    const std::vector<std::pair<std::string, std::string>> flags{
        {"threshold_T", "--threshold"},  {"beta_remove", "--beta-remove"},
        {"beta_other", "--beta-other"},  {"cutoff_D0", "--cutoff"},
        {"steps", "--steps"},            {"dilation_radius", "--dilation-radius"},
        {"g_threshold", "--g-threshold"}, {"closing_radius", "--closing-radius"},
        {"min_riou", "--min-riou"},      {"seed", "--seed"}};
    for (const auto& [key, flag] : flags)
        f.options[key] = app.add_option(flag, f.values[key], "override " + key);
    f.invert_flag = app.add_flag("--invert-localization", f.invert, "flip the localization polarity");
}

zone::PipelineConfig resolve_config(const ConfigFlags& f) {
    zone::PipelineConfig c;
    try {
        if (!f.config_path.empty()) zone::apply_config_file(c, f.config_path);
        zone::apply_config_env(c);
        for (const auto& [key, opt] : f.options)
            if (opt->count()) zone::apply_config_value(c, key, f.values.at(key));
        if (f.invert_flag->count()) c.invert_localization = f.invert;
        c.validate();
    } catch (const zone::StageError&) {
        throw;
    } catch (const zone::Error& e) {
        throw zone::StageError("config", e.what());
    }
    return c;
}

zone::EditAction action_arg(const std::string& s) {
    const auto a = zone::parse_action(s);
    if (!a) throw CLI::ValidationError("--action", "expected change, add or remove");
    return *a;
}

// Refuses to write over any of the given inputs.
void guard_output(const fs::path& out, std::initializer_list<fs::path> inputs) {
    for (const auto& in : inputs) {
        if (in.empty() || !fs::exists(in) || !fs::exists(out)) continue;
        if (fs::equivalent(in, out)) throw zone::Error("output " + out.string() + " would overwrite an input");
    }
}

std::vector<zone::EditLayer> read_layers(const std::vector<std::string>& paths) {
    std::vector<zone::EditLayer> layers;
    for (const auto& p : paths) {
        zone::Image img = zone::read_image(p);
        if (img.channels() != 4) throw zone::ShapeError(p + ": layer must be RGBA");
        zone::BinaryMask m = zone::BinaryMask::generate(img.height(), img.width(), [&](std::size_t r, std::size_t c) {
            return img.pixel(r * img.width() + c)[3] == 255;
        });
        layers.push_back({fs::path(p).stem().string(), std::move(img), std::move(m), "", zone::EditAction::Change});
    }
    return layers;
}

void print_summary(const zone::RunOutcome& r) {
    std::fprintf(stderr, "action    %s\n", std::string(zone::to_string(r.action)).c_str());
    std::fprintf(stderr, "location  %zu px\n", r.location.count());
    std::fprintf(stderr, "refined   %zu px (segment %zu, rIoU %.4f)\n", r.refinement.mask.count(), r.refinement.index,
                 r.refinement.score);
    std::fprintf(stderr, "final     %zu px\n", r.final_mask.count());
    std::fprintf(stderr, "l1 %.6f l2 %.6f (outside mask l1 %.6f)\n", r.vs_original.l1, r.vs_original.l2,
                 r.outside_mask.l1);
    double total = 0.0;
    for (const auto& t : r.timings) total += t.milliseconds;
    std::fprintf(stderr, "time      %.1f ms\n", total);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ZONE local image editing"};
    app.require_subcommand(1);
    app.fallthrough();
    ConfigFlags flags;
    add_config_flags(app, flags);

    // localize
    auto* localize = app.add_subcommand("localize", "average attention maps and binarize them into M_b");
    std::string att_manifest, loc_out, maps_out;
    std::size_t loc_h = 0, loc_w = 0;
    localize->add_option("--attention", att_manifest, "attention manifest.json")->required()->check(CLI::ExistingFile);
    localize->add_option("--height", loc_h, "target height")->required();
    localize->add_option("--width", loc_w, "target width")->required();
    localize->add_option("--out", loc_out, "output 1-bit mask PNG")->required();
    localize->add_option("--maps", maps_out, "also write the normalized maps as ZTF");

    // refine
    auto* refine_cmd = app.add_subcommand("refine", "pick the segment with the best rIoU against M_b");
    std::string seg_manifest, location_path, refine_out;
    refine_cmd->add_option("--segments", seg_manifest, "segment manifest.json")->required()->check(CLI::ExistingFile);
    refine_cmd->add_option("--location", location_path, "location mask PNG")->required()->check(CLI::ExistingFile);
    refine_cmd->add_option("--out", refine_out, "write the chosen segment");

    // smooth
    auto* smooth_cmd = app.add_subcommand("smooth", "edge smoothing of a refined mask into M_f*");
    std::string sm_original, sm_canvas, sm_refined, sm_out;
    smooth_cmd->add_option("--original", sm_original)->required()->check(CLI::ExistingFile);
    smooth_cmd->add_option("--canvas", sm_canvas)->required()->check(CLI::ExistingFile);
    smooth_cmd->add_option("--refined", sm_refined)->required()->check(CLI::ExistingFile);
    smooth_cmd->add_option("--out", sm_out)->required();

    // extract-layer
    auto* extract_cmd = app.add_subcommand("extract-layer", "cut an RGBA layer out of the canvas");
    std::string ex_canvas, ex_mask, ex_out;
    extract_cmd->add_option("--canvas", ex_canvas)->required()->check(CLI::ExistingFile);
    extract_cmd->add_option("--mask", ex_mask)->required()->check(CLI::ExistingFile);
    extract_cmd->add_option("--out", ex_out)->required();

    // composite
    auto* composite_cmd = app.add_subcommand("composite", "overlay RGBA layers on a base image, back to front");
    std::string co_base, co_out;
    std::vector<std::string> co_layers;
    composite_cmd->add_option("--base", co_base)->required()->check(CLI::ExistingFile);
    composite_cmd->add_option("layers", co_layers, "RGBA layer PNGs, bottom first")->check(CLI::ExistingFile);
    composite_cmd->add_option("--out", co_out)->required();

    // classify
    auto* classify_cmd = app.add_subcommand("classify", "predict the edit action of an instruction embedding");
    std::string cl_model, cl_embedding;
    classify_cmd->add_option("--model", cl_model, "classifier directory")->required()->check(CLI::ExistingDirectory);
    classify_cmd->add_option("--embedding", cl_embedding, "1 x 768 ZTF")->required()->check(CLI::ExistingFile);

    // train-classifier
    auto* train_cmd = app.add_subcommand("train-classifier", "train the action classifier");
    std::string tr_train, tr_test, tr_out;
    int tr_epochs = 30;
    double tr_lr = 0.1;
    bool tr_fixture = false;
    train_cmd->add_option("--train", tr_train, "train split stem (<stem>.ztf, <stem>.labels)");
    train_cmd->add_option("--test", tr_test, "test split stem");
    train_cmd->add_flag("--fixture", tr_fixture, "use the bundled synthetic dataset");
    train_cmd->add_option("--epochs", tr_epochs)->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--lr", tr_lr)->check(CLI::PositiveNumber);
    train_cmd->add_option("--out", tr_out, "classifier directory")->required();

    // metrics
    auto* metrics_cmd = app.add_subcommand("metrics", "L1/L2 between two images");
    std::string me_a, me_b, me_mask;
    bool me_complement = false;
    metrics_cmd->add_option("a", me_a)->required()->check(CLI::ExistingFile);
    metrics_cmd->add_option("b", me_b)->required()->check(CLI::ExistingFile);
    metrics_cmd->add_option("--mask", me_mask, "restrict to pixels inside this mask")->check(CLI::ExistingFile);
    metrics_cmd->add_flag("--complement", me_complement, "use pixels outside --mask instead");

    // upr
    auto* upr_cmd = app.add_subcommand("upr", "user preference rate from vote counts");
    std::vector<double> upr_scores;
    upr_cmd->add_option("scores", upr_scores)->required();

    // fixtures
    auto* fixtures_cmd = app.add_subcommand("fixtures", "synthetic inputs");
    fixtures_cmd->require_subcommand(1);
    auto* fx_generate = fixtures_cmd->add_subcommand("generate", "write a synthetic edit case");
    zone::FixtureSpec fx;
    std::string fx_out, fx_shape = "square", fx_action = "change";
    bool fx_classifier = false;
    fx_generate->add_option("--out", fx_out)->required();
    fx_generate->add_option("--size", fx.size)->check(CLI::Range(16, 4096));
    fx_generate->add_option("--shape", fx_shape)->check(CLI::IsMember({"square", "disk"}));
    fx_generate->add_option("--centre-row", fx.centre_row);
    fx_generate->add_option("--centre-col", fx.centre_col);
    fx_generate->add_option("--extent", fx.extent, "square side or disk diameter");
    fx_generate->add_option("--action", fx_action)->check(CLI::IsMember({"change", "add", "remove"}));
    fx_generate->add_option("--instruction", fx.instruction);
    std::string fx_base;
    fx_generate->add_option("--base", fx_base, "use this image as the scene")->check(CLI::ExistingFile);
    fx_generate->add_flag("--with-classifier", fx_classifier, "train and bundle a classifier");
    auto* fx_dataset = fixtures_cmd->add_subcommand("dataset", "write the synthetic classifier dataset");
    std::string ds_out;
    fx_dataset->add_option("--out", ds_out)->required();

    // run
    auto* run_cmd = app.add_subcommand("run", "one full edit turn");
    std::string run_original, run_manifest, run_instruction, run_out, run_session, run_layer;
    run_cmd->add_option("--original", run_original, "image the edit was made from")->check(CLI::ExistingFile);
    run_cmd->add_option("--manifest", run_manifest, "run manifest.json")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--instruction", run_instruction);
    run_cmd->add_option("--out", run_out, "output directory")->required();
    run_cmd->add_option("--session", run_session, "continue this session directory")->check(CLI::ExistingDirectory);
    run_cmd->add_option("--layer-name", run_layer);

    // session
    auto* session_cmd = app.add_subcommand("session", "inspect or edit a session directory");
    session_cmd->require_subcommand(1);
    std::string se_dir, se_name, se_out;
    std::size_t se_index = 0;
    auto* se_list = session_cmd->add_subcommand("list", "print layers and history");
    se_list->add_option("dir", se_dir)->required()->check(CLI::ExistingDirectory);
    auto* se_remove = session_cmd->add_subcommand("remove", "drop a layer");
    se_remove->add_option("dir", se_dir)->required()->check(CLI::ExistingDirectory);
    se_remove->add_option("name", se_name)->required();
    se_remove->add_option("--out", se_out, "new session directory")->required();
    auto* se_reorder = session_cmd->add_subcommand("reorder", "move a layer to a stack index");
    se_reorder->add_option("dir", se_dir)->required()->check(CLI::ExistingDirectory);
    se_reorder->add_option("name", se_name)->required();
    se_reorder->add_option("index", se_index)->required();
    se_reorder->add_option("--out", se_out, "new session directory")->required();
    auto* se_flatten = session_cmd->add_subcommand("flatten", "render the composite");
    se_flatten->add_option("dir", se_dir)->required()->check(CLI::ExistingDirectory);
    se_flatten->add_option("--out", se_out, "output PNG")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    std::string stage = "cli";
    try {
        const zone::PipelineConfig config = resolve_config(flags);

        if (*localize) {
            stage = "localize";
            const auto collection = zone::read_attention_manifest(att_manifest);
            const auto lc = config.localizer(loc_h, loc_w);
            const zone::Grid3D maps = zone::average_maps(collection, lc);
            const zone::BinaryMask m = zone::binarize_location(maps, lc);
            guard_output(loc_out, {att_manifest});
            zone::write_mask(m, loc_out);
            if (!maps_out.empty()) zone::write_tensor(maps, maps_out);
            std::printf("area %zu\n", m.count());
        } else if (*refine_cmd) {
            stage = "refine";
            const auto set = zone::read_segment_set(seg_manifest);
            const auto loc = zone::read_mask(location_path);
            const auto r = zone::refine(set, loc);
            if (r.score < config.min_riou)
                throw zone::Error("best rIoU " + std::to_string(r.score) + " is below min_riou");
            if (!refine_out.empty()) {
                guard_output(refine_out, {location_path});
                zone::write_mask(r.mask, refine_out);
            }
            std::printf("score %.6f\n", r.score);
            std::fprintf(stderr, "segment %zu, %zu px\n", r.index, r.mask.count());
        } else if (*smooth_cmd) {
            stage = "smooth";
            const auto m = zone::smooth(zone::read_image(sm_original), zone::read_image(sm_canvas),
                                        zone::read_mask(sm_refined), config.smoother());
            guard_output(sm_out, {sm_original, sm_canvas, sm_refined});
            zone::write_mask(m, sm_out);
            std::printf("area %zu\n", m.count());
        } else if (*extract_cmd) {
            stage = "extract_layer";
            const auto layer = zone::extract_layer(zone::read_image(ex_canvas), zone::read_mask(ex_mask),
                                                   {fs::path(ex_out).stem().string(), "", zone::EditAction::Change});
            guard_output(ex_out, {ex_canvas, ex_mask});
            zone::write_image(layer.pixels, ex_out);
        } else if (*composite_cmd) {
            stage = "composite";
            const auto base = zone::read_image(co_base);
            const auto layers = read_layers(co_layers);
            const auto out = zone::composite(base, layers);
            guard_output(co_out, {co_base});
            for (const auto& l : co_layers) guard_output(co_out, {l});
            zone::write_image(out, co_out);
        } else if (*classify_cmd) {
            stage = "classify";
            const auto params = zone::load_classifier(cl_model);
            const auto e = zone::read_grid2d(cl_embedding);
            if (e.height() != 1) throw zone::ShapeError("embedding must be a single row");
            std::printf("%s\n", std::string(zone::to_string(zone::classify<float>(params, e.values()))).c_str());
        } else if (*train_cmd) {
            stage = "train-classifier";
            zone::BlobSplits splits;
            if (tr_fixture) {
                splits = zone::make_fixture_splits();
            } else {
                if (tr_train.empty() || tr_test.empty()) throw zone::Error("missing split: give --train and --test, or --fixture");
                splits = {zone::read_dataset(tr_train), zone::read_dataset(tr_test)};
            }
            zone::TrainConfig tc;
            tc.epochs = tr_epochs;
            tc.learning_rate = tr_lr;
            tc.seed = config.seed;
            const auto r = zone::train(splits.train, splits.test, tc);
            zone::save_classifier(r.params, tr_out);
            for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
                std::fprintf(stderr, "epoch %2zu loss %.6g\n", e + 1, r.epoch_loss[e]);
            std::printf("train_accuracy %.4f\ntest_accuracy %.4f\n", r.train_accuracy, r.test_accuracy);
        } else if (*metrics_cmd) {
            stage = "metrics";
            const auto a = zone::read_image(me_a), b = zone::read_image(me_b);
            std::optional<zone::BinaryMask> region;
            if (!me_mask.empty()) {
                region = zone::read_mask(me_mask);
                if (me_complement) region = region->complement();
            } else if (me_complement) {
                throw zone::Error("--complement needs --mask");
            }
            const auto m = zone::pixel_metrics(a, b, region ? &*region : nullptr);
            std::printf("l1=%g l2=%g\n", m.l1, m.l2);
        } else if (*upr_cmd) {
            stage = "upr";
            for (double v : zone::upr(upr_scores)) std::printf("%.4f\n", v);
        } else if (*fx_generate) {
            stage = "fixtures";
            fx.seed = config.seed;
            fx.steps = config.steps;
            fx.shape = fx_shape == "disk" ? zone::RegionShape::Disk : zone::RegionShape::Square;
            fx.action = action_arg(fx_action);
            if (!fx_generate->get_option("--centre-row")->count()) fx.centre_row = fx.size / 2;
            if (!fx_generate->get_option("--centre-col")->count()) fx.centre_col = fx.size / 2;
            std::optional<zone::Image> base;
            if (!fx_base.empty()) base = zone::read_image(fx_base);
            const auto fc = zone::generate_fixture(fx, base ? &*base : nullptr);
            if (fx_classifier) {
                const auto splits = zone::make_fixture_splits();
                zone::TrainConfig tc;
                tc.seed = config.seed;
                const auto r = zone::train(splits.train, splits.test, tc);
                zone::write_fixture(fc, fx_out, &r.params);
            } else {
                zone::write_fixture(fc, fx_out);
            }
            std::fprintf(stderr, "fixture written to %s (%zu px edit region)\n", fx_out.c_str(),
                         fc.ground_truth.count());
        } else if (*fx_dataset) {
            stage = "fixtures";
            const auto splits = zone::make_fixture_splits();
            fs::create_directories(ds_out);
            zone::write_dataset(splits.train, fs::path(ds_out) / "train");
            zone::write_dataset(splits.test, fs::path(ds_out) / "test");
        } else if (*run_cmd) {
            stage = "run";
            zone::RunInputs inputs = zone::read_run_manifest(run_manifest);
            zone::RunOptions opts;
            opts.instruction = run_instruction;
            opts.layer_name = run_layer;
            std::optional<zone::Image> original;
            if (!run_session.empty()) {
                opts.session = zone::load_session(run_session);
                if (fs::exists(run_out) && fs::equivalent(run_session, fs::path(run_out) / "session"))
                    throw zone::Error("--out would overwrite the input session");
            }
            if (!run_original.empty()) original = zone::read_image(run_original);
            else if (opts.session) original = opts.session->flatten();
            else throw zone::Error("--original is required without --session");
            const auto outcome = zone::run_edit(*original, inputs, config, std::move(opts));
            zone::write_run_outputs(outcome, config, run_instruction, run_out);
            print_summary(outcome);
            std::printf("%s\n", (fs::path(run_out) / "session").string().c_str());
        } else if (*se_list) {
            stage = "session";
            const auto s = zone::load_session(se_dir);
            for (std::size_t i = 0; i < s.layers().size(); ++i) {
                const auto& l = s.layers()[i];
                std::printf("%zu %s %s %zu \"%s\"\n", i, l.name.c_str(), std::string(zone::to_string(l.action)).c_str(),
                            l.mask.count(), l.instruction.c_str());
            }
            for (const auto& h : s.history())
                std::fprintf(stderr, "#%zu %s %s\n", h.seq, h.op.c_str(), h.layer.c_str());
        } else if (*se_remove || *se_reorder) {
            stage = "session";
            auto s = zone::load_session(se_dir);
            if (*se_remove) s.remove_layer(se_name);
            else s.reorder(se_name, se_index);
            if (fs::exists(se_out) && fs::equivalent(se_dir, se_out))
                throw zone::Error("--out must differ from the input session");
            zone::save_session(s, se_out);
        } else if (*se_flatten) {
            stage = "session";
            const auto s = zone::load_session(se_dir);
            zone::write_image(s.flatten(), se_out);
        }
    } catch (const zone::StageError& e) {
        std::fprintf(stderr, "zone: %s\n", e.what());
        return 1;
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "zone: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "zone: %s: %s\n", stage.c_str(), e.what());
        return 1;
    }
    return 0;
}

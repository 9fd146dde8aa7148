// Command-line front end. Everything runs through the C API, so this file is
// also the reference consumer of vsnet_c.h.
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vsnet/vsnet_c.h"

namespace {

using nlohmann::json;

struct ConfigHandle {
    vsn_config* ptr;
    ConfigHandle() : ptr(vsn_config_new()) {}
    ~ConfigHandle() { vsn_config_free(ptr); }
    ConfigHandle(const ConfigHandle&) = delete;
    ConfigHandle& operator=(const ConfigHandle&) = delete;
};

int fail() {
    std::fprintf(stderr, "error: %s\n", vsn_last_error());
    return 1;
}

int set_key(vsn_config* cfg, const std::string& key, const std::string& value) {
    if (vsn_config_set(cfg, key.c_str(), value.c_str()) != VSN_OK) return fail();
    return 0;
}

// The CLI trains at desk scale unless told otherwise; the library default is
// the full-size architecture.
int apply_desk_defaults(vsn_config* cfg) {
    if (set_key(cfg, "input_size", "64")) return 1;
    if (set_key(cfg, "stage_widths", "[8,16,32,64]")) return 1;
    return 0;
}

int apply_paper_scale(vsn_config* cfg) {
    if (set_key(cfg, "input_size", "256")) return 1;
    if (set_key(cfg, "stage_widths", "[64,128,256,512]")) return 1;
    if (set_key(cfg, "batch", "128")) return 1;
    return 0;
}

// Applies the keys of a JSON config file on top of the current settings.
// Unlisted keys keep their present values, so a partial file is fine.
int merge_config_file(vsn_config* cfg, const std::string& path) {
    std::ifstream is(path);
    if (!is.good()) {
        std::fprintf(stderr, "error: cannot open config file %s\n", path.c_str());
        return 1;
    }
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::exception& e) {
        std::fprintf(stderr, "error: %s: %s\n", path.c_str(), e.what());
        return 1;
    }
    if (!doc.is_object()) {
        std::fprintf(stderr, "error: %s: config must be a JSON object\n",
                     path.c_str());
        return 1;
    }
    for (const auto& [key, value] : doc.items()) {
        std::string text =
            value.is_string() ? value.get<std::string>() : value.dump();
        if (vsn_config_set(cfg, key.c_str(), text.c_str()) != VSN_OK) {
            std::fprintf(stderr, "error: %s: %s\n", path.c_str(), vsn_last_error());
            return 1;
        }
    }
    return 0;
}

std::string join_widths(const std::vector<int>& widths) {
    std::string out = "[";
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(widths[i]);
    }
    return out + "]";
}

// Shared model/run flags. Application order: desk defaults, config file,
// --paper-scale, then explicit flags, so the most specific setting wins.
struct CommonFlags {
    std::string config_path;
    bool paper_scale = false;
    int size = 0;
    std::vector<int> widths;
    int window = 0;
    std::uint64_t seed = 0;
    CLI::Option* size_opt = nullptr;
    CLI::Option* widths_opt = nullptr;
    CLI::Option* window_opt = nullptr;
    CLI::Option* seed_opt = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run config JSON file");
        cmd->add_flag("--paper-scale", paper_scale,
                      "full-scale architecture (256px, batch 128)");
        size_opt = cmd->add_option("--size", size, "frame edge length in pixels");
        widths_opt =
            cmd->add_option("--widths", widths, "encoder stage widths");
        window_opt =
            cmd->add_option("--window", window, "temporal pooling window length");
        seed_opt = cmd->add_option("--seed", seed, "run seed");
    }

    int apply(vsn_config* cfg) const {
        if (apply_desk_defaults(cfg)) return 1;
        if (!config_path.empty() && merge_config_file(cfg, config_path)) return 1;
        if (paper_scale && apply_paper_scale(cfg)) return 1;
        if (size_opt->count() &&
            set_key(cfg, "input_size", std::to_string(size)))
            return 1;
        if (widths_opt->count() &&
            set_key(cfg, "stage_widths", join_widths(widths)))
            return 1;
        if (window_opt->count() &&
            set_key(cfg, "arp_window", std::to_string(window)))
            return 1;
        if (seed_opt->count() && set_key(cfg, "seed", std::to_string(seed)))
            return 1;
        return 0;
    }
};

void progress(int epoch, double loss, double train_iou, double holdout_iou,
              double seconds, void*) {
    std::printf("epoch %3d  loss %.6f  train_iou %.4f  holdout_iou %.4f  %.1fs\n",
                epoch, loss, train_iou, holdout_iou, seconds);
    std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"VS-Net: video document saliency"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_out;
    int synth_videos = 6, synth_frames = 30, synth_size = 64;
    std::uint64_t synth_seed = 1;
    double doc_scale = 0.55, vel_x = 0.0, vel_y = 0.0, rot_rate = 0.0;
    double illumination = 0.0, noise = 0.0;
    int blur = 0, clutter = 0;
    bool partial = false;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--videos", synth_videos, "number of videos");
    synth->add_option("--frames", synth_frames, "frames per video");
    synth->add_option("--size", synth_size, "frame edge length in pixels");
    synth->add_option("--seed", synth_seed, "corpus seed");
    synth->add_option("--doc-scale", doc_scale, "document size relative to frame");
    synth->add_option("--velocity-x", vel_x, "horizontal drift per frame");
    synth->add_option("--velocity-y", vel_y, "vertical drift per frame");
    synth->add_option("--rotation-rate", rot_rate, "degrees per frame");
    synth->add_option("--illumination", illumination, "brightness drift strength");
    synth->add_option("--blur", blur, "motion blur kernel length");
    synth->add_option("--noise", noise, "sensor noise sigma");
    synth->add_flag("--partial", partial, "allow the document to leave the frame");
    synth->add_option("--clutter", clutter, "distractor rectangle count");

    // train
    auto* train = app.add_subcommand("train", "train a model");
    CommonFlags train_common;
    std::string train_data, train_out;
    train->add_option("--data", train_data, "dataset directory (synthesized when absent)");
    train->add_option("--out", train_out, "run output directory")->required();
    train_common.attach(train);
    int epochs = 0, batch = 0, videos = 0;
    double lr = 0.0, weight_decay = 0.0, test_fraction = 0.0;
    bool augment = false;
    auto* epochs_opt = train->add_option("--epochs", epochs, "training epochs");
    auto* batch_opt = train->add_option("--batch", batch, "windows per step");
    auto* lr_opt = train->add_option("--lr", lr, "learning rate");
    auto* wd_opt = train->add_option("--weight-decay", weight_decay, "L2 penalty");
    auto* videos_opt =
        train->add_option("--videos", videos, "synthetic videos when no --data");
    auto* tf_opt = train->add_option("--test-fraction", test_fraction,
                                     "holdout share of the dataset");
    auto* aug_opt = train->add_flag("--augment", augment, "train-time augmentation");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    CommonFlags eval_common;
    std::string eval_ckpt, eval_data, eval_out;
    bool refine = false;
    double fg = 0.8, bg = 0.2;
    int iters = 50;
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval->add_option("--data", eval_data, "dataset directory")->required();
    eval->add_option("--out", eval_out, "output directory")->required();
    eval_common.attach(eval);
    eval->add_flag("--propagate", refine, "refine saliency with label propagation");
    eval->add_option("--fg", fg, "foreground seed threshold");
    eval->add_option("--bg", bg, "background seed threshold");
    eval->add_option("--iters", iters, "propagation iterations");

    // bench
    auto* bench = app.add_subcommand("bench", "measure inference speed");
    CommonFlags bench_common;
    std::string bench_ckpt;
    int repeats = 50;
    bench->add_option("--checkpoint", bench_ckpt,
                      "model checkpoint (random weights when absent)");
    bench->add_option("--repeats", repeats, "timed forward passes");
    bench_common.attach(bench);

    // cv
    auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
    CommonFlags cv_common;
    std::string cv_data, cv_out;
    int folds = 5, cv_videos = 0, cv_epochs = 0;
    cv->add_option("--data", cv_data, "dataset directory (synthesized when absent)");
    cv->add_option("--out", cv_out, "output directory")->required();
    cv->add_option("--k", folds, "fold count");
    cv_common.attach(cv);
    auto* cv_videos_opt =
        cv->add_option("--videos", cv_videos, "synthetic videos when no --data");
    auto* cv_epochs_opt = cv->add_option("--epochs", cv_epochs, "training epochs");

    // propagate
    auto* prop = app.add_subcommand("propagate", "refine a saliency map file");
    std::string prop_in, prop_out;
    double prop_fg = 0.8, prop_bg = 0.2;
    int prop_iters = 50;
    prop->add_option("--in", prop_in, "input saliency image")->required();
    prop->add_option("--out", prop_out, "output image")->required();
    prop->add_option("--fg", prop_fg, "foreground seed threshold");
    prop->add_option("--bg", prop_bg, "background seed threshold");
    prop->add_option("--iters", prop_iters, "propagation iterations");

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        ConfigHandle cfg;
        if (apply_desk_defaults(cfg.ptr)) return 1;
        if (set_key(cfg.ptr, "input_size", std::to_string(synth_size))) return 1;
        if (set_key(cfg.ptr, "synth_videos", std::to_string(synth_videos)))
            return 1;
        if (set_key(cfg.ptr, "synth_frames", std::to_string(synth_frames)))
            return 1;
        if (set_key(cfg.ptr, "seed", std::to_string(synth_seed))) return 1;
        if (set_key(cfg.ptr, "synth_doc_scale", std::to_string(doc_scale)))
            return 1;
        if (set_key(cfg.ptr, "synth_velocity_x", std::to_string(vel_x))) return 1;
        if (set_key(cfg.ptr, "synth_velocity_y", std::to_string(vel_y))) return 1;
        if (set_key(cfg.ptr, "synth_rotation_rate", std::to_string(rot_rate)))
            return 1;
        if (set_key(cfg.ptr, "synth_illumination", std::to_string(illumination)))
            return 1;
        if (set_key(cfg.ptr, "synth_blur_len", std::to_string(blur))) return 1;
        if (set_key(cfg.ptr, "synth_noise_sigma", std::to_string(noise))) return 1;
        if (set_key(cfg.ptr, "synth_partial", partial ? "true" : "false"))
            return 1;
        if (set_key(cfg.ptr, "synth_clutter", std::to_string(clutter))) return 1;
        if (vsn_synth_dataset(cfg.ptr, synth_out.c_str()) != VSN_OK) return fail();
        std::printf("wrote %d videos to %s\n", synth_videos, synth_out.c_str());
        return 0;
    }

    if (train->parsed()) {
        ConfigHandle cfg;
        if (train_common.apply(cfg.ptr)) return 1;
        if (epochs_opt->count() &&
            set_key(cfg.ptr, "epochs", std::to_string(epochs)))
            return 1;
        if (batch_opt->count() && set_key(cfg.ptr, "batch", std::to_string(batch)))
            return 1;
        if (lr_opt->count() && set_key(cfg.ptr, "lr", std::to_string(lr)))
            return 1;
        if (wd_opt->count() &&
            set_key(cfg.ptr, "weight_decay", std::to_string(weight_decay)))
            return 1;
        if (videos_opt->count() &&
            set_key(cfg.ptr, "synth_videos", std::to_string(videos)))
            return 1;
        if (tf_opt->count() &&
            set_key(cfg.ptr, "test_fraction", std::to_string(test_fraction)))
            return 1;
        if (aug_opt->count() && set_key(cfg.ptr, "augment_enabled", "true"))
            return 1;
        const char* data = train_data.empty() ? nullptr : train_data.c_str();
        if (vsn_train(cfg.ptr, data, train_out.c_str(), progress, nullptr) !=
            VSN_OK)
            return fail();
        std::printf("checkpoints and trainlog.csv written to %s\n",
                    train_out.c_str());
        return 0;
    }

    if (eval->parsed()) {
        ConfigHandle cfg;
        if (eval_common.apply(cfg.ptr)) return 1;
        if (set_key(cfg.ptr, "propagate", refine ? "true" : "false")) return 1;
        if (set_key(cfg.ptr, "fg_thresh", std::to_string(fg))) return 1;
        if (set_key(cfg.ptr, "bg_thresh", std::to_string(bg))) return 1;
        if (set_key(cfg.ptr, "propagate_iters", std::to_string(iters))) return 1;
        double accuracy = 0.0, mean_iou = 0.0, mean_loss = 0.0;
        if (vsn_evaluate(cfg.ptr, eval_ckpt.c_str(), eval_data.c_str(),
                         eval_out.c_str(), &accuracy, &mean_iou,
                         &mean_loss) != VSN_OK)
            return fail();
        std::printf("accuracy: %.6f\n", accuracy);
        std::printf("mean_iou: %.6f\n", mean_iou);
        std::printf("mean_loss: %.6f\n", mean_loss);
        std::printf("metrics written to %s/metrics.csv\n", eval_out.c_str());
        return 0;
    }

    if (bench->parsed()) {
        ConfigHandle cfg;
        if (bench_common.apply(cfg.ptr)) return 1;
        double fps = 0.0, ms = 0.0;
        const char* ckpt = bench_ckpt.empty() ? nullptr : bench_ckpt.c_str();
        if (vsn_benchmark(cfg.ptr, ckpt, repeats, &fps, &ms) != VSN_OK)
            return fail();
        std::printf("fps: %.4f\n", fps);
        std::printf("ms/step: %.4f\n", ms);
        return 0;
    }

    if (cv->parsed()) {
        ConfigHandle cfg;
        if (cv_common.apply(cfg.ptr)) return 1;
        if (cv_videos_opt->count() &&
            set_key(cfg.ptr, "synth_videos", std::to_string(cv_videos)))
            return 1;
        if (cv_epochs_opt->count() &&
            set_key(cfg.ptr, "epochs", std::to_string(cv_epochs)))
            return 1;
        const char* data = cv_data.empty() ? nullptr : cv_data.c_str();
        double mean = 0.0, stddev = 0.0;
        if (vsn_cross_validate(cfg.ptr, folds, data, cv_out.c_str(), &mean,
                               &stddev) != VSN_OK)
            return fail();
        std::printf("mean_accuracy: %.6f\n", mean);
        std::printf("std_accuracy: %.6f\n", stddev);
        std::printf("fold results written to %s/cv.csv\n", cv_out.c_str());
        return 0;
    }

    if (prop->parsed()) {
        int no_seeds = 0;
        if (vsn_propagate_file(prop_in.c_str(), prop_out.c_str(), prop_fg,
                               prop_bg, prop_iters, &no_seeds) != VSN_OK)
            return fail();
        if (no_seeds)
            std::fprintf(stderr,
                         "warning: no seed pixels on either side of the "
                         "thresholds; map returned unchanged\n");
        std::printf("wrote %s\n", prop_out.c_str());
        return 0;
    }

    return 0;
}

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vsnet/vsnet_c.h"

#include "vsnet/harness.hpp"
#include "vsnet/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

struct vsn_config {
    vsnet::RunConfig run;
};

struct vsn_model {
    vsnet::RunConfig run;
    vsnet::VsNet net;
};

namespace {

thread_local std::string g_error;

void set_error(const std::string& message) { g_error = message; }

// files get their own exception type so the guard can map them to VSN_EIO
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const char* path, const char* what) {
    if (!path || !*path)
        throw std::invalid_argument(std::string(what) + ": empty path");
    if (!fs::exists(path))
        throw io_error(std::string(what) + ": no such file " + path);
}

template <typename F>
vsn_status guarded(F&& body) {
    try {
        body();
        return VSN_OK;
    } catch (const io_error& e) {
        set_error(e.what());
        return VSN_EIO;
    } catch (const std::invalid_argument& e) {
        set_error(e.what());
        return VSN_EINVAL;
    } catch (const std::logic_error& e) {
        set_error(e.what());
        return VSN_ESTATE;
    } catch (const fs::filesystem_error& e) {
        set_error(e.what());
        return VSN_EIO;
    } catch (const std::runtime_error& e) {
        set_error(e.what());
        return VSN_ERUNTIME;
    } catch (const std::exception& e) {
        set_error(e.what());
        return VSN_EUNKNOWN;
    } catch (...) {
        set_error("unknown failure");
        return VSN_EUNKNOWN;
    }
}

const vsnet::RunConfig& need_config(const vsn_config* cfg) {
    if (!cfg) throw std::invalid_argument("null config handle");
    return cfg->run;
}

vsnet::RunConfig with_overrides(const vsn_config* cfg, const char* data_dir,
                                const char* out_dir) {
    vsnet::RunConfig run = need_config(cfg);
    if (data_dir) run.data_dir = data_dir;
    if (out_dir) run.out_dir = out_dir;
    return run;
}

}  // namespace

extern "C" {

const char* vsn_last_error(void) { return g_error.c_str(); }

const char* vsn_version(void) { return "0.1.0"; }

void vsn_string_free(char* s) { std::free(s); }

vsn_config* vsn_config_new(void) { return new vsn_config{}; }

vsn_config* vsn_config_from_json(const char* text) {
    vsn_config* out = nullptr;
    vsn_status rc = guarded([&] {
        if (!text) throw std::invalid_argument("null config text");
        out = new vsn_config{vsnet::run_config_from_json(text)};
    });
    return rc == VSN_OK ? out : nullptr;
}

vsn_status vsn_config_set(vsn_config* cfg, const char* key, const char* value) {
    return guarded([&] {
        need_config(cfg);
        if (!key || !*key) throw std::invalid_argument("config set: empty key");
        if (!value) throw std::invalid_argument("config set: null value");

        json doc = json::parse(vsnet::run_config_to_json(cfg->run));
        static const std::set<std::string> raw_string_keys = {
            "data_dir", "out_dir", "arp_placement", "arp_variant"};
        if (raw_string_keys.count(key)) {
            doc[key] = std::string(value);
        } else {
            try {
                doc[key] = json::parse(value);
            } catch (const json::exception&) {
                doc[key] = std::string(value);
            }
        }
        // reparse revalidates; on throw the stored config stays untouched
        cfg->run = vsnet::run_config_from_json(doc.dump());
    });
}

vsn_status vsn_config_to_json(const vsn_config* cfg, char** out) {
    return guarded([&] {
        const vsnet::RunConfig& run = need_config(cfg);
        if (!out) throw std::invalid_argument("null output pointer");
        std::string text = vsnet::run_config_to_json(run);
        char* buf = static_cast<char*>(std::malloc(text.size() + 1));
        if (!buf) throw std::runtime_error("out of memory");
        std::memcpy(buf, text.c_str(), text.size() + 1);
        *out = buf;
    });
}

void vsn_config_free(vsn_config* cfg) { delete cfg; }

vsn_status vsn_synth_dataset(const vsn_config* cfg, const char* out_dir) {
    return guarded([&] {
        const vsnet::RunConfig& run = need_config(cfg);
        if (!out_dir || !*out_dir)
            throw std::invalid_argument("synth: empty output directory");
        vsnet::SynthSpec base = run.synth;
        base.height = run.model.input_size;
        base.width = run.model.input_size;
        vsnet::Dataset ds = vsnet::synth_dataset(base, run.synth_videos, run.seed);
        vsnet::save_midv_dir(ds, out_dir);
    });
}

vsn_status vsn_train(const vsn_config* cfg, const char* data_dir,
                     const char* out_dir, vsn_epoch_cb cb, void* user) {
    return guarded([&] {
        vsnet::RunConfig run = with_overrides(cfg, data_dir, out_dir);
        vsnet::EpochCallback hook;
        if (cb)
            hook = [cb, user](const vsnet::EpochStats& s) {
                cb(s.epoch, s.train_loss, s.train_iou, s.holdout_iou, s.seconds,
                   user);
            };
        vsnet::train(run, nullptr, hook);
    });
}

vsn_status vsn_evaluate(const vsn_config* cfg, const char* checkpoint,
                        const char* data_dir, const char* out_dir,
                        double* accuracy, double* mean_iou, double* mean_loss) {
    return guarded([&] {
        vsnet::RunConfig run = with_overrides(cfg, data_dir, out_dir);
        run.model.seed = run.seed;
        require_file(checkpoint, "evaluate");

        vsnet::VsNet model(run.model);
        vsnet::load_checkpoint(model, checkpoint);
        vsnet::Dataset ds = vsnet::obtain_dataset(run);

        std::string saliency_dir;
        if (!run.out_dir.empty())
            saliency_dir = (fs::path(run.out_dir) / "saliency").string();
        vsnet::MetricsReport report =
            vsnet::evaluate_model(model, ds, run, saliency_dir);

        if (!run.out_dir.empty()) {
            fs::create_directories(run.out_dir);
            std::ofstream os(fs::path(run.out_dir) / "metrics.csv",
                             std::ios::trunc);
            if (!os) throw io_error("evaluate: cannot write metrics.csv");
            os << report.to_csv();
        }

        double iou_sum = 0.0;
        for (const vsnet::FrameMetric& f : report.frames) iou_sum += f.iou;
        if (accuracy) *accuracy = report.accuracy;
        if (mean_iou)
            *mean_iou = report.frames.empty()
                            ? 0.0
                            : iou_sum / static_cast<double>(report.frames.size());
        if (mean_loss) *mean_loss = report.mean_loss;
    });
}

vsn_status vsn_cross_validate(const vsn_config* cfg, int k, const char* data_dir,
                              const char* out_dir, double* mean_accuracy,
                              double* std_accuracy) {
    return guarded([&] {
        vsnet::RunConfig run = with_overrides(cfg, data_dir, out_dir);
        vsnet::FoldReport report = vsnet::cross_validate(run, k);
        if (mean_accuracy) *mean_accuracy = report.mean_accuracy;
        if (std_accuracy) *std_accuracy = report.std_accuracy;
    });
}

vsn_model* vsn_model_build(const vsn_config* cfg) {
    vsn_model* out = nullptr;
    vsn_status rc = guarded([&] {
        vsnet::RunConfig run = need_config(cfg);
        run.model.seed = run.seed;
        out = new vsn_model{run, vsnet::VsNet(run.model)};
    });
    return rc == VSN_OK ? out : nullptr;
}

vsn_model* vsn_model_load(const vsn_config* cfg, const char* checkpoint) {
    vsn_model* out = nullptr;
    vsn_status rc = guarded([&] {
        vsnet::RunConfig run = need_config(cfg);
        run.model.seed = run.seed;
        require_file(checkpoint, "model load");
        vsn_model* m = new vsn_model{run, vsnet::VsNet(run.model)};
        try {
            vsnet::load_checkpoint(m->net, checkpoint);
        } catch (...) {
            delete m;
            throw;
        }
        out = m;
    });
    return rc == VSN_OK ? out : nullptr;
}

vsn_status vsn_model_save(const vsn_model* model, const char* path) {
    return guarded([&] {
        if (!model) throw std::invalid_argument("null model handle");
        if (!path || !*path) throw std::invalid_argument("save: empty path");
        vsnet::save_checkpoint(model->net, path);
    });
}

vsn_status vsn_model_param_count(const vsn_model* model, uint64_t* count) {
    return guarded([&] {
        if (!model) throw std::invalid_argument("null model handle");
        if (!count) throw std::invalid_argument("null output pointer");
        *count = model->net.param_count();
    });
}

vsn_status vsn_model_forward_image(const vsn_model* model, const char* image_path,
                                   const char* saliency_path) {
    return guarded([&] {
        if (!model) throw std::invalid_argument("null model handle");
        require_file(image_path, "forward");
        if (!saliency_path || !*saliency_path)
            throw std::invalid_argument("forward: empty output path");

        vsnet::Image img = vsnet::read_image(image_path);
        const vsnet::VsNetConfig& mc = model->run.model;
        if (img.h != mc.input_size || img.w != mc.input_size)
            throw std::invalid_argument(
                "forward: image is " + std::to_string(img.w) + "x" +
                std::to_string(img.h) + " but the model wants " +
                std::to_string(mc.input_size) + "x" +
                std::to_string(mc.input_size));
        if (img.channels == 1 && mc.input_channels == 3) {
            vsnet::Image rgb = vsnet::make_image(img.h, img.w, 3);
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x)
                    for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = img.at(y, x, 0);
            img = std::move(rgb);
        }
        if (img.channels != mc.input_channels)
            throw std::invalid_argument("forward: channel count mismatch");

        auto out = model->net.forward_frame(vsnet::image_to_tensor(img), false, 0);
        vsnet::write_png(saliency_path, vsnet::tensor_to_image(out.saliency));
    });
}

void vsn_model_free(vsn_model* model) { delete model; }

vsn_status vsn_benchmark(const vsn_config* cfg, const char* checkpoint,
                         int repeats, double* fps, double* ms_per_step) {
    return guarded([&] {
        vsnet::RunConfig run = need_config(cfg);
        run.model.seed = run.seed;
        vsnet::VsNet model(run.model);
        if (checkpoint) {
            require_file(checkpoint, "benchmark");
            vsnet::load_checkpoint(model, checkpoint);
        }
        std::vector<vsnet::Tensor> window;
        for (int t = 0; t < run.model.arp_window; ++t)
            window.push_back(vsnet::randn(
                {1, run.model.input_channels, run.model.input_size,
                 run.model.input_size},
                vsnet::mix_seed(run.seed, 0x62 + static_cast<std::uint64_t>(t)),
                0.25));
        vsnet::BenchResult result = vsnet::benchmark_model(model, window, repeats);
        if (fps) *fps = result.fps;
        if (ms_per_step) *ms_per_step = result.ms_per_step;
    });
}

vsn_status vsn_propagate_file(const char* in_path, const char* out_path,
                              double fg_thresh, double bg_thresh, int iterations,
                              int* no_seeds) {
    return guarded([&] {
        require_file(in_path, "propagate");
        if (!out_path || !*out_path)
            throw std::invalid_argument("propagate: empty output path");
        vsnet::Image img = vsnet::read_image(in_path);
        if (img.channels != 1)
            throw std::invalid_argument(
                "propagate: want a single-channel saliency image");
        vsnet::PropagateResult result =
            vsnet::propagate_labels(img, fg_thresh, bg_thresh, iterations);
        vsnet::write_png(out_path, result.map);
        if (no_seeds) *no_seeds = result.no_seeds ? 1 : 0;
    });
}

}  // extern "C"

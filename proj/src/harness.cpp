#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "vsnet/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vsnet {

namespace {

// seed salt bases; build-time model init stays below 1000
constexpr std::uint64_t kSaltShuffle = 1000;
constexpr std::uint64_t kSaltSynth = 10000;
constexpr std::uint64_t kSaltAugment = 100000;
constexpr std::uint64_t kSaltForward = 200000;
constexpr std::uint64_t kSaltNoise = 300000;

std::string frame_stem(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03d", index);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

ArpPlacement placement_from_string(const std::string& s) {
    if (s == "bottleneck") return ArpPlacement::bottleneck;
    if (s == "input_frames") return ArpPlacement::input_frames;
    throw std::invalid_argument("run config: bad arp_placement " + s);
}

std::string placement_to_string(ArpPlacement p) {
    return p == ArpPlacement::bottleneck ? "bottleneck" : "input_frames";
}

ArpVariant variant_from_string(const std::string& s) {
    if (s == "harmonic") return ArpVariant::harmonic;
    if (s == "simple") return ArpVariant::simple;
    throw std::invalid_argument("run config: bad arp_variant " + s);
}

std::string variant_to_string(ArpVariant v) {
    return v == ArpVariant::harmonic ? "harmonic" : "simple";
}

}  // namespace

void validate_run_config(const RunConfig& cfg) {
    validate_config(cfg.model);
    // lr 0 is allowed: it is the standard no-op training diagnostic
    if (cfg.lr < 0.0) throw std::invalid_argument("run config: negative lr");
    if (cfg.weight_decay < 0.0)
        throw std::invalid_argument("run config: negative weight_decay");
    if (cfg.epochs < 1) throw std::invalid_argument("run config: epochs must be >= 1");
    if (cfg.batch < 1) throw std::invalid_argument("run config: batch must be >= 1");
    if (cfg.loss_alpha < 0.0)
        throw std::invalid_argument("run config: negative loss_alpha");
    if (cfg.window_stride < 1)
        throw std::invalid_argument("run config: window_stride must be >= 1");
    if (cfg.synth_videos < 0)
        throw std::invalid_argument("run config: negative synth_videos");
    if (cfg.test_fraction < 0.0 || cfg.test_fraction > 1.0)
        throw std::invalid_argument("run config: bad test_fraction");
    if (cfg.fg_thresh <= cfg.bg_thresh)
        throw std::invalid_argument("run config: fg_thresh must exceed bg_thresh");
    if (cfg.propagate_iters < 0)
        throw std::invalid_argument("run config: negative propagate_iters");
}

RunConfig run_config_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("run config: malformed JSON: ") +
                                    e.what());
    }
    if (!doc.is_object()) throw std::invalid_argument("run config: not an object");

    static const std::set<std::string> known = {
        "input_size", "input_channels", "stage_widths", "decoder_width_multiplier",
        "dropout_p", "vae_enabled", "kl_weight", "arp_window", "arp_placement",
        "arp_variant", "dilation_rate",
        "lr", "weight_decay", "batch", "epochs", "loss_alpha", "window_stride",
        "augment_enabled", "augment_max_shift", "augment_max_rotation_deg",
        "augment_noise_sigma",
        "data_dir", "synth_videos", "synth_frames", "synth_doc_scale",
        "synth_velocity_x", "synth_velocity_y", "synth_rotation_rate",
        "synth_illumination", "synth_blur_len", "synth_noise_sigma", "synth_partial",
        "synth_clutter",
        "test_fraction", "seed", "out_dir", "early_stop_train_iou",
        "early_stop_holdout_iou",
        "propagate", "fg_thresh", "bg_thresh", "propagate_iters",
    };
    for (const auto& [key, value] : doc.items())
        if (!known.count(key))
            throw std::invalid_argument("run config: unknown key \"" + key + "\"");

    RunConfig cfg;
    try {
        auto get = [&](const char* key, auto& field) {
            if (doc.contains(key)) field = doc[key].get<std::decay_t<decltype(field)>>();
        };
        get("input_size", cfg.model.input_size);
        get("input_channels", cfg.model.input_channels);
        get("stage_widths", cfg.model.stage_widths);
        get("decoder_width_multiplier", cfg.model.decoder_width_multiplier);
        get("dropout_p", cfg.model.dropout_p);
        get("vae_enabled", cfg.model.vae_enabled);
        get("kl_weight", cfg.model.kl_weight);
        get("arp_window", cfg.model.arp_window);
        if (doc.contains("arp_placement"))
            cfg.model.arp_placement =
                placement_from_string(doc["arp_placement"].get<std::string>());
        if (doc.contains("arp_variant"))
            cfg.model.arp_variant =
                variant_from_string(doc["arp_variant"].get<std::string>());
        get("dilation_rate", cfg.model.dilation_rate);

        get("lr", cfg.lr);
        get("weight_decay", cfg.weight_decay);
        get("batch", cfg.batch);
        get("epochs", cfg.epochs);
        get("loss_alpha", cfg.loss_alpha);
        get("window_stride", cfg.window_stride);

        get("augment_enabled", cfg.augment_enabled);
        get("augment_max_shift", cfg.augment.max_shift);
        get("augment_max_rotation_deg", cfg.augment.max_rotation_deg);
        get("augment_noise_sigma", cfg.augment.noise_sigma);

        get("data_dir", cfg.data_dir);
        get("synth_videos", cfg.synth_videos);
        get("synth_frames", cfg.synth.frame_count);
        get("synth_doc_scale", cfg.synth.doc_scale);
        get("synth_velocity_x", cfg.synth.velocity_x);
        get("synth_velocity_y", cfg.synth.velocity_y);
        get("synth_rotation_rate", cfg.synth.rotation_rate);
        get("synth_illumination", cfg.synth.illumination);
        get("synth_blur_len", cfg.synth.blur_len);
        get("synth_noise_sigma", cfg.synth.noise_sigma);
        get("synth_partial", cfg.synth.partial);
        get("synth_clutter", cfg.synth.clutter);

        get("test_fraction", cfg.test_fraction);
        get("seed", cfg.seed);
        get("out_dir", cfg.out_dir);
        get("early_stop_train_iou", cfg.early_stop_train_iou);
        get("early_stop_holdout_iou", cfg.early_stop_holdout_iou);

        get("propagate", cfg.propagate);
        get("fg_thresh", cfg.fg_thresh);
        get("bg_thresh", cfg.bg_thresh);
        get("propagate_iters", cfg.propagate_iters);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("run config: bad value type: ") +
                                    e.what());
    }
    cfg.model.seed = cfg.seed;  // one seed drives everything
    validate_run_config(cfg);
    return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
    json doc;
    doc["input_size"] = cfg.model.input_size;
    doc["input_channels"] = cfg.model.input_channels;
    doc["stage_widths"] = cfg.model.stage_widths;
    doc["decoder_width_multiplier"] = cfg.model.decoder_width_multiplier;
    doc["dropout_p"] = cfg.model.dropout_p;
    doc["vae_enabled"] = cfg.model.vae_enabled;
    doc["kl_weight"] = cfg.model.kl_weight;
    doc["arp_window"] = cfg.model.arp_window;
    doc["arp_placement"] = placement_to_string(cfg.model.arp_placement);
    doc["arp_variant"] = variant_to_string(cfg.model.arp_variant);
    doc["dilation_rate"] = cfg.model.dilation_rate;
    doc["lr"] = cfg.lr;
    doc["weight_decay"] = cfg.weight_decay;
    doc["batch"] = cfg.batch;
    doc["epochs"] = cfg.epochs;
    doc["loss_alpha"] = cfg.loss_alpha;
    doc["window_stride"] = cfg.window_stride;
    doc["augment_enabled"] = cfg.augment_enabled;
    doc["augment_max_shift"] = cfg.augment.max_shift;
    doc["augment_max_rotation_deg"] = cfg.augment.max_rotation_deg;
    doc["augment_noise_sigma"] = cfg.augment.noise_sigma;
    doc["data_dir"] = cfg.data_dir;
    doc["synth_videos"] = cfg.synth_videos;
    doc["synth_frames"] = cfg.synth.frame_count;
    doc["synth_doc_scale"] = cfg.synth.doc_scale;
    doc["synth_velocity_x"] = cfg.synth.velocity_x;
    doc["synth_velocity_y"] = cfg.synth.velocity_y;
    doc["synth_rotation_rate"] = cfg.synth.rotation_rate;
    doc["synth_illumination"] = cfg.synth.illumination;
    doc["synth_blur_len"] = cfg.synth.blur_len;
    doc["synth_noise_sigma"] = cfg.synth.noise_sigma;
    doc["synth_partial"] = cfg.synth.partial;
    doc["synth_clutter"] = cfg.synth.clutter;
    doc["test_fraction"] = cfg.test_fraction;
    doc["seed"] = cfg.seed;
    doc["out_dir"] = cfg.out_dir;
    doc["early_stop_train_iou"] = cfg.early_stop_train_iou;
    doc["early_stop_holdout_iou"] = cfg.early_stop_holdout_iou;
    doc["propagate"] = cfg.propagate;
    doc["fg_thresh"] = cfg.fg_thresh;
    doc["bg_thresh"] = cfg.bg_thresh;
    doc["propagate_iters"] = cfg.propagate_iters;
    return doc.dump(2) + "\n";
}

std::string train_log_to_csv(const TrainLog& log) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,loss,train_iou,holdout_iou,seconds\n";
    for (const EpochStats& e : log)
        os << e.epoch << ',' << e.train_loss << ',' << e.train_iou << ','
           << e.holdout_iou << ',' << e.seconds << '\n';
    return os.str();
}

Dataset synth_dataset(SynthSpec base, int videos, std::uint64_t seed) {
    if (videos < 1) throw std::invalid_argument("synth_dataset: need at least 1 video");
    constexpr SceneAttribute kCycle[5] = {SceneAttribute::TS, SceneAttribute::KS,
                                          SceneAttribute::HS, SceneAttribute::PS,
                                          SceneAttribute::CS};
    Dataset ds;
    for (int v = 0; v < videos; ++v) {
        SynthSpec spec = base;
        spec.seed = mix_seed(seed, kSaltSynth + static_cast<std::uint64_t>(v));
        spec.attribute = kCycle[v % 5];
        // per-video placement variety
        RandomStream rng(mix_seed(spec.seed, 0x706c));
        double span = 0.12 * std::min(spec.height, spec.width);
        spec.center_offset_x = base.center_offset_x + (2 * rng.next_uniform() - 1) * span;
        spec.center_offset_y = base.center_offset_y + (2 * rng.next_uniform() - 1) * span;
        VideoSample sample = synth_video(spec);
        char id[16];
        std::snprintf(id, sizeof(id), "%s%02d", attribute_name(spec.attribute).c_str(),
                      v);
        sample.id = id;
        ds.push_back(std::move(sample));
    }
    return ds;
}

Dataset obtain_dataset(const RunConfig& cfg) {
    if (!cfg.data_dir.empty()) return load_midv_dir(cfg.data_dir);
    SynthSpec base = cfg.synth;
    base.height = cfg.model.input_size;  // synthesized data must fit the model
    base.width = cfg.model.input_size;
    return synth_dataset(base, cfg.synth_videos, cfg.seed);
}

namespace {

struct WindowRef {
    std::size_t video = 0;
    int start = 0;  // first frame index of the T-frame window
};

void check_dataset_shape(const Dataset& ds, const VsNetConfig& model) {
    for (const VideoSample& v : ds) {
        if (v.frames.empty()) throw std::invalid_argument("dataset: empty video " + v.id);
        for (const Image& f : v.frames)
            if (f.h != model.input_size || f.w != model.input_size ||
                f.channels != model.input_channels)
                throw std::invalid_argument("dataset: video " + v.id +
                                            " does not match the model input size");
    }
}

// stack frame t of each window in [lo, hi) into one {B,C,H,W} batch
Tensor batch_frames_tensor(const Dataset& ds, const std::vector<WindowRef>& refs,
                           std::size_t lo, std::size_t hi, int t, int size,
                           int channels) {
    std::size_t plane = static_cast<std::size_t>(size) * size;
    std::size_t per = static_cast<std::size_t>(channels) * plane;
    std::vector<double> buf((hi - lo) * per);
    for (std::size_t b = lo; b < hi; ++b) {
        const VideoSample& video = ds[refs[b].video];
        const Image& img = video.frames[static_cast<std::size_t>(refs[b].start + t)];
        double* dst = buf.data() + (b - lo) * per;
        for (int c = 0; c < channels; ++c)
            for (std::size_t p = 0; p < plane; ++p)
                dst[c * plane + p] = img.data[p * channels + c];
    }
    return from_data({static_cast<int>(hi - lo), channels, size, size}, std::move(buf));
}

Tensor batch_target_tensor(const Dataset& ds, const std::vector<WindowRef>& refs,
                           std::size_t lo, std::size_t hi, int center_off, int size) {
    std::size_t plane = static_cast<std::size_t>(size) * size;
    std::vector<double> buf((hi - lo) * plane);
    for (std::size_t b = lo; b < hi; ++b) {
        const VideoSample& video = ds[refs[b].video];
        const Mask& m = video.masks[static_cast<std::size_t>(refs[b].start + center_off)];
        for (std::size_t p = 0; p < plane; ++p) buf[(b - lo) * plane + p] = m.data[p];
    }
    return from_data({static_cast<int>(hi - lo), 1, size, size}, std::move(buf));
}

// mean over per-sample mask IoUs; samples with an empty union are skipped
double batch_mean_iou(const Tensor& saliency, const Tensor& target) {
    const Shape& s = saliency.shape();
    std::size_t n = static_cast<std::size_t>(s[0]);
    std::size_t plane = saliency.numel() / n;
    double sum = 0.0;
    std::size_t scored = 0;
    for (std::size_t b = 0; b < n; ++b) {
        std::vector<std::uint8_t> pred(plane), gt(plane);
        for (std::size_t p = 0; p < plane; ++p) {
            pred[p] = saliency.at(b * plane + p) > 0.5 ? 1 : 0;
            gt[p] = target.at(b * plane + p) > 0.5 ? 1 : 0;
        }
        try {
            sum += iou_metric(pred, gt);
            ++scored;
        } catch (const std::domain_error&) {
        }
    }
    return scored ? sum / static_cast<double>(scored) : 0.0;
}

// augmentation: one rigid map per window (all frames plus the center mask),
// per-frame noise on top
void augment_window(std::vector<Image>& frames, Mask& center_mask,
                    const AugmentParams& params, std::uint64_t seed) {
    RandomStream rng(mix_seed(seed, 0x6177));
    if (params.max_shift > 0.0 || params.max_rotation_deg > 0.0) {
        double sx = (2.0 * rng.next_uniform() - 1.0) * params.max_shift;
        double sy = (2.0 * rng.next_uniform() - 1.0) * params.max_shift;
        double rot = (2.0 * rng.next_uniform() - 1.0) * params.max_rotation_deg;
        for (std::size_t t = 0; t < frames.size(); ++t) {
            auto [f, m] = rigid_transform(frames[t], center_mask, sx, sy, rot);
            frames[t] = std::move(f);
            if (t + 1 == frames.size()) center_mask = std::move(m);
        }
    }
    if (params.noise_sigma > 0.0) {
        for (std::size_t t = 0; t < frames.size(); ++t) {
            RandomStream noise(mix_seed(seed, kSaltNoise + t));
            for (double& v : frames[t].data) {
                v += params.noise_sigma * noise.next_gaussian();
                v = std::clamp(v, 0.0, 1.0);
            }
        }
    }
}

// inference-mode mean IoU over every frame of every video, batched
double holdout_mean_iou(const VsNet& model, const Dataset& ds, const RunConfig& cfg) {
    const int T = cfg.model.arp_window;
    const int size = cfg.model.input_size;
    const int channels = cfg.model.input_channels;
    double sum = 0.0;
    std::size_t scored = 0;

    for (const VideoSample& video : ds) {
        int F = static_cast<int>(video.frames.size());
        for (int f0 = 0; f0 < F; f0 += cfg.batch) {
            int B = std::min(cfg.batch, F - f0);
            std::vector<Tensor> window;
            window.reserve(T);
            std::size_t plane = static_cast<std::size_t>(size) * size;
            std::size_t per = static_cast<std::size_t>(channels) * plane;
            for (int t = 0; t < T; ++t) {
                std::vector<double> buf(static_cast<std::size_t>(B) * per);
                for (int b = 0; b < B; ++b) {
                    int idx = std::clamp(f0 + b - T / 2 + t, 0, F - 1);
                    const Image& img = video.frames[static_cast<std::size_t>(idx)];
                    double* dst = buf.data() + static_cast<std::size_t>(b) * per;
                    for (int c = 0; c < channels; ++c)
                        for (std::size_t p = 0; p < plane; ++p)
                            dst[c * plane + p] = img.data[p * channels + c];
                }
                window.push_back(from_data({B, channels, size, size}, std::move(buf)));
            }
            auto out = model.forward_window(window, false, 0);
            for (int b = 0; b < B; ++b) {
                const Mask& m = video.masks[static_cast<std::size_t>(f0 + b)];
                std::vector<std::uint8_t> pred(plane);
                for (std::size_t p = 0; p < plane; ++p)
                    pred[p] = out.saliency.at(static_cast<std::size_t>(b) * plane + p) > 0.5;
                try {
                    sum += iou_metric(pred, m.data);
                    ++scored;
                } catch (const std::domain_error&) {
                }
            }
        }
    }
    return scored ? sum / static_cast<double>(scored) : 0.0;
}

}  // namespace

TrainResult train_model(VsNet& model, const Dataset& train_set, const Dataset& holdout,
                        const RunConfig& cfg, const EpochCallback& cb) {
    validate_run_config(cfg);
    if (!model.built()) throw std::logic_error("train_model: model not built");
    if (train_set.empty()) throw std::invalid_argument("train_model: empty dataset");
    check_dataset_shape(train_set, cfg.model);
    if (!holdout.empty()) check_dataset_shape(holdout, cfg.model);

    const int T = cfg.model.arp_window;
    const int size = cfg.model.input_size;
    const int channels = cfg.model.input_channels;

    std::vector<WindowRef> samples;
    for (std::size_t v = 0; v < train_set.size(); ++v) {
        int F = static_cast<int>(train_set[v].frames.size());
        for (int s = 0; s + T <= F; s += cfg.window_stride)
            samples.push_back({v, s});
    }
    if (samples.empty())
        throw std::invalid_argument("train_model: no length-" + std::to_string(T) +
                                    " windows in the dataset");

    AdamConfig acfg;
    acfg.lr = cfg.lr;
    acfg.weight_decay = cfg.weight_decay;
    Adam opt(model.parameters(), acfg);

    LossWeights weights;
    weights.alpha = cfg.loss_alpha;
    weights.beta = cfg.model.kl_weight;

    if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

    TrainResult result;
    result.best_holdout_iou = -1.0;
    std::uint64_t global_step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();

        // seeded in-place shuffle; epoch order is part of the run's identity
        {
            RandomStream rng(mix_seed(cfg.seed, kSaltShuffle + epoch));
            for (std::size_t i = samples.size(); i > 1; --i)
                std::swap(samples[i - 1], samples[rng.next_below(i)]);
        }

        double loss_sum = 0.0, iou_sum = 0.0;
        std::size_t batches = 0;

        for (std::size_t lo = 0; lo < samples.size(); lo += cfg.batch, ++global_step) {
            std::size_t hi = std::min(samples.size(), lo + cfg.batch);

            std::vector<Tensor> window;
            Tensor target;
            if (cfg.augment_enabled) {
                // materialize, transform, then stack
                std::size_t B = hi - lo;
                std::size_t plane = static_cast<std::size_t>(size) * size;
                std::size_t per = static_cast<std::size_t>(channels) * plane;
                std::vector<std::vector<double>> frame_bufs(
                    T, std::vector<double>(B * per));
                std::vector<double> target_buf(B * plane);
                for (std::size_t b = lo; b < hi; ++b) {
                    const VideoSample& video = train_set[samples[b].video];
                    std::vector<Image> frames;
                    for (int t = 0; t < T; ++t)
                        frames.push_back(
                            video.frames[static_cast<std::size_t>(samples[b].start + t)]);
                    Mask mask =
                        video.masks[static_cast<std::size_t>(samples[b].start + T / 2)];
                    augment_window(
                        frames, mask, cfg.augment,
                        mix_seed(mix_seed(cfg.seed, kSaltAugment + global_step), b - lo));
                    for (int t = 0; t < T; ++t) {
                        double* dst = frame_bufs[t].data() + (b - lo) * per;
                        for (int c = 0; c < channels; ++c)
                            for (std::size_t p = 0; p < plane; ++p)
                                dst[c * plane + p] = frames[t].data[p * channels + c];
                    }
                    for (std::size_t p = 0; p < plane; ++p)
                        target_buf[(b - lo) * plane + p] = mask.data[p];
                }
                for (int t = 0; t < T; ++t)
                    window.push_back(from_data(
                        {static_cast<int>(B), channels, size, size},
                        std::move(frame_bufs[t])));
                target = from_data({static_cast<int>(B), 1, size, size},
                                   std::move(target_buf));
            } else {
                for (int t = 0; t < T; ++t)
                    window.push_back(
                        batch_frames_tensor(train_set, samples, lo, hi, t, size, channels));
                target = batch_target_tensor(train_set, samples, lo, hi, T / 2, size);
            }

            auto out = model.forward_window(window, true,
                                            mix_seed(cfg.seed, kSaltForward + global_step));
            Tensor loss = total_loss(out.saliency, target, weights, out.mu, out.logvar);
            double lv = loss.item();
            if (!std::isfinite(lv))
                throw std::runtime_error(
                    "train_model: non-finite loss at epoch " + std::to_string(epoch) +
                    " step " + std::to_string(global_step) +
                    " (check lr and data ranges)");
            loss_sum += lv;
            iou_sum += batch_mean_iou(out.saliency, target);
            ++batches;

            backward(loss);
            opt.step();
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(batches);
        stats.train_iou = iou_sum / static_cast<double>(batches);
        stats.holdout_iou =
            holdout.empty() ? 0.0 : holdout_mean_iou(model, holdout, cfg);
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                      t0)
                            .count();
        result.log.push_back(stats);
        result.epochs_run = epoch + 1;
        if (cb) cb(stats);

        if (!cfg.out_dir.empty()) {
            result.last_checkpoint = (fs::path(cfg.out_dir) / "last.vsnt").string();
            save_checkpoint(model, result.last_checkpoint);
            double score = holdout.empty() ? stats.train_iou : stats.holdout_iou;
            if (score > result.best_holdout_iou) {
                result.best_holdout_iou = score;
                result.best_checkpoint = (fs::path(cfg.out_dir) / "best.vsnt").string();
                save_checkpoint(model, result.best_checkpoint);
            }
        } else {
            double score = holdout.empty() ? stats.train_iou : stats.holdout_iou;
            result.best_holdout_iou = std::max(result.best_holdout_iou, score);
        }

        bool stop_train = cfg.early_stop_train_iou > 0.0 &&
                          stats.train_iou >= cfg.early_stop_train_iou;
        bool stop_holdout = cfg.early_stop_holdout_iou > 0.0 && !holdout.empty() &&
                            stats.holdout_iou >= cfg.early_stop_holdout_iou;
        if (stop_train || stop_holdout) break;
    }
    return result;
}

TrainResult train(const RunConfig& base, VsNet* out_model, const EpochCallback& cb) {
    RunConfig cfg = base;
    cfg.model.seed = cfg.seed;  // run.json must reproduce the run
    validate_run_config(cfg);
    Dataset dataset = obtain_dataset(cfg);
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

    Dataset train_set, holdout;
    if (dataset.size() >= 2 && cfg.test_fraction > 0.0) {
        std::tie(train_set, holdout) = split_dataset(dataset, cfg.test_fraction, cfg.seed);
    } else {
        train_set = std::move(dataset);
    }

    VsNet model(cfg.model);
    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        write_text(fs::path(cfg.out_dir) / "run.json", run_config_to_json(cfg));
    }
    TrainResult result = train_model(model, train_set, holdout, cfg, cb);
    if (!cfg.out_dir.empty())
        write_text(fs::path(cfg.out_dir) / "trainlog.csv", train_log_to_csv(result.log));
    if (out_model) *out_model = std::move(model);
    return result;
}

MetricsReport evaluate_model(const VsNet& model, const Dataset& dataset,
                             const RunConfig& cfg, const std::string& saliency_dir) {
    if (!model.built()) throw std::logic_error("evaluate_model: model not built");
    check_dataset_shape(dataset, cfg.model);
    const int T = cfg.model.arp_window;

    LossWeights weights;
    weights.alpha = cfg.loss_alpha;
    weights.beta = cfg.model.kl_weight;

    MetricsReport report;
    std::vector<double> ious;
    double loss_sum = 0.0;

    for (const VideoSample& video : dataset) {
        int F = static_cast<int>(video.frames.size());
        std::vector<Tensor> frame_tensors;
        frame_tensors.reserve(video.frames.size());
        for (const Image& img : video.frames) frame_tensors.push_back(image_to_tensor(img));

        for (int f = 0; f < F; ++f) {
            std::vector<Tensor> window;
            window.reserve(T);
            for (int t = 0; t < T; ++t)
                window.push_back(frame_tensors[static_cast<std::size_t>(
                    std::clamp(f - T / 2 + t, 0, F - 1))]);
            auto out = model.forward_window(window, false, 0);

            Tensor saliency = out.saliency;
            if (cfg.propagate) {
                PropagateResult refined =
                    propagate_labels(tensor_to_image(saliency), cfg.fg_thresh,
                                     cfg.bg_thresh, cfg.propagate_iters);
                saliency = image_to_tensor(refined.map);
            }

            std::string frame_id = video.id + "/" + frame_stem(f);
            if (!saliency_dir.empty()) {
                fs::path dir = fs::path(saliency_dir) / video.id;
                fs::create_directories(dir);
                write_png((dir / (frame_stem(f) + ".png")).string(),
                          tensor_to_image(saliency));
            }

            Tensor gt = mask_to_tensor(video.masks[static_cast<std::size_t>(f)]);
            Tensor loss = total_loss(saliency, gt, weights, out.mu, out.logvar);
            std::vector<std::uint8_t> pred = binarize(saliency);
            try {
                double iou = iou_metric(pred, video.masks[static_cast<std::size_t>(f)].data);
                report.frames.push_back({frame_id, iou, loss.item()});
                ious.push_back(iou);
                loss_sum += loss.item();
            } catch (const std::domain_error&) {
                report.skipped.push_back(frame_id);
            }
        }
    }

    if (!ious.empty()) {
        report.accuracy = detection_accuracy(ious, 0.5);
        report.mean_loss = loss_sum / static_cast<double>(ious.size());
    }
    return report;
}

PropagateResult propagate_labels(const Image& saliency, double fg_thresh,
                                 double bg_thresh, int iterations) {
    if (saliency.channels != 1)
        throw std::invalid_argument("propagate_labels: want a single-channel map");
    if (fg_thresh <= bg_thresh)
        throw std::invalid_argument("propagate_labels: fg_thresh must exceed bg_thresh");
    if (iterations < 0)
        throw std::invalid_argument("propagate_labels: negative iteration count");
    for (double v : saliency.data)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("propagate_labels: values must be in [0, 1]");

    const int h = saliency.h, w = saliency.w;
    std::vector<std::uint8_t> pinned(saliency.data.size(), 0);
    std::size_t fg = 0, bg = 0;
    PropagateResult result;
    result.map = saliency;
    for (std::size_t i = 0; i < saliency.data.size(); ++i) {
        if (saliency.data[i] >= fg_thresh) {
            pinned[i] = 1;
            result.map.data[i] = 1.0;
            ++fg;
        } else if (saliency.data[i] <= bg_thresh) {
            pinned[i] = 1;
            result.map.data[i] = 0.0;
            ++bg;
        }
    }
    if (fg == 0 && bg == 0) {
        result.map = saliency;  // nothing to anchor the relaxation
        result.no_seeds = true;
        return result;
    }

    std::vector<double> cur = result.map.data, next = cur;
    for (int it = 0; it < iterations; ++it) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                std::size_t i = static_cast<std::size_t>(y) * w + x;
                if (pinned[i]) continue;
                double acc = 0.0;
                int cnt = 0;
                if (y > 0) { acc += cur[i - w]; ++cnt; }
                if (y + 1 < h) { acc += cur[i + w]; ++cnt; }
                if (x > 0) { acc += cur[i - 1]; ++cnt; }
                if (x + 1 < w) { acc += cur[i + 1]; ++cnt; }
                next[i] = acc / cnt;
            }
        }
        std::swap(cur, next);
    }
    result.map.data = std::move(cur);
    return result;
}

FoldReport cross_validate(const RunConfig& base, int k) {
    RunConfig cfg = base;
    cfg.model.seed = cfg.seed;
    validate_run_config(cfg);
    Dataset dataset = obtain_dataset(cfg);
    auto folds = kfold(dataset.size(), k, cfg.seed);

    FoldReport report;
    for (std::size_t i = 0; i < folds.size(); ++i) {
        std::set<std::size_t> test_idx(folds[i].begin(), folds[i].end());
        Dataset train_set, test_set;
        for (std::size_t v = 0; v < dataset.size(); ++v)
            (test_idx.count(v) ? test_set : train_set).push_back(dataset[v]);

        RunConfig fold_cfg = cfg;
        fold_cfg.out_dir = cfg.out_dir.empty()
                               ? ""
                               : (fs::path(cfg.out_dir) / ("fold" + std::to_string(i)))
                                     .string();
        VsNet model(fold_cfg.model);
        train_model(model, train_set, {}, fold_cfg);
        MetricsReport fold_metrics = evaluate_model(model, test_set, fold_cfg);
        if (!fold_cfg.out_dir.empty())
            write_text(fs::path(fold_cfg.out_dir) / "metrics.csv",
                       fold_metrics.to_csv());
        report.folds.push_back(std::move(fold_metrics));
    }

    double sum = 0.0;
    for (const MetricsReport& m : report.folds) sum += m.accuracy;
    report.mean_accuracy = sum / static_cast<double>(report.folds.size());
    double var = 0.0;
    for (const MetricsReport& m : report.folds) {
        double d = m.accuracy - report.mean_accuracy;
        var += d * d;
    }
    report.std_accuracy = std::sqrt(var / static_cast<double>(report.folds.size()));

    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        write_text(fs::path(cfg.out_dir) / "cv.csv", fold_report_to_csv(report));
    }
    return report;
}

std::string fold_report_to_csv(const FoldReport& report) {
    std::ostringstream os;
    os.precision(17);
    os << "fold,accuracy,mean_iou,mean_loss\n";
    for (std::size_t i = 0; i < report.folds.size(); ++i) {
        const MetricsReport& m = report.folds[i];
        double iou_sum = 0.0;
        for (const FrameMetric& f : m.frames) iou_sum += f.iou;
        double mean_iou = m.frames.empty() ? 0.0 : iou_sum / m.frames.size();
        os << i << ',' << m.accuracy << ',' << mean_iou << ',' << m.mean_loss << '\n';
    }
    os << "mean," << report.mean_accuracy << ",,\n";
    os << "std," << report.std_accuracy << ",,\n";
    return os.str();
}

}  // namespace vsnet

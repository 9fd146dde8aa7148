#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vsnet/corpus.hpp"
#include "vsnet/model.hpp"
#include "vsnet/nn_ops.hpp"
#include "vsnet/objectives.hpp"

namespace vsnet {

// Flat run configuration; one seed drives model init, data synthesis,
// shuffling, augmentation, and stochastic forward passes.
struct RunConfig {
    VsNetConfig model;

    double lr = 0.001;
    double weight_decay = 0.006;
    int batch = 8;
    int epochs = 100;
    double loss_alpha = 1.0;  // IoU term weight; KL weight lives on the model
    int window_stride = 1;    // training window stride along each video

    bool augment_enabled = false;
    AugmentParams augment;

    std::string data_dir;   // when empty, videos are synthesized
    int synth_videos = 6;
    SynthSpec synth;        // per-video template; size is forced to the model's

    double test_fraction = 0.3;
    std::uint64_t seed = 1;
    std::string out_dir;

    double early_stop_train_iou = 0.0;    // 0 disables
    double early_stop_holdout_iou = 0.0;  // 0 disables

    bool propagate = false;  // off by default: no post-processing
    double fg_thresh = 0.8;
    double bg_thresh = 0.2;
    int propagate_iters = 50;
};

void validate_run_config(const RunConfig& cfg);

// Strict flat JSON: exact field names, unknown keys rejected. "seed" sets
// both the run seed and the model seed.
RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_iou = 0.0;    // training-mode batches, dropout active
    double holdout_iou = 0.0;  // inference mode; 0 when no holdout
    double seconds = 0.0;
};
using TrainLog = std::vector<EpochStats>;

// "epoch,loss,train_iou,holdout_iou,seconds"; the seconds column is the
// only nondeterministic one.
std::string train_log_to_csv(const TrainLog& log);

struct TrainResult {
    TrainLog log;
    double best_holdout_iou = 0.0;
    int epochs_run = 0;
    std::string last_checkpoint;  // empty when out_dir is empty
    std::string best_checkpoint;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Minibatch ADAM over sliding windows; the center-frame mask is the target.
// Deterministic per seed. Writes last.vsnt / best.vsnt into out_dir when
// set. Throws on a non-finite loss.
TrainResult train_model(VsNet& model, const Dataset& train_set, const Dataset& holdout,
                        const RunConfig& cfg, const EpochCallback& cb = nullptr);

// Loads or synthesizes the dataset, splits it, trains, and writes run.json
// plus trainlog.csv into out_dir. The run seed overrides the model seed so
// the written config reproduces the run.
TrainResult train(const RunConfig& cfg, VsNet* out_model = nullptr,
                  const EpochCallback& cb = nullptr);

// data_dir when set, otherwise synth_videos variations of cfg.synth sized
// to the model input.
Dataset obtain_dataset(const RunConfig& cfg);
Dataset synth_dataset(SynthSpec base, int videos, std::uint64_t seed);

// Scores every frame (windows clamp at video edges). Saliency maps are
// written as 8-bit grayscale when saliency_dir is set. Frames with an
// empty prediction-and-truth union are logged as skipped. fps/ms stay 0;
// timing belongs to the benchmark path, keeping the CSV deterministic.
MetricsReport evaluate_model(const VsNet& model, const Dataset& dataset,
                             const RunConfig& cfg,
                             const std::string& saliency_dir = "");

struct PropagateResult {
    Image map;
    bool no_seeds = false;  // degenerate input returned unchanged
};

// Seeds: >= fg_thresh pinned to 1, <= bg_thresh pinned to 0. Uncertain
// pixels relax to the mean of their in-bounds 4-neighbors for a fixed
// iteration count. Seeds never move; outputs stay in [0, 1].
PropagateResult propagate_labels(const Image& saliency, double fg_thresh = 0.8,
                                 double bg_thresh = 0.2, int iterations = 50);

struct FoldReport {
    std::vector<MetricsReport> folds;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  // population standard deviation
};

// Trains one model per fold complement and evaluates on the fold; writes
// per-fold artifacts plus cv.csv under out_dir when set.
FoldReport cross_validate(const RunConfig& cfg, int k);

// "fold,accuracy,mean_iou,mean_loss" rows, then mean and std rows.
std::string fold_report_to_csv(const FoldReport& report);

}  // namespace vsnet

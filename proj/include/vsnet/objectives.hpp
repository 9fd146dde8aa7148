#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vsnet/model.hpp"
#include "vsnet/tensor.hpp"

namespace vsnet {

struct LossWeights {
    double alpha = 1.0;  // IoU term weight
    double beta = 0.0;   // optional KL term weight
};

enum class BceNormalization {
    mean,  // per-pixel mean; resolution independent (default)
    sum,   // raw sum over all pixels
};

// -[G log S + (1-G) log(1-S)] with S clamped to [1e-7, 1-1e-7] internally.
// G must be exactly binary.
Tensor bce_loss(const Tensor& S, const Tensor& G,
                BceNormalization norm = BceNormalization::mean);

// 1 - sum(S*G) / sum(S + G - S*G). Rank-4 input is scored per sample and
// averaged over the batch; other ranks are treated as a single sample.
// Throws when a sample's union is empty (S and G both all-zero).
Tensor iou_loss(const Tensor& S, const Tensor& G);

// -0.5 * mean(1 + logvar - mu^2 - exp(logvar))
Tensor kl_divergence(const Tensor& mu, const Tensor& logvar);

// bce + alpha*iou, plus beta*KL when beta > 0 (mu/logvar then required).
Tensor total_loss(const Tensor& S, const Tensor& G, const LossWeights& weights,
                  const Tensor& mu = Tensor(), const Tensor& logvar = Tensor(),
                  BceNormalization norm = BceNormalization::mean);

// ---- evaluation metrics ----

// Saliency map (any shape) to a binary mask, 1 where value > threshold.
std::vector<std::uint8_t> binarize(const Tensor& saliency, double threshold = 0.5);

// Intersection over union of two equally sized binary masks.
// Throws std::domain_error when the union is empty.
double iou_metric(const std::vector<std::uint8_t>& pred,
                  const std::vector<std::uint8_t>& gt);

struct Box {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0,x1) x [y0,y1)
};

// Axis-aligned box IoU; throws std::domain_error when both boxes are empty.
double iou_metric(const Box& a, const Box& b);

// Tight bounding box of the set pixels; throws std::domain_error on an
// empty mask.
Box mask_to_bbox(const std::vector<std::uint8_t>& mask, int height, int width);

// Fraction of entries strictly greater than the threshold.
double detection_accuracy(const std::vector<double>& ious, double threshold = 0.5);

// ---- reporting ----

struct FrameMetric {
    std::string frame_id;
    double iou = 0.0;
    double loss = 0.0;
};

struct MetricsReport {
    std::vector<FrameMetric> frames;        // scored frames
    std::vector<std::string> skipped;       // empty-union frames, logged not scored
    double accuracy = 0.0;
    double mean_loss = 0.0;
    double fps = 0.0;
    double ms_per_step = 0.0;

    // header "frame,iou,loss", one row per scored frame, one
    // "<id>,skipped,skipped" row per skipped frame, then
    // "summary,<accuracy>,<mean_loss>,<fps>,<ms_per_step>".
    std::string to_csv() const;
};

// ---- runtime measurement ----

struct BenchResult {
    double fps = 0.0;
    double ms_per_step = 0.0;
    int repeats = 0;
    int warmup = 0;  // excluded from timing
};

// Wall-clock mean over `repeats` single-threaded forward_window calls at
// batch 1, after `warmup` untimed calls. No file I/O inside the timed loop.
BenchResult benchmark_model(const VsNet& model, const std::vector<Tensor>& window,
                            int repeats, int warmup = 2);

}  // namespace vsnet

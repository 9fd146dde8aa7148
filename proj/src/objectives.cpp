#include "vsnet/objectives.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace vsnet {

namespace {

constexpr double kClampEps = 1e-7;

void check_binary(const Tensor& G) {
    for (double g : G.data())
        if (g != 0.0 && g != 1.0)
            throw std::invalid_argument("loss: ground truth must be binary");
}

}  // namespace

Tensor bce_loss(const Tensor& S, const Tensor& G, BceNormalization norm) {
    if (!same_shape(S.shape(), G.shape()))
        throw std::invalid_argument("bce_loss: shape mismatch " + shape_str(S.shape()) +
                                    " vs " + shape_str(G.shape()));
    check_binary(G);
    Tensor Sc = clamp(S, kClampEps, 1.0 - kClampEps);
    Tensor term = add(mul(G, log(Sc)), mul(sub_from_scalar(1.0, G),
                                           log(sub_from_scalar(1.0, Sc))));
    return norm == BceNormalization::mean ? neg(mean(term)) : neg(sum(term));
}

Tensor iou_loss(const Tensor& S, const Tensor& G) {
    if (!same_shape(S.shape(), G.shape()))
        throw std::invalid_argument("iou_loss: shape mismatch " + shape_str(S.shape()) +
                                    " vs " + shape_str(G.shape()));

    Tensor inter_map = mul(S, G);
    Tensor union_map = sub(add(S, G), inter_map);
    std::vector<int> axes;
    if (S.shape().size() == 4)
        axes = {1, 2, 3};  // per-sample, then averaged over the batch
    else
        for (int d = 0; d < static_cast<int>(S.shape().size()); ++d) axes.push_back(d);

    Tensor inter = sum_over(inter_map, axes);
    Tensor uni = sum_over(union_map, axes);
    for (double u : uni.data())
        if (u == 0.0)
            throw std::domain_error("iou_loss: empty union (S and G both all-zero)");
    return mean(sub_from_scalar(1.0, div(inter, uni)));
}

Tensor kl_divergence(const Tensor& mu, const Tensor& logvar) {
    if (!same_shape(mu.shape(), logvar.shape()))
        throw std::invalid_argument("kl_divergence: shape mismatch");
    Tensor inside = sub(sub(add_scalar(logvar, 1.0), mul(mu, mu)), exp(logvar));
    return scalar_mul(mean(inside), -0.5);
}

Tensor total_loss(const Tensor& S, const Tensor& G, const LossWeights& weights,
                  const Tensor& mu, const Tensor& logvar, BceNormalization norm) {
    if (weights.alpha < 0.0 || weights.beta < 0.0)
        throw std::invalid_argument("total_loss: weights must be >= 0");
    Tensor loss = bce_loss(S, G, norm);
    if (weights.alpha != 0.0)
        loss = add(loss, scalar_mul(iou_loss(S, G), weights.alpha));
    if (weights.beta != 0.0) {
        if (!mu.defined() || !logvar.defined())
            throw std::invalid_argument("total_loss: beta > 0 requires mu and logvar");
        loss = add(loss, scalar_mul(kl_divergence(mu, logvar), weights.beta));
    }
    return loss;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> binarize(const Tensor& saliency, double threshold) {
    std::vector<std::uint8_t> mask(saliency.numel());
    auto d = saliency.data();
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = d[i] > threshold ? 1 : 0;
    return mask;
}

double iou_metric(const std::vector<std::uint8_t>& pred,
                  const std::vector<std::uint8_t>& gt) {
    if (pred.size() != gt.size())
        throw std::invalid_argument("iou_metric: mask size mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        bool p = pred[i] != 0, g = gt[i] != 0;
        inter += (p && g) ? 1 : 0;
        uni += (p || g) ? 1 : 0;
    }
    if (uni == 0) throw std::domain_error("iou_metric: empty union");
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double iou_metric(const Box& a, const Box& b) {
    double area_a = std::max(0.0, a.x1 - a.x0) * std::max(0.0, a.y1 - a.y0);
    double area_b = std::max(0.0, b.x1 - b.x0) * std::max(0.0, b.y1 - b.y0);
    double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
    double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
    double inter = ix * iy;
    double uni = area_a + area_b - inter;
    if (uni <= 0.0) throw std::domain_error("iou_metric: empty union");
    return inter / uni;
}

Box mask_to_bbox(const std::vector<std::uint8_t>& mask, int height, int width) {
    if (static_cast<std::size_t>(height) * width != mask.size())
        throw std::invalid_argument("mask_to_bbox: size mismatch");
    int x0 = width, y0 = height, x1 = -1, y1 = -1;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (mask[static_cast<std::size_t>(y) * width + x]) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) throw std::domain_error("mask_to_bbox: empty mask");
    // half-open box covering the set pixels
    return Box{static_cast<double>(x0), static_cast<double>(y0),
               static_cast<double>(x1 + 1), static_cast<double>(y1 + 1)};
}

double detection_accuracy(const std::vector<double>& ious, double threshold) {
    if (ious.empty()) throw std::invalid_argument("detection_accuracy: empty list");
    std::size_t hits = 0;
    for (double v : ious)
        if (v > threshold) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ious.size());
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "frame,iou,loss\n";
    for (const FrameMetric& f : frames)
        os << f.frame_id << ',' << f.iou << ',' << f.loss << '\n';
    for (const std::string& id : skipped) os << id << ",skipped,skipped\n";
    os << "summary," << accuracy << ',' << mean_loss << ',' << fps << ','
       << ms_per_step << '\n';
    return os.str();
}

BenchResult benchmark_model(const VsNet& model, const std::vector<Tensor>& window,
                            int repeats, int warmup) {
    if (repeats < 1) throw std::invalid_argument("benchmark: repeats must be >= 1");
    if (warmup < 0) throw std::invalid_argument("benchmark: warmup must be >= 0");

    for (int i = 0; i < warmup; ++i) (void)model.forward_window(window, false, 0);

    auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) (void)model.forward_window(window, false, 0);
    auto stop = std::chrono::steady_clock::now();

    double total_ms =
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(stop -
                                                                              start)
            .count();
    BenchResult r;
    r.repeats = repeats;
    r.warmup = warmup;
    r.ms_per_step = total_ms / repeats;
    r.fps = r.ms_per_step > 0.0 ? 1000.0 / r.ms_per_step : 0.0;
    return r;
}

}  // namespace vsnet

#pragma once

#include <cstdint>
#include <vector>

#include "vsnet/tensor.hpp"

namespace vsnet {

// ---- convolutions ----
// All image tensors are N,C,H,W. Pointwise kernels are K×C×1×1; depthwise
// kernels are C×1×3×3 with one filter per input channel and "same" zero
// padding of 1.

// out[n,k,h,w] = bias[k] + Σ_c weight[k,c]·x[n,c,h,w]
Tensor conv2d_pointwise(const Tensor& x, const Tensor& weight, const Tensor& bias);

// each channel convolved independently with its own 3×3 kernel
Tensor conv2d_depthwise(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Depthwise 3×3 (bias folded in) followed by pointwise 1×1. Both biases are
// part of the layer; see param counting below.
struct SeparableConv {
    Tensor dw_weight;  // C×1×3×3
    Tensor dw_bias;    // C
    Tensor pw_weight;  // K×C×1×1
    Tensor pw_bias;    // K
};

struct PointwiseConv {
    Tensor weight;  // K×C×1×1
    Tensor bias;    // K
};

// Fan-in scaled Gaussian init (stddev sqrt(2/fan_in)), zero biases.
SeparableConv make_separable_conv(int cin, int cout, std::uint64_t seed);
PointwiseConv make_pointwise_conv(int cin, int cout, std::uint64_t seed);

// Guaranteed bit-identical to conv2d_pointwise(conv2d_depthwise(x, ...), ...).
Tensor separable_conv(const Tensor& x, const SeparableConv& p);
Tensor pointwise_conv(const Tensor& x, const PointwiseConv& p);

// 9·cin + cin + cout·cin + cout (depthwise bias included)
std::size_t separable_param_count(int cin, int cout);
// cout·cin + cout
std::size_t pointwise_param_count(int cin, int cout);

// ---- pooling / resampling ----
// Stride-2 window max; H and W must be even. Gradient routes to the argmax,
// first index in row-major window order on ties.
Tensor maxpool2(const Tensor& x);

// Nearest-neighbor 2× replication; gradient sums each 2×2 block.
Tensor upsample2(const Tensor& x);

// ---- regularization ----
// Inverted dropout: zero with probability p, scale survivors by 1/(1-p).
// Identity when training is false or p == 0. Deterministic per seed.
Tensor dropout(const Tensor& x, double p, bool training, std::uint64_t seed);

// ---- shape surgery ----
// Channel-axis concatenation of N×C1×H×W and N×C2×H×W. An undefined or
// zero-channel b acts as the neutral element.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Channels [c0, c1) of x as a new tensor; gradient scatters back.
Tensor slice_channels(const Tensor& x, int c0, int c1);

// ---- optimizer ----
struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Bias-corrected ADAM with decoupled weight decay (p ← p·(1 − lr·wd) applied
// before the moment update). Parameters must be leaf tensors; step() consumes
// their gradients and clears them.
class Adam {
  public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);

    void step();       // throws if any parameter is missing its gradient
    void zero_grad();  // drops any pending gradients without stepping
    std::int64_t step_count() const { return t_; }

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

}  // namespace vsnet

#pragma once

#include <vector>

#include "vsnet/tensor.hpp"

namespace vsnet {

// Approximate rank pooling: collapse T frames into one map with fixed
// per-frame coefficients that preserve temporal order.

enum class ArpVariant {
    harmonic,  // alpha_t = 2(T-t+1) - (T+1)(H_T - H_{t-1})
    simple,    // alpha_t = 2t - T - 1
};

struct ArpCoefficients {
    int T = 0;
    std::vector<double> alpha;
};

// The last coefficient is set to the negated partial sum of the others so a
// left-to-right sum of alpha is exactly zero in floating point; the formula
// value and the correction agree to machine precision.
ArpCoefficients arp_coefficients(int T, ArpVariant variant = ArpVariant::harmonic);

// out = sum_t alpha_t * frames[t]; linear, so d out / d frame_t == alpha_t.
Tensor arp_pool(const std::vector<Tensor>& frames, const ArpCoefficients& coeffs);

// Least-squares ranking fit used as a test oracle: finds u minimizing
// sum_t (<u, V_t> - t)^2 over time-averaged vectors V_t = (1/t) sum_{i<=t} f_i,
// solved in the span of the V_t through a lightly ridged Gram system.
struct RankPoolDirection {
    std::vector<double> u;
    bool degenerate = false;  // all-equal input; u is the zero vector
};

RankPoolDirection rank_pool_direction_oracle(
    const std::vector<std::vector<double>>& frames);

}  // namespace vsnet

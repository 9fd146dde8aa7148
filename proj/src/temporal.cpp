#include "vsnet/temporal.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vsnet {

ArpCoefficients arp_coefficients(int T, ArpVariant variant) {
    if (T < 1) throw std::invalid_argument("arp_coefficients: T must be >= 1");
    ArpCoefficients c;
    c.T = T;
    c.alpha.resize(T);

    if (variant == ArpVariant::simple) {
        for (int t = 1; t <= T; ++t) c.alpha[t - 1] = 2.0 * t - T - 1.0;
    } else {
        // harmonic numbers H_0..H_T
        std::vector<double> H(T + 1, 0.0);
        for (int i = 1; i <= T; ++i) H[i] = H[i - 1] + 1.0 / i;
        for (int t = 1; t <= T; ++t)
            c.alpha[t - 1] = 2.0 * (T - t + 1) - (T + 1) * (H[T] - H[t - 1]);
    }

    // pin the zero-sum invariant exactly
    double partial = 0.0;
    for (int t = 0; t < T - 1; ++t) partial += c.alpha[t];
    c.alpha[T - 1] = T == 1 ? 0.0 : -partial;
    return c;
}

Tensor arp_pool(const std::vector<Tensor>& frames, const ArpCoefficients& coeffs) {
    if (static_cast<int>(frames.size()) != coeffs.T)
        throw std::invalid_argument("arp_pool: got " + std::to_string(frames.size()) +
                                    " frames for T=" + std::to_string(coeffs.T));
    if (frames.empty()) throw std::invalid_argument("arp_pool: empty window");
    for (const Tensor& f : frames)
        if (!same_shape(f.shape(), frames[0].shape()))
            throw std::invalid_argument("arp_pool: frame shape mismatch " +
                                        shape_str(frames[0].shape()) + " vs " +
                                        shape_str(f.shape()));

    Tensor out = scalar_mul(frames[0], coeffs.alpha[0]);
    for (std::size_t t = 1; t < frames.size(); ++t)
        out = add(out, scalar_mul(frames[t], coeffs.alpha[t]));
    return out;
}

namespace {

// Gaussian elimination with partial pivoting on a small dense system.
std::vector<double> solve_dense(std::vector<std::vector<double>> A,
                                std::vector<double> b) {
    int n = static_cast<int>(b.size());
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(A[r][col]) > std::abs(A[pivot][col])) pivot = r;
        std::swap(A[col], A[pivot]);
        std::swap(b[col], b[pivot]);
        double d = A[col][col];
        if (d == 0.0) throw std::runtime_error("singular ranking system");
        for (int r = col + 1; r < n; ++r) {
            double f = A[r][col] / d;
            if (f == 0.0) continue;
            for (int k = col; k < n; ++k) A[r][k] -= f * A[col][k];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (int r = n - 1; r >= 0; --r) {
        double acc = b[r];
        for (int k = r + 1; k < n; ++k) acc -= A[r][k] * x[k];
        x[r] = acc / A[r][r];
    }
    return x;
}

}  // namespace

RankPoolDirection rank_pool_direction_oracle(
    const std::vector<std::vector<double>>& frames) {
    int T = static_cast<int>(frames.size());
    if (T < 2) throw std::invalid_argument("rank_pool_direction_oracle: need T >= 2");
    std::size_t dim = frames[0].size();
    for (const auto& f : frames)
        if (f.size() != dim)
            throw std::invalid_argument("rank_pool_direction_oracle: length mismatch");

    RankPoolDirection result;
    result.u.assign(dim, 0.0);

    bool all_equal = true;
    for (int t = 1; t < T && all_equal; ++t)
        for (std::size_t i = 0; i < dim; ++i)
            if (frames[t][i] != frames[0][i]) {
                all_equal = false;
                break;
            }
    if (all_equal) {
        result.degenerate = true;
        return result;
    }

    // time-averaged vectors V_t
    std::vector<std::vector<double>> V(T, std::vector<double>(dim, 0.0));
    std::vector<double> running(dim, 0.0);
    for (int t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < dim; ++i) {
            running[i] += frames[t][i];
            V[t][i] = running[i] / (t + 1);
        }
    }

    // representer form: u = sum_t c_t V_t with (G + lambda I) c = targets
    std::vector<std::vector<double>> G(T, std::vector<double>(T, 0.0));
    double trace = 0.0;
    for (int s = 0; s < T; ++s)
        for (int t = s; t < T; ++t) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dim; ++i) dot += V[s][i] * V[t][i];
            G[s][t] = G[t][s] = dot;
            if (s == t) trace += dot;
        }
    double lambda = 1e-10 * (trace > 0.0 ? trace / T : 1.0);
    for (int t = 0; t < T; ++t) G[t][t] += lambda;

    std::vector<double> targets(T);
    for (int t = 0; t < T; ++t) targets[t] = t + 1.0;
    std::vector<double> c = solve_dense(std::move(G), std::move(targets));

    for (int t = 0; t < T; ++t)
        for (std::size_t i = 0; i < dim; ++i) result.u[i] += c[t] * V[t][i];
    return result;
}

}  // namespace vsnet

#include "vsnet/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vsnet {

using detail::Node;
using detail::TensorImpl;

namespace {

std::shared_ptr<TensorImpl> make_out(Shape shape, std::vector<double> data) {
    auto out = std::make_shared<TensorImpl>();
    out->shape = std::move(shape);
    out->data = std::move(data);
    return out;
}

Tensor finish(std::shared_ptr<TensorImpl> out, const char* op,
              std::vector<std::shared_ptr<TensorImpl>> parents,
              std::function<void(const TensorImpl&)> backward) {
    bool needs = false;
    for (const auto& p : parents)
        if (p->requires_grad) needs = true;
    if (needs) {
        out->requires_grad = true;
        auto node = std::make_shared<Node>();
        node->op = op;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
        out->node = std::move(node);
    }
    return Tensor::wrap(std::move(out));
}

void require_rank4(const char* op, const Tensor& x) {
    if (x.shape().size() != 4)
        throw std::invalid_argument(std::string(op) + ": expected N,C,H,W input, got " +
                                    shape_str(x.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// pointwise conv
// ---------------------------------------------------------------------------

Tensor conv2d_pointwise(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank4("conv2d_pointwise", x);
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    if (ws.size() != 4 || ws[2] != 1 || ws[3] != 1)
        throw std::invalid_argument("conv2d_pointwise: kernel must be K,C,1,1, got " +
                                    shape_str(ws));
    int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    int K = ws[0];
    if (ws[1] != C)
        throw std::invalid_argument("conv2d_pointwise: kernel expects " +
                                    std::to_string(ws[1]) + " channels, input has " +
                                    std::to_string(C));
    if (bias.shape() != Shape{K})
        throw std::invalid_argument("conv2d_pointwise: bias must have K elements");

    auto xi = x.impl(), wi = weight.impl(), bi = bias.impl();
    std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<double> out(static_cast<std::size_t>(N) * K * plane);

    const double* xd = xi->data.data();
    const double* wd = wi->data.data();
    const double* bd = bi->data.data();
    for (int n = 0; n < N; ++n) {
        const double* xn = xd + static_cast<std::size_t>(n) * C * plane;
        double* on = out.data() + static_cast<std::size_t>(n) * K * plane;
        for (int k = 0; k < K; ++k) {
            double* op = on + static_cast<std::size_t>(k) * plane;
            std::fill(op, op + plane, bd[k]);
            const double* wk = wd + static_cast<std::size_t>(k) * C;
            for (int c = 0; c < C; ++c) {
                double w = wk[c];
                if (w == 0.0) continue;
                const double* xp = xn + static_cast<std::size_t>(c) * plane;
                for (std::size_t i = 0; i < plane; ++i) op[i] += w * xp[i];
            }
        }
    }

    return finish(
        make_out({N, K, H, W}, std::move(out)), "conv2d_pointwise", {xi, wi, bi},
        [xi, wi, bi, N, C, K, plane](const TensorImpl& o) {
            const double* god = o.grad.data();
            const double* xd = xi->data.data();
            const double* wd = wi->data.data();
            if (xi->requires_grad) {
                detail::ensure_grad(*xi);
                double* gx = xi->grad.data();
                for (int n = 0; n < N; ++n) {
                    const double* gon = god + static_cast<std::size_t>(n) * K * plane;
                    double* gxn = gx + static_cast<std::size_t>(n) * C * plane;
                    for (int k = 0; k < K; ++k) {
                        const double* gop = gon + static_cast<std::size_t>(k) * plane;
                        const double* wk = wd + static_cast<std::size_t>(k) * C;
                        for (int c = 0; c < C; ++c) {
                            double w = wk[c];
                            if (w == 0.0) continue;
                            double* gxp = gxn + static_cast<std::size_t>(c) * plane;
                            for (std::size_t i = 0; i < plane; ++i) gxp[i] += w * gop[i];
                        }
                    }
                }
            }
            if (wi->requires_grad) {
                detail::ensure_grad(*wi);
                double* gw = wi->grad.data();
                for (int n = 0; n < N; ++n) {
                    const double* gon = god + static_cast<std::size_t>(n) * K * plane;
                    const double* xn = xd + static_cast<std::size_t>(n) * C * plane;
                    for (int k = 0; k < K; ++k) {
                        const double* gop = gon + static_cast<std::size_t>(k) * plane;
                        double* gwk = gw + static_cast<std::size_t>(k) * C;
                        for (int c = 0; c < C; ++c) {
                            const double* xp = xn + static_cast<std::size_t>(c) * plane;
                            double acc = 0.0;
                            for (std::size_t i = 0; i < plane; ++i) acc += gop[i] * xp[i];
                            gwk[c] += acc;
                        }
                    }
                }
            }
            if (bi->requires_grad) {
                detail::ensure_grad(*bi);
                double* gb = bi->grad.data();
                for (int n = 0; n < N; ++n) {
                    const double* gon = god + static_cast<std::size_t>(n) * K * plane;
                    for (int k = 0; k < K; ++k) {
                        const double* gop = gon + static_cast<std::size_t>(k) * plane;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < plane; ++i) acc += gop[i];
                        gb[k] += acc;
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// depthwise conv
// ---------------------------------------------------------------------------

Tensor conv2d_depthwise(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank4("conv2d_depthwise", x);
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    if (ws.size() != 4 || ws[1] != 1 || ws[2] != 3 || ws[3] != 3)
        throw std::invalid_argument("conv2d_depthwise: kernel must be C,1,3,3, got " +
                                    shape_str(ws));
    if (ws[0] != C)
        throw std::invalid_argument("conv2d_depthwise: kernel has " +
                                    std::to_string(ws[0]) + " filters, input has " +
                                    std::to_string(C) + " channels");
    if (bias.shape() != Shape{C})
        throw std::invalid_argument("conv2d_depthwise: bias must have C elements");

    auto xi = x.impl(), wi = weight.impl(), bi = bias.impl();
    std::size_t plane = static_cast<std::size_t>(H) * W;
    std::size_t planes = static_cast<std::size_t>(N) * C;
    std::vector<double> out(planes * plane);

    const double* xd = xi->data.data();
    const double* wd = wi->data.data();
    const double* bd = bi->data.data();
    for (std::size_t p = 0; p < planes; ++p) {
        int c = static_cast<int>(p % C);
        const double* xp = xd + p * plane;
        double* op = out.data() + p * plane;
        std::fill(op, op + plane, bd[c]);
        const double* wc = wd + static_cast<std::size_t>(c) * 9;
        // One pass per tap over its valid window; zero padding contributes
        // nothing so out-of-range rows/cols are simply skipped.
        for (int ky = 0; ky < 3; ++ky) {
            int dy = ky - 1;
            for (int kx = 0; kx < 3; ++kx) {
                int dx = kx - 1;
                double w = wc[ky * 3 + kx];
                int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                for (int y = y0; y < y1; ++y) {
                    double* orow = op + static_cast<std::size_t>(y) * W;
                    const double* xrow =
                        xp + static_cast<std::size_t>(y + dy) * W + dx;
                    for (int xq = x0; xq < x1; ++xq) orow[xq] += w * xrow[xq];
                }
            }
        }
    }

    return finish(
        make_out({N, C, H, W}, std::move(out)), "conv2d_depthwise", {xi, wi, bi},
        [xi, wi, bi, C, H, W, plane, planes](const TensorImpl& o) {
            const double* god = o.grad.data();
            const double* xd = xi->data.data();
            const double* wd = wi->data.data();
            bool need_x = xi->requires_grad, need_w = wi->requires_grad;
            if (need_x) detail::ensure_grad(*xi);
            if (need_w) detail::ensure_grad(*wi);
            if (bi->requires_grad) detail::ensure_grad(*bi);

            for (std::size_t p = 0; p < planes; ++p) {
                int c = static_cast<int>(p % C);
                const double* gop = god + p * plane;
                const double* xp = xd + p * plane;
                const double* wc = wd + static_cast<std::size_t>(c) * 9;
                double* gxp = need_x ? xi->grad.data() + p * plane : nullptr;
                double* gwc =
                    need_w ? wi->grad.data() + static_cast<std::size_t>(c) * 9 : nullptr;
                for (int ky = 0; ky < 3; ++ky) {
                    int dy = ky - 1;
                    for (int kx = 0; kx < 3; ++kx) {
                        int dx = kx - 1;
                        int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                        int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                        double w = wc[ky * 3 + kx];
                        double acc = 0.0;
                        for (int y = y0; y < y1; ++y) {
                            const double* gorow = gop + static_cast<std::size_t>(y) * W;
                            const double* xrow =
                                xp + static_cast<std::size_t>(y + dy) * W + dx;
                            double* gxrow =
                                need_x ? gxp + static_cast<std::size_t>(y + dy) * W + dx
                                       : nullptr;
                            for (int xq = x0; xq < x1; ++xq) {
                                double g = gorow[xq];
                                if (need_x) gxrow[xq] += w * g;
                                acc += g * xrow[xq];
                            }
                        }
                        if (need_w) gwc[ky * 3 + kx] += acc;
                    }
                }
                if (bi->requires_grad) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) acc += gop[i];
                    bi->grad[c] += acc;
                }
            }
        });
}

// ---------------------------------------------------------------------------
// separable conv + init
// ---------------------------------------------------------------------------

Tensor separable_conv(const Tensor& x, const SeparableConv& p) {
    return conv2d_pointwise(conv2d_depthwise(x, p.dw_weight, p.dw_bias), p.pw_weight,
                            p.pw_bias);
}

Tensor pointwise_conv(const Tensor& x, const PointwiseConv& p) {
    return conv2d_pointwise(x, p.weight, p.bias);
}

SeparableConv make_separable_conv(int cin, int cout, std::uint64_t seed) {
    if (cin < 1 || cout < 1)
        throw std::invalid_argument("make_separable_conv: channel counts must be >= 1");
    SeparableConv p;
    p.dw_weight = randn({cin, 1, 3, 3}, mix_seed(seed, 0), std::sqrt(2.0 / 9.0), true);
    p.dw_bias = zeros({cin}, true);
    p.pw_weight = randn({cout, cin, 1, 1}, mix_seed(seed, 1), std::sqrt(2.0 / cin), true);
    p.pw_bias = zeros({cout}, true);
    return p;
}

PointwiseConv make_pointwise_conv(int cin, int cout, std::uint64_t seed) {
    if (cin < 1 || cout < 1)
        throw std::invalid_argument("make_pointwise_conv: channel counts must be >= 1");
    PointwiseConv p;
    p.weight = randn({cout, cin, 1, 1}, mix_seed(seed, 0), std::sqrt(2.0 / cin), true);
    p.bias = zeros({cout}, true);
    return p;
}

std::size_t separable_param_count(int cin, int cout) {
    return static_cast<std::size_t>(cin) * 10 +
           static_cast<std::size_t>(cout) * (cin + 1);
}

std::size_t pointwise_param_count(int cin, int cout) {
    return static_cast<std::size_t>(cout) * (cin + 1);
}

// ---------------------------------------------------------------------------
// pooling / resampling
// ---------------------------------------------------------------------------

Tensor maxpool2(const Tensor& x) {
    require_rank4("maxpool2", x);
    const Shape& xs = x.shape();
    int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    if (H % 2 != 0 || W % 2 != 0)
        throw std::invalid_argument("maxpool2: spatial extents must be even, got " +
                                    shape_str(xs));
    int OH = H / 2, OW = W / 2;

    auto xi = x.impl();
    std::size_t planes = static_cast<std::size_t>(N) * C;
    std::size_t oplane = static_cast<std::size_t>(OH) * OW;
    std::vector<double> out(planes * oplane);
    std::vector<std::size_t> argmax(planes * oplane);

    const double* xd = xi->data.data();
    for (std::size_t p = 0; p < planes; ++p) {
        const double* xp = xd + p * static_cast<std::size_t>(H) * W;
        double* op = out.data() + p * oplane;
        std::size_t* ap = argmax.data() + p * oplane;
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                std::size_t base = static_cast<std::size_t>(2 * oy) * W + 2 * ox;
                // row-major window order; strict > keeps the first index on ties
                std::size_t best = base;
                double bv = xp[base];
                const std::size_t cand[3] = {base + 1, base + W, base + W + 1};
                for (std::size_t idx : cand)
                    if (xp[idx] > bv) {
                        bv = xp[idx];
                        best = idx;
                    }
                op[static_cast<std::size_t>(oy) * OW + ox] = bv;
                ap[static_cast<std::size_t>(oy) * OW + ox] =
                    p * static_cast<std::size_t>(H) * W + best;
            }
    }

    return finish(make_out({N, C, OH, OW}, std::move(out)), "maxpool2", {xi},
                  [xi, argmax = std::move(argmax)](const TensorImpl& o) {
                      if (!xi->requires_grad) return;
                      detail::ensure_grad(*xi);
                      double* gx = xi->grad.data();
                      for (std::size_t i = 0; i < argmax.size(); ++i)
                          gx[argmax[i]] += o.grad[i];
                  });
}

Tensor upsample2(const Tensor& x) {
    require_rank4("upsample2", x);
    const Shape& xs = x.shape();
    int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    int OH = 2 * H, OW = 2 * W;

    auto xi = x.impl();
    std::size_t planes = static_cast<std::size_t>(N) * C;
    std::vector<double> out(planes * OH * OW);
    const double* xd = xi->data.data();
    for (std::size_t p = 0; p < planes; ++p) {
        const double* xp = xd + p * static_cast<std::size_t>(H) * W;
        double* op = out.data() + p * static_cast<std::size_t>(OH) * OW;
        for (int y = 0; y < OH; ++y) {
            const double* xrow = xp + static_cast<std::size_t>(y / 2) * W;
            double* orow = op + static_cast<std::size_t>(y) * OW;
            for (int xq = 0; xq < OW; ++xq) orow[xq] = xrow[xq / 2];
        }
    }

    return finish(make_out({N, C, OH, OW}, std::move(out)), "upsample2", {xi},
                  [xi, planes, H, W, OH, OW](const TensorImpl& o) {
                      if (!xi->requires_grad) return;
                      detail::ensure_grad(*xi);
                      const double* god = o.grad.data();
                      for (std::size_t p = 0; p < planes; ++p) {
                          const double* gop =
                              god + p * static_cast<std::size_t>(OH) * OW;
                          double* gxp =
                              xi->grad.data() + p * static_cast<std::size_t>(H) * W;
                          for (int y = 0; y < OH; ++y) {
                              const double* gorow = gop + static_cast<std::size_t>(y) * OW;
                              double* gxrow = gxp + static_cast<std::size_t>(y / 2) * W;
                              for (int xq = 0; xq < OW; ++xq)
                                  gxrow[xq / 2] += gorow[xq];
                          }
                      }
                  });
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

Tensor dropout(const Tensor& x, double p, bool training, std::uint64_t seed) {
    if (!(p >= 0.0) || p >= 1.0)
        throw std::invalid_argument("dropout: p must be in [0, 1)");
    if (!training || p == 0.0) return x;

    auto xi = x.impl();
    RandomStream rng(seed);
    double scale = 1.0 / (1.0 - p);
    std::vector<double> mask(xi->data.size());
    std::vector<double> out(xi->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = (rng.next_uniform() >= p) ? scale : 0.0;
        out[i] = xi->data[i] * mask[i];
    }

    return finish(make_out(xi->shape, std::move(out)), "dropout", {xi},
                  [xi, mask = std::move(mask)](const TensorImpl& o) {
                      if (!xi->requires_grad) return;
                      detail::ensure_grad(*xi);
                      for (std::size_t i = 0; i < mask.size(); ++i)
                          xi->grad[i] += o.grad[i] * mask[i];
                  });
}

// ---------------------------------------------------------------------------
// concat / slice
// ---------------------------------------------------------------------------

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (!b.defined()) return a;
    require_rank4("concat_channels", a);
    require_rank4("concat_channels", b);
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
        throw std::invalid_argument("concat_channels: batch/spatial mismatch " +
                                    shape_str(as) + " vs " + shape_str(bs));
    if (bs[1] == 0) return a;

    int N = as[0], C1 = as[1], C2 = bs[1], H = as[2], W = as[3];
    auto ai = a.impl(), bi = b.impl();
    std::size_t plane = static_cast<std::size_t>(H) * W;
    std::size_t astride = static_cast<std::size_t>(C1) * plane;
    std::size_t bstride = static_cast<std::size_t>(C2) * plane;
    std::vector<double> out(static_cast<std::size_t>(N) * (astride + bstride));
    for (int n = 0; n < N; ++n) {
        double* on = out.data() + static_cast<std::size_t>(n) * (astride + bstride);
        std::copy_n(ai->data.data() + n * astride, astride, on);
        std::copy_n(bi->data.data() + n * bstride, bstride, on + astride);
    }

    return finish(make_out({N, C1 + C2, H, W}, std::move(out)), "concat_channels",
                  {ai, bi}, [ai, bi, N, astride, bstride](const TensorImpl& o) {
                      const double* god = o.grad.data();
                      for (int n = 0; n < N; ++n) {
                          const double* gon =
                              god + static_cast<std::size_t>(n) * (astride + bstride);
                          if (ai->requires_grad) {
                              detail::ensure_grad(*ai);
                              double* ga = ai->grad.data() + n * astride;
                              for (std::size_t i = 0; i < astride; ++i) ga[i] += gon[i];
                          }
                          if (bi->requires_grad) {
                              detail::ensure_grad(*bi);
                              double* gb = bi->grad.data() + n * bstride;
                              for (std::size_t i = 0; i < bstride; ++i)
                                  gb[i] += gon[astride + i];
                          }
                      }
                  });
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
    require_rank4("slice_channels", x);
    const Shape& xs = x.shape();
    int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    if (c0 < 0 || c1 > C || c0 >= c1)
        throw std::invalid_argument("slice_channels: invalid range [" +
                                    std::to_string(c0) + "," + std::to_string(c1) +
                                    ") for " + std::to_string(C) + " channels");

    auto xi = x.impl();
    int SC = c1 - c0;
    std::size_t plane = static_cast<std::size_t>(H) * W;
    std::size_t xstride = static_cast<std::size_t>(C) * plane;
    std::size_t ostride = static_cast<std::size_t>(SC) * plane;
    std::vector<double> out(static_cast<std::size_t>(N) * ostride);
    for (int n = 0; n < N; ++n)
        std::copy_n(xi->data.data() + n * xstride + c0 * plane, ostride,
                    out.data() + static_cast<std::size_t>(n) * ostride);

    return finish(make_out({N, SC, H, W}, std::move(out)), "slice_channels", {xi},
                  [xi, N, c0, plane, xstride, ostride](const TensorImpl& o) {
                      if (!xi->requires_grad) return;
                      detail::ensure_grad(*xi);
                      const double* god = o.grad.data();
                      for (int n = 0; n < N; ++n) {
                          const double* gon = god + static_cast<std::size_t>(n) * ostride;
                          double* gx = xi->grad.data() + n * xstride + c0 * plane;
                          for (std::size_t i = 0; i < ostride; ++i) gx[i] += gon[i];
                      }
                  });
}

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    // lr 0 is allowed: a zero-rate step is the standard no-op diagnostic
    if (!(cfg_.lr >= 0.0)) throw std::invalid_argument("adam: lr must be >= 0");
    for (const Tensor& p : params_) {
        if (!p.defined() || !p.is_leaf() || !p.requires_grad())
            throw std::invalid_argument(
                "adam: parameters must be leaf tensors with requires_grad");
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void Adam::step() {
    for (const Tensor& p : params_)
        if (!p.has_grad())
            throw std::runtime_error("adam: parameter missing gradient");

    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    double decay = 1.0 - cfg_.lr * cfg_.weight_decay;

    for (std::size_t j = 0; j < params_.size(); ++j) {
        Tensor& p = params_[j];
        auto g = p.grad();
        auto data = p.mutable_data();
        double* m = m_[j].data();
        double* v = v_[j].data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (cfg_.weight_decay != 0.0) data[i] *= decay;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        p.zero_grad();
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

}  // namespace vsnet

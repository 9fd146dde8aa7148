#include "vsnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace vsnet {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int e : shape) {
        if (e < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

void ensure_grad(TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
}

void accumulate_grad(TensorImpl& t, std::size_t i, double v) {
    ensure_grad(t);
    t.grad[i] += v;
}

}  // namespace detail

using detail::Node;
using detail::TensorImpl;

// ---------------------------------------------------------------------------
// Tensor handle
// ---------------------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    impl_ = std::make_shared<TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

static const TensorImpl& deref(const std::shared_ptr<TensorImpl>& p) {
    if (!p) throw std::logic_error("use of undefined tensor");
    return *p;
}

const Shape& Tensor::shape() const { return deref(impl_).shape; }
std::size_t Tensor::numel() const { return deref(impl_).data.size(); }
bool Tensor::requires_grad() const { return deref(impl_).requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    if (flag && impl_->node)
        throw std::logic_error("requires_grad can only be toggled on leaves");
    impl_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return deref(impl_).node == nullptr; }

std::span<const double> Tensor::data() const {
    const TensorImpl& t = deref(impl_);
    return {t.data.data(), t.data.size()};
}

std::span<double> Tensor::mutable_data() {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    if (impl_->node)
        throw std::logic_error("in-place writes are restricted to leaf tensors");
    return {impl_->data.data(), impl_->data.size()};
}

double Tensor::item() const {
    const TensorImpl& t = deref(impl_);
    if (t.data.size() != 1)
        throw std::invalid_argument("item() requires a scalar tensor, got shape " +
                                    shape_str(t.shape));
    return t.data[0];
}

double Tensor::at(std::size_t i) const {
    const TensorImpl& t = deref(impl_);
    if (i >= t.data.size()) throw std::out_of_range("tensor index out of range");
    return t.data[i];
}

bool Tensor::has_grad() const { return !deref(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const {
    const TensorImpl& t = deref(impl_);
    if (t.grad.empty())
        throw std::logic_error("tensor has no gradient; run backward first");
    return {t.grad.data(), t.grad.size()};
}

void Tensor::zero_grad() {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    impl_->grad.clear();
}

Tensor Tensor::wrap(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

// ---------------------------------------------------------------------------
// factories
// ---------------------------------------------------------------------------

static void validate_positive_extents(const Shape& shape) {
    for (int e : shape)
        if (e < 1)
            throw std::invalid_argument("shape extents must be >= 1, got " +
                                        shape_str(shape));
}

Tensor zeros(const Shape& shape, bool requires_grad) {
    validate_positive_extents(shape);
    return Tensor(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor full(const Shape& shape, double value, bool requires_grad) {
    validate_positive_extents(shape);
    return Tensor(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor randn(const Shape& shape, std::uint64_t seed, double stddev, bool requires_grad) {
    validate_positive_extents(shape);
    if (!(stddev >= 0.0)) throw std::invalid_argument("stddev must be >= 0");
    RandomStream rng(seed);
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = rng.next_gaussian() * stddev;
    return Tensor(shape, std::move(data), requires_grad);
}

Tensor from_data(const Shape& shape, std::vector<double> data, bool requires_grad) {
    return Tensor(shape, std::move(data), requires_grad);
}

Tensor scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

// ---------------------------------------------------------------------------
// op plumbing
// ---------------------------------------------------------------------------

namespace {

std::shared_ptr<TensorImpl> make_out(Shape shape, std::vector<double> data) {
    auto out = std::make_shared<TensorImpl>();
    out->shape = std::move(shape);
    out->data = std::move(data);
    return out;
}

// Attaches provenance when any parent requires grad.
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

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!same_shape(a.shape(), b.shape()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    auto ai = a.impl(), bi = b.impl();
    std::vector<double> out(ai->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai->data[i] + bi->data[i];
    return finish(make_out(ai->shape, std::move(out)), "add", {ai, bi},
                  [ai, bi](const TensorImpl& o) {
                      if (ai->requires_grad) {
                          detail::ensure_grad(*ai);
                          for (std::size_t i = 0; i < o.grad.size(); ++i) ai->grad[i] += o.grad[i];
                      }
                      if (bi->requires_grad) {
                          detail::ensure_grad(*bi);
                          for (std::size_t i = 0; i < o.grad.size(); ++i) bi->grad[i] += o.grad[i];
                      }
                  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    auto ai = a.impl(), bi = b.impl();
    std::vector<double> out(ai->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai->data[i] - bi->data[i];
    return finish(make_out(ai->shape, std::move(out)), "sub", {ai, bi},
                  [ai, bi](const TensorImpl& o) {
                      if (ai->requires_grad) {
                          detail::ensure_grad(*ai);
                          for (std::size_t i = 0; i < o.grad.size(); ++i) ai->grad[i] += o.grad[i];
                      }
                      if (bi->requires_grad) {
                          detail::ensure_grad(*bi);
                          for (std::size_t i = 0; i < o.grad.size(); ++i) bi->grad[i] -= o.grad[i];
                      }
                  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    auto ai = a.impl(), bi = b.impl();
    std::vector<double> out(ai->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai->data[i] * bi->data[i];
    return finish(make_out(ai->shape, std::move(out)), "mul", {ai, bi},
                  [ai, bi](const TensorImpl& o) {
                      if (ai->requires_grad) {
                          detail::ensure_grad(*ai);
                          for (std::size_t i = 0; i < o.grad.size(); ++i)
                              ai->grad[i] += o.grad[i] * bi->data[i];
                      }
                      if (bi->requires_grad) {
                          detail::ensure_grad(*bi);
                          for (std::size_t i = 0; i < o.grad.size(); ++i)
                              bi->grad[i] += o.grad[i] * ai->data[i];
                      }
                  });
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape("div", a, b);
    auto ai = a.impl(), bi = b.impl();
    std::vector<double> out(ai->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai->data[i] / bi->data[i];
    return finish(make_out(ai->shape, std::move(out)), "div", {ai, bi},
                  [ai, bi](const TensorImpl& o) {
                      if (ai->requires_grad) {
                          detail::ensure_grad(*ai);
                          for (std::size_t i = 0; i < o.grad.size(); ++i)
                              ai->grad[i] += o.grad[i] / bi->data[i];
                      }
                      if (bi->requires_grad) {
                          detail::ensure_grad(*bi);
                          for (std::size_t i = 0; i < o.grad.size(); ++i) {
                              double d = bi->data[i];
                              bi->grad[i] -= o.grad[i] * ai->data[i] / (d * d);
                          }
                      }
                  });
}

namespace {

Tensor unary(const char* op, const Tensor& a, const std::function<double(double)>& fwd,
             const std::function<double(double x, double y)>& dfdx) {
    auto ai = a.impl();
    std::vector<double> out(ai->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(ai->data[i]);
    return finish(make_out(ai->shape, std::move(out)), op, {ai},
                  [ai, dfdx](const TensorImpl& o) {
                      if (!ai->requires_grad) return;
                      detail::ensure_grad(*ai);
                      for (std::size_t i = 0; i < o.grad.size(); ++i)
                          ai->grad[i] += o.grad[i] * dfdx(ai->data[i], o.data[i]);
                  });
}

}  // namespace

Tensor add_scalar(const Tensor& a, double s) {
    return unary("add_scalar", a, [s](double x) { return x + s; },
                 [](double, double) { return 1.0; });
}

Tensor scalar_mul(const Tensor& a, double s) {
    return unary("scalar_mul", a, [s](double x) { return x * s; },
                 [s](double, double) { return s; });
}

Tensor sub_from_scalar(double s, const Tensor& a) {
    return unary("sub_from_scalar", a, [s](double x) { return s - x; },
                 [](double, double) { return -1.0; });
}

Tensor div_scalar_by(double s, const Tensor& a) {
    return unary("div_scalar_by", a, [s](double x) { return s / x; },
                 [s](double x, double) { return -s / (x * x); });
}

Tensor neg(const Tensor& a) {
    return unary("neg", a, [](double x) { return -x; },
                 [](double, double) { return -1.0; });
}

Tensor log(const Tensor& a) {
    for (double v : a.data())
        if (!(v > 0.0))
            throw std::domain_error("log: non-positive element; clamp the input first");
    return unary("log", a, [](double x) { return std::log(x); },
                 [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
    return unary("exp", a, [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must be <= hi");
    return unary("clamp", a,
                 [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
                 [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor relu(const Tensor& a) {
    return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary("sigmoid", a,
                 [](double x) {
                     if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                     double e = std::exp(x);
                     return e / (1.0 + e);
                 },
                 [](double, double y) { return y * (1.0 - y); });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
    auto ai = a.impl();
    double s = 0.0;
    for (double v : ai->data) s += v;
    return finish(make_out({1}, {s}), "sum", {ai}, [ai](const TensorImpl& o) {
        if (!ai->requires_grad) return;
        detail::ensure_grad(*ai);
        double g = o.grad[0];
        for (double& gv : ai->grad) gv += g;
    });
}

Tensor mean(const Tensor& a) {
    auto ai = a.impl();
    if (ai->data.empty()) throw std::invalid_argument("mean of empty tensor");
    double s = 0.0;
    for (double v : ai->data) s += v;
    double inv = 1.0 / static_cast<double>(ai->data.size());
    return finish(make_out({1}, {s * inv}), "mean", {ai}, [ai, inv](const TensorImpl& o) {
        if (!ai->requires_grad) return;
        detail::ensure_grad(*ai);
        double g = o.grad[0] * inv;
        for (double& gv : ai->grad) gv += g;
    });
}

Tensor sum_over(const Tensor& a, const std::vector<int>& axes) {
    auto ai = a.impl();
    const Shape& shape = ai->shape;
    std::vector<bool> reduced(shape.size(), false);
    for (int ax : axes) {
        if (ax < 0 || ax >= static_cast<int>(shape.size()))
            throw std::invalid_argument("sum_over: axis " + std::to_string(ax) +
                                        " invalid for shape " + shape_str(shape));
        if (reduced[ax]) throw std::invalid_argument("sum_over: duplicate axis");
        reduced[ax] = true;
    }
    Shape out_shape;
    for (std::size_t d = 0; d < shape.size(); ++d)
        if (!reduced[d]) out_shape.push_back(shape[d]);
    if (out_shape.empty()) out_shape.push_back(1);

    // Row-major strides of the input and the flat output index for every
    // input element.
    std::vector<std::size_t> strides(shape.size(), 1);
    for (int d = static_cast<int>(shape.size()) - 2; d >= 0; --d)
        strides[d] = strides[d + 1] * static_cast<std::size_t>(shape[d + 1]);
    std::vector<std::size_t> out_strides;
    {
        std::vector<std::size_t> os(out_shape.size(), 1);
        for (int d = static_cast<int>(out_shape.size()) - 2; d >= 0; --d)
            os[d] = os[d + 1] * static_cast<std::size_t>(out_shape[d + 1]);
        std::size_t k = 0;
        for (std::size_t d = 0; d < shape.size(); ++d)
            out_strides.push_back(reduced[d] ? 0 : os[k++]);
    }

    std::size_t n = ai->data.size();
    std::vector<double> out(shape_numel(out_shape), 0.0);
    std::vector<std::size_t> out_index(n);
    for (std::size_t flat = 0; flat < n; ++flat) {
        std::size_t rem = flat, oidx = 0;
        for (std::size_t d = 0; d < shape.size(); ++d) {
            std::size_t coord = rem / strides[d];
            rem %= strides[d];
            oidx += coord * out_strides[d];
        }
        out_index[flat] = oidx;
        out[oidx] += ai->data[flat];
    }

    return finish(make_out(std::move(out_shape), std::move(out)), "sum_over", {ai},
                  [ai, out_index = std::move(out_index)](const TensorImpl& o) {
                      if (!ai->requires_grad) return;
                      detail::ensure_grad(*ai);
                      for (std::size_t i = 0; i < out_index.size(); ++i)
                          ai->grad[i] += o.grad[out_index[i]];
                  });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
    auto root = loss.impl();
    if (!root) throw std::logic_error("backward on undefined tensor");
    if (root->data.size() != 1)
        throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                    shape_str(root->shape));
    if (!root->requires_grad)
        throw std::invalid_argument("backward: loss does not require grad");

    // Iterative postorder DFS; children appear after all their parents.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    struct Frame {
        TensorImpl* impl;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent == 0) {
            if (visited.count(f.impl)) {
                stack.pop_back();
                continue;
            }
            if (f.impl->node && f.impl->node->consumed)
                throw std::runtime_error(
                    "backward: graph already consumed (one backward pass per forward graph)");
        }
        Node* node = f.impl->node.get();
        std::size_t nparents = node ? node->parents.size() : 0;
        if (f.next_parent < nparents) {
            TensorImpl* p = node->parents[f.next_parent++].get();
            if (!visited.count(p)) stack.push_back({p, 0});
        } else {
            visited.insert(f.impl);
            order.push_back(f.impl);
            stack.pop_back();
        }
    }

    detail::ensure_grad(*root);
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* t = *it;
        if (!t->node) continue;
        t->node->consumed = true;
        if (t->grad.empty()) detail::ensure_grad(*t);
        t->node->backward(*t);
    }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& input,
                  double step) {
    if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be > 0");

    Tensor x = from_data(input.shape(), {input.data().begin(), input.data().end()}, true);
    Tensor y = f(x);
    if (y.numel() != 1)
        throw std::invalid_argument("grad_check: function must produce a scalar");
    backward(y);
    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad()) {
        auto g = x.grad();
        analytic.assign(g.begin(), g.end());
    }

    std::vector<double> base(input.data().begin(), input.data().end());
    double worst = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> hi = base, lo = base;
        hi[i] += step;
        lo[i] -= step;
        double fp = f(from_data(input.shape(), std::move(hi))).item();
        double fm = f(from_data(input.shape(), std::move(lo))).item();
        double numeric = (fp - fm) / (2.0 * step);
        double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// RNG
// ---------------------------------------------------------------------------

static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t x = base ^ (salt * 0x9e3779b97f4a7c15ULL + 0x7f4a7c159e3779b9ULL);
    return splitmix64(x);
}

RandomStream::RandomStream(std::uint64_t seed) {
    // xoshiro256** seeded through splitmix64
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
}

static inline std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
}

std::uint64_t RandomStream::next_u64() {
    std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double RandomStream::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::next_gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // Box-Muller on (0,1] uniforms
    double u1 = 1.0 - next_uniform();
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

std::uint64_t RandomStream::next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below(0)");
    // Rejection sampling keeps the draw unbiased and the stream reproducible.
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

}  // namespace vsnet

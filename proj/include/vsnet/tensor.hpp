#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vsnet {

// Extents in N,C,H,W order for image data. Factories reject extents < 1;
// the raw constructor additionally admits 0 extents (empty tensors, used by
// channel concatenation edge cases).
using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node;

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;        // allocated lazily during backward
    std::shared_ptr<Node> node;      // provenance; null marks a graph leaf
};

// One recorded operation. Parents are held alive by the node; the node is
// owned by its output tensor, so the graph is a DAG of shared_ptrs with no
// cycles.
struct Node {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(const TensorImpl& out)> backward;
    bool consumed = false;
};

void accumulate_grad(TensorImpl& t, std::size_t i, double v);
void ensure_grad(TensorImpl& t);

}  // namespace detail

// Dense float64 tensor with reverse-mode autodiff. A Tensor is a cheap
// handle; ops never mutate their inputs, and backward never mutates leaf
// data. Graphs are single-use: backward() consumes every node it reaches.
class Tensor {
  public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t numel() const;
    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool is_leaf() const;

    std::span<const double> data() const;
    // In-place access for leaf tensors only (parameter updates). Throws on
    // tensors with provenance.
    std::span<double> mutable_data();

    double item() const;  // scalar tensors only
    double at(std::size_t i) const;

    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
    static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl);

  private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// ---- factories ----
Tensor zeros(const Shape& shape, bool requires_grad = false);
Tensor full(const Shape& shape, double value, bool requires_grad = false);
Tensor randn(const Shape& shape, std::uint64_t seed, double stddev = 1.0,
             bool requires_grad = false);
Tensor from_data(const Shape& shape, std::vector<double> data,
                 bool requires_grad = false);
Tensor scalar(double value, bool requires_grad = false);

// ---- elementwise ops ----
// Tensor-tensor forms require identical shapes; no general broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor scalar_mul(const Tensor& a, double s);
Tensor sub_from_scalar(double s, const Tensor& a);  // s - a
Tensor div_scalar_by(double s, const Tensor& a);    // s / a
Tensor neg(const Tensor& a);

Tensor log(const Tensor& a);    // throws on non-positive elements
Tensor exp(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Sums over the given axes, removing them from the shape. Reducing every
// axis yields a scalar (shape {1}).
Tensor sum_over(const Tensor& a, const std::vector<int>& axes);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scalar_mul(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scalar_mul(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(double s, const Tensor& a) { return sub_from_scalar(s, a); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- autograd ----
// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every reachable
// tensor that requires grad. The traversed graph is consumed; a second
// backward over any of its nodes throws.
void backward(const Tensor& loss);

// Max over coordinates of |analytic - numeric| / max(1, |numeric|), with
// numeric gradients from central finite differences of `f` (which must map
// a tensor to a scalar tensor and be deterministic across calls).
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& input, double step = 1e-6);

// Shared deterministic RNG helpers (splitmix-style seed derivation plus an
// explicit Box-Muller gaussian so streams are reproducible bit-for-bit).
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt);

class RandomStream {
  public:
    explicit RandomStream(std::uint64_t seed);
    std::uint64_t next_u64();
    double next_uniform();              // [0, 1)
    double next_gaussian();             // mean 0, stddev 1
    std::uint64_t next_below(std::uint64_t n);

  private:
    std::uint64_t state_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace vsnet

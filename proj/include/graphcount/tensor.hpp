#pragma once

// Dense 64-bit tensors with reverse-mode automatic differentiation.
//
// Ops are free functions taking a Tape. Each op computes its forward value
// eagerly and, when any input participates in differentiation, records a
// backward closure on the tape. Tape::backward seeds the loss gradient with
// one and replays the closures in reverse recording order; gradients of
// leaf tensors accumulate additively across calls, while gradients of
// recorded intermediates are consumed and reset during the sweep.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "graphcount/error.hpp"

namespace graphcount {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first touched
    bool requires_grad = false;

    bool has_grad() const { return !grad.empty(); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    std::size_t size() const { return impl_->value.size(); }

    double* data() { return impl_->value.data(); }
    const double* data() const { return impl_->value.data(); }
    std::vector<double>& values() { return impl_->value; }
    const std::vector<double>& values() const { return impl_->value; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

    bool has_grad() const { return impl_->has_grad(); }
    void ensure_grad() { impl_->ensure_grad(); }
    void zero_grad() { impl_->zero_grad(); }
    std::vector<double>& grad() { return impl_->grad; }
    const std::vector<double>& grad() const { return impl_->grad; }

    double item() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

class Tape {
public:
    using BackwardFn = std::function<void()>;

    void record(std::shared_ptr<TensorImpl> output, BackwardFn fn);

    // Seeds d(loss)/d(loss) = 1 and replays all recorded closures in
    // reverse order. Leaf gradients accumulate; intermediate gradients are
    // zeroed as soon as their producing op has been processed, so repeated
    // calls add one full gradient copy per call.
    void backward(const Tensor& loss);

    void clear();
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::shared_ptr<TensorImpl> out;
        BackwardFn fn;
    };
    std::vector<Node> nodes_;
};

// ---- elementwise / reduction ops ----
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);
Tensor sum(Tape& tape, const Tensor& a);
Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);

// ---- linear algebra ----
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// ---- spatial ops on [C,H,W] tensors ----
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride, int pad);
Tensor upsample_nearest(Tape& tape, const Tensor& x, int factor);
Tensor avgpool2x2(Tape& tape, const Tensor& x);
// Reflect-pads (right/bottom only, edge not repeated) up to target_h x target_w.
Tensor pad_reflect_br(Tape& tape, const Tensor& x, int target_h, int target_w);

// ---- layout changes ----
Tensor chw_to_nc(Tape& tape, const Tensor& x);             // [C,H,W] -> [H*W, C]
Tensor nc_to_chw(Tape& tape, const Tensor& x, int h, int w);  // [N,C] -> [C,h,w]

// ---- optimizer ----
class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void add_group(const std::vector<Tensor>& params, double lr);

    // Bias-corrected update of every registered parameter from its current
    // gradient. Gradients are left untouched; call zero_grad afterwards.
    void step();

    void zero_grad();
    long long step_count() const { return t_; }

private:
    struct Entry {
        Tensor param;
        double lr;
        std::vector<double> m, v;
    };
    std::vector<Entry> entries_;
    double beta1_, beta2_, eps_;
    long long t_ = 0;
};

}  // namespace graphcount

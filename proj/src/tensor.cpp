#include "graphcount/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "graphcount/kernels.hpp"

namespace graphcount {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = std::move(shape);
    for (int d : t.impl_->shape)
        if (d <= 0) throw ShapeError("tensor dimension must be positive, got shape " + shape_str(t.impl_->shape));
    t.impl_->value.assign(shape_numel(t.impl_->shape), 0.0);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.impl_->value.begin(), t.impl_->value.end(), v);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = std::move(shape);
    if (data.size() != shape_numel(t.impl_->shape))
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(t.impl_->shape));
    t.impl_->value = std::move(data);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

double Tensor::item() const {
    if (size() != 1) throw UsageError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
    return impl_->value[0];
}

void Tape::record(std::shared_ptr<TensorImpl> output, BackwardFn fn) {
    output->requires_grad = true;
    nodes_.push_back(Node{std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw UsageError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        it->fn();
        // This op's output gradient is fully consumed now; resetting it here
        // keeps leaf accumulation correct across repeated backward calls.
        it->out->zero_grad();
    }
}

void Tape::clear() { nodes_.clear(); }

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

bool any_grad(const Tensor& a) { return a.requires_grad(); }
bool any_grad(const Tensor& a, const Tensor& b) { return a.requires_grad() || b.requires_grad(); }

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (any_grad(a, b)) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape.record(oi, [ai, bi, oi, n] {
            if (!oi->has_grad()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) bi->grad[i] += oi->grad[i];
            }
        });
    }
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (any_grad(a, b)) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape.record(oi, [ai, bi, oi, n] {
            if (!oi->has_grad()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) bi->grad[i] -= oi->grad[i];
            }
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (any_grad(a, b)) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape.record(oi, [ai, bi, oi, n] {
            if (!oi->has_grad()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i] * bi->value[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) bi->grad[i] += oi->grad[i] * ai->value[i];
            }
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
    if (any_grad(a)) {
        auto ai = a.impl();
        auto oi = out.impl();
        tape.record(oi, [ai, oi, c, n] {
            if (!oi->has_grad() || !ai->requires_grad) return;
            ai->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i] * c;
        });
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i];
    Tensor out = Tensor::scalar(acc);
    if (any_grad(a)) {
        auto ai = a.impl();
        auto oi = out.impl();
        const std::size_t n = a.size();
        tape.record(oi, [ai, oi, n] {
            if (!oi->has_grad() || !ai->requires_grad) return;
            ai->ensure_grad();
            const double g = oi->grad[0];
            for (std::size_t i = 0; i < n; ++i) ai->grad[i] += g;
        });
    }
    return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
    if (any_grad(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape.record(oi, [xi, oi, n] {
            if (!oi->has_grad() || !xi->requires_grad) return;
            xi->ensure_grad();
            // subgradient at exactly zero is zero
            for (std::size_t i = 0; i < n; ++i)
                if (xi->value[i] > 0.0) xi->grad[i] += oi->grad[i];
        });
    }
    return out;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
    if (any_grad(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape.record(oi, [xi, oi, n] {
            if (!oi->has_grad() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const double s = oi->value[i];
                xi->grad[i] += oi->grad[i] * s * (1.0 - s);
            }
        });
    }
    return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    kernels::matmul(a.data(), b.data(), out.data(), m, k, n);
    if (any_grad(a, b)) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape.record(oi, [ai, bi, oi, m, k, n] {
            if (!oi->has_grad()) return;
            if (ai->requires_grad) {
                ai->ensure_grad();
                kernels::matmul_add_nt(oi->grad.data(), bi->value.data(), ai->grad.data(), m, k, n);
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                kernels::matmul_add_tn(ai->value.data(), oi->grad.data(), bi->grad.data(), m, k, n);
            }
        });
    }
    return out;
}

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride, int pad) {
    if (stride < 1 || pad < 0)
        throw ConfigError("conv2d: stride must be >= 1 and pad >= 0 (stride=" +
                          std::to_string(stride) + ", pad=" + std::to_string(pad) + ")");
    if (x.rank() != 3 || w.rank() != 4 || x.dim(0) != w.dim(1))
        throw ShapeError("conv2d: incompatible shapes input " + shape_str(x.shape()) +
                         " kernel " + shape_str(w.shape()));
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout))
        throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(cout) + " output channels");
    const int hnum = h + 2 * pad - kh;
    const int wnum = wd + 2 * pad - kw;
    if (hnum < 0 || wnum < 0 || hnum % stride != 0 || wnum % stride != 0)
        throw ConfigError("conv2d: non-integral output size for input " + shape_str(x.shape()) +
                          " kernel " + shape_str(w.shape()) + " stride " + std::to_string(stride) +
                          " pad " + std::to_string(pad));
    const int oh = hnum / stride + 1;
    const int ow = wnum / stride + 1;

    Tensor out = Tensor::zeros({cout, oh, ow});
    kernels::conv2d_forward(x.data(), w.data(), bias.defined() ? bias.data() : nullptr, out.data(),
                            cin, h, wd, cout, kh, kw, stride, pad, oh, ow);
    if (any_grad(x, w) || (bias.defined() && bias.requires_grad())) {
        auto xi = x.impl(), wi = w.impl(), oi = out.impl();
        auto bimpl = bias.defined() ? bias.impl() : nullptr;
        tape.record(oi, [=] {
            if (!oi->has_grad()) return;
            if (xi->requires_grad) {
                xi->ensure_grad();
                kernels::conv2d_backward_input_add(oi->grad.data(), wi->value.data(), xi->grad.data(),
                                                   cin, h, wd, cout, kh, kw, stride, pad, oh, ow);
            }
            if (wi->requires_grad) {
                wi->ensure_grad();
                kernels::conv2d_backward_kernel_add(oi->grad.data(), xi->value.data(), wi->grad.data(),
                                                    cin, h, wd, cout, kh, kw, stride, pad, oh, ow);
            }
            if (bimpl && bimpl->requires_grad) {
                bimpl->ensure_grad();
                kernels::conv2d_backward_bias_add(oi->grad.data(), bimpl->grad.data(), cout, oh, ow);
            }
        });
    }
    return out;
}

Tensor upsample_nearest(Tape& tape, const Tensor& x, int factor) {
    if (factor < 1) throw ConfigError("upsample_nearest: factor must be >= 1, got " + std::to_string(factor));
    if (x.rank() != 3) throw ShapeError("upsample_nearest: expected [C,H,W], got " + shape_str(x.shape()));
    const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int oh = h * factor, ow = wd * factor;
    Tensor out = Tensor::zeros({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y) {
            const double* xrow = x.data() + (static_cast<std::size_t>(ch) * h + y / factor) * wd;
            double* orow = out.data() + (static_cast<std::size_t>(ch) * oh + y) * ow;
            for (int xx = 0; xx < ow; ++xx) orow[xx] = xrow[xx / factor];
        }
    if (any_grad(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape.record(oi, [xi, oi, c, h, wd, factor, oh, ow] {
            if (!oi->has_grad() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < oh; ++y) {
                    double* xrow = xi->grad.data() + (static_cast<std::size_t>(ch) * h + y / factor) * wd;
                    const double* orow = oi->grad.data() + (static_cast<std::size_t>(ch) * oh + y) * ow;
                    for (int xx = 0; xx < ow; ++xx) xrow[xx / factor] += orow[xx];
                }
        });
    }
    return out;
}

Tensor avgpool2x2(Tape& tape, const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("avgpool2x2: expected [C,H,W], got " + shape_str(x.shape()));
    const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    if (h % 2 != 0 || wd % 2 != 0)
        throw ConfigError("avgpool2x2: spatial dims must be even, got " + shape_str(x.shape()));
    const int oh = h / 2, ow = wd / 2;
    Tensor out = Tensor::zeros({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y) {
            const double* r0 = x.data() + (static_cast<std::size_t>(ch) * h + 2 * y) * wd;
            const double* r1 = r0 + wd;
            double* orow = out.data() + (static_cast<std::size_t>(ch) * oh + y) * ow;
            for (int xx = 0; xx < ow; ++xx)
                orow[xx] = 0.25 * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
        }
    if (any_grad(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape.record(oi, [xi, oi, c, h, wd, oh, ow] {
            if (!oi->has_grad() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < oh; ++y) {
                    double* r0 = xi->grad.data() + (static_cast<std::size_t>(ch) * h + 2 * y) * wd;
                    double* r1 = r0 + wd;
                    const double* orow = oi->grad.data() + (static_cast<std::size_t>(ch) * oh + y) * ow;
                    for (int xx = 0; xx < ow; ++xx) {
                        const double g = 0.25 * orow[xx];
                        r0[2 * xx] += g;
                        r0[2 * xx + 1] += g;
                        r1[2 * xx] += g;
                        r1[2 * xx + 1] += g;
                    }
                }
        });
    }
    return out;
}

Tensor pad_reflect_br(Tape& tape, const Tensor& x, int target_h, int target_w) {
    if (x.rank() != 3) throw ShapeError("pad_reflect_br: expected [C,H,W], got " + shape_str(x.shape()));
    const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    if (target_h < h || target_w < wd)
        throw InputError("pad_reflect_br: target smaller than input");
    if (target_h - h >= h || target_w - wd >= wd)
        throw InputError("pad_reflect_br: pad amount must be smaller than the input extent");
    auto src_y = [h](int y) { return y < h ? y : 2 * h - 2 - y; };
    auto src_x = [wd](int xx) { return xx < wd ? xx : 2 * wd - 2 - xx; };
    Tensor out = Tensor::zeros({c, target_h, target_w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < target_h; ++y) {
            const double* xrow = x.data() + (static_cast<std::size_t>(ch) * h + src_y(y)) * wd;
            double* orow = out.data() + (static_cast<std::size_t>(ch) * target_h + y) * target_w;
            for (int xx = 0; xx < target_w; ++xx) orow[xx] = xrow[src_x(xx)];
        }
    if (any_grad(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape.record(oi, [xi, oi, c, h, wd, target_h, target_w, src_y, src_x] {
            if (!oi->has_grad() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < target_h; ++y) {
                    double* xrow = xi->grad.data() + (static_cast<std::size_t>(ch) * h + src_y(y)) * wd;
                    const double* orow = oi->grad.data() + (static_cast<std::size_t>(ch) * target_h + y) * target_w;
                    for (int xx = 0; xx < target_w; ++xx) xrow[src_x(xx)] += orow[xx];
                }
        });
    }
    return out;
}

Tensor chw_to_nc(Tape& tape, const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("chw_to_nc: expected [C,H,W], got " + shape_str(x.shape()));
    const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int n = h * wd;
    Tensor out = Tensor::zeros({n, c});
    for (int ch = 0; ch < c; ++ch) {
        const double* xc = x.data() + static_cast<std::size_t>(ch) * n;
        for (int i = 0; i < n; ++i) out.data()[static_cast<std::size_t>(i) * c + ch] = xc[i];
    }
    if (any_grad(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape.record(oi, [xi, oi, c, n] {
            if (!oi->has_grad() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (int ch = 0; ch < c; ++ch) {
                double* xc = xi->grad.data() + static_cast<std::size_t>(ch) * n;
                for (int i = 0; i < n; ++i) xc[i] += oi->grad[static_cast<std::size_t>(i) * c + ch];
            }
        });
    }
    return out;
}

Tensor nc_to_chw(Tape& tape, const Tensor& x, int h, int w) {
    if (x.rank() != 2) throw ShapeError("nc_to_chw: expected [N,C], got " + shape_str(x.shape()));
    const int n = x.dim(0), c = x.dim(1);
    if (n != h * w)
        throw ShapeError("nc_to_chw: node count " + std::to_string(n) + " != " + std::to_string(h) +
                         "x" + std::to_string(w));
    Tensor out = Tensor::zeros({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        double* oc = out.data() + static_cast<std::size_t>(ch) * n;
        for (int i = 0; i < n; ++i) oc[i] = x.data()[static_cast<std::size_t>(i) * c + ch];
    }
    if (any_grad(x)) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape.record(oi, [xi, oi, c, n] {
            if (!oi->has_grad() || !xi->requires_grad) return;
            xi->ensure_grad();
            for (int ch = 0; ch < c; ++ch) {
                const double* oc = oi->grad.data() + static_cast<std::size_t>(ch) * n;
                for (int i = 0; i < n; ++i) xi->grad[static_cast<std::size_t>(i) * c + ch] += oc[i];
            }
        });
    }
    return out;
}

void Adam::add_group(const std::vector<Tensor>& params, double lr) {
    for (const Tensor& p : params) {
        Entry e;
        e.param = p;
        e.lr = lr;
        e.m.assign(p.size(), 0.0);
        e.v.assign(p.size(), 0.0);
        entries_.push_back(std::move(e));
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Entry& e : entries_) {
        if (!e.param.has_grad())
            throw UsageError("adam: parameter has no gradient; run backward before step");
        const std::vector<double>& g = e.param.grad();
        double* p = e.param.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            e.m[i] = beta1_ * e.m[i] + (1.0 - beta1_) * g[i];
            e.v[i] = beta2_ * e.v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = e.m[i] / bc1;
            const double vhat = e.v[i] / bc2;
            p[i] -= e.lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (Entry& e : entries_)
        if (e.param.has_grad()) e.param.zero_grad();
}

}  // namespace graphcount

#include "graphcount/nn.hpp"

#include <cmath>

namespace graphcount {

void init_fan_in_uniform(Tensor& t, int fan_in, Rng& rng) {
    const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-b, b);
}

Conv2d::Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng, bool has_bias)
    : stride(stride_), pad(pad_) {
    weight = Tensor::zeros({cout, cin, k, k}, true);
    const int fan_in = cin * k * k;
    init_fan_in_uniform(weight, fan_in, rng);
    if (has_bias) {
        bias = Tensor::zeros({cout}, true);
        init_fan_in_uniform(bias, fan_in, rng);
    }
}

void Conv2d::zero_init() {
    std::fill(weight.values().begin(), weight.values().end(), 0.0);
    if (bias.defined()) std::fill(bias.values().begin(), bias.values().end(), 0.0);
}

Tensor Conv2d::forward(Tape& tape, const Tensor& x) const {
    return conv2d(tape, x, weight, bias, stride, pad);
}

void Conv2d::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

BatchNorm2d::BatchNorm2d(int channels) {
    gamma = Tensor::full({channels}, 1.0, true);
    beta = Tensor::zeros({channels}, true);
    running_mean = Tensor::zeros({channels});
    running_var = Tensor::full({channels}, 1.0);
}

Tensor BatchNorm2d::forward(Tape& tape, const Tensor& x, bool training) {
    if (x.rank() != 3 || x.dim(0) != gamma.dim(0))
        throw ShapeError("batchnorm: input " + shape_str(x.shape()) + " does not match " +
                         std::to_string(gamma.dim(0)) + " channels");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int n = h * w;
    if (n == 0) throw ConfigError("batchnorm: zero spatial extent");
    std::vector<double> mean(c), invstd(c);
    if (training) {
        for (int ch = 0; ch < c; ++ch) {
            const double* xc = x.data() + static_cast<std::size_t>(ch) * n;
            double mu = 0.0;
            for (int i = 0; i < n; ++i) mu += xc[i];
            mu /= n;
            double var = 0.0;
            for (int i = 0; i < n; ++i) {
                const double d = xc[i] - mu;
                var += d * d;
            }
            var /= n;  // biased
            mean[ch] = mu;
            invstd[ch] = 1.0 / std::sqrt(var + eps);
            running_mean.data()[ch] = (1.0 - momentum) * running_mean.data()[ch] + momentum * mu;
            running_var.data()[ch] = (1.0 - momentum) * running_var.data()[ch] + momentum * var;
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            mean[ch] = running_mean.data()[ch];
            invstd[ch] = 1.0 / std::sqrt(running_var.data()[ch] + eps);
        }
    }

    Tensor out = Tensor::zeros(x.shape());
    for (int ch = 0; ch < c; ++ch) {
        const double* xc = x.data() + static_cast<std::size_t>(ch) * n;
        double* oc = out.data() + static_cast<std::size_t>(ch) * n;
        const double g = gamma.data()[ch], b = beta.data()[ch];
        for (int i = 0; i < n; ++i) oc[i] = g * (xc[i] - mean[ch]) * invstd[ch] + b;
    }

    if (x.requires_grad() || gamma.requires_grad() || beta.requires_grad()) {
        auto xi = x.impl();
        auto gi = gamma.impl();
        auto bi = beta.impl();
        auto oi = out.impl();
        tape.record(oi, [xi, gi, bi, oi, mean, invstd, c, n, training] {
            if (!oi->has_grad()) return;
            for (int ch = 0; ch < c; ++ch) {
                const double* xc = xi->value.data() + static_cast<std::size_t>(ch) * n;
                const double* dyc = oi->grad.data() + static_cast<std::size_t>(ch) * n;
                const double mu = mean[ch], is = invstd[ch], g = gi->value[ch];
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int i = 0; i < n; ++i) {
                    sum_dy += dyc[i];
                    sum_dy_xhat += dyc[i] * (xc[i] - mu) * is;
                }
                if (gi->requires_grad) {
                    gi->ensure_grad();
                    gi->grad[ch] += sum_dy_xhat;
                }
                if (bi->requires_grad) {
                    bi->ensure_grad();
                    bi->grad[ch] += sum_dy;
                }
                if (xi->requires_grad) {
                    xi->ensure_grad();
                    double* dxc = xi->grad.data() + static_cast<std::size_t>(ch) * n;
                    if (training) {
                        const double m_dy = sum_dy / n;
                        const double m_dy_xhat = sum_dy_xhat / n;
                        for (int i = 0; i < n; ++i) {
                            const double xhat = (xc[i] - mu) * is;
                            dxc[i] += g * is * (dyc[i] - m_dy - xhat * m_dy_xhat);
                        }
                    } else {
                        // running stats are constants here
                        for (int i = 0; i < n; ++i) dxc[i] += g * is * dyc[i];
                    }
                }
            }
        });
    }
    return out;
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

void BatchNorm2d::collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.emplace_back(prefix + ".running_mean", running_mean);
    out.emplace_back(prefix + ".running_var", running_var);
}

}  // namespace graphcount

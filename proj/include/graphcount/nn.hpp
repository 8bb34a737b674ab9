#pragma once

// Trainable layers on top of the tensor ops. Each layer owns its parameters
// and exposes them as (name, tensor) pairs for the optimizer and checkpoints.

#include <string>
#include <utility>
#include <vector>

#include "graphcount/rng.hpp"
#include "graphcount/tensor.hpp"

namespace graphcount {

using NamedTensor = std::pair<std::string, Tensor>;

// Uniform(-b, b) with b = 1/sqrt(fan_in), drawn row-major in index order.
void init_fan_in_uniform(Tensor& t, int fan_in, Rng& rng);

struct Conv2d {
    Tensor weight;  // [cout, cin, k, k]
    Tensor bias;    // [cout], undefined when has_bias = false
    int stride = 1;
    int pad = 0;

    Conv2d() = default;
    Conv2d(int cin, int cout, int k, int stride, int pad, Rng& rng, bool has_bias = true);

    // Zeroes weight and bias in place.
    void zero_init();

    Tensor forward(Tape& tape, const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Per-channel batch norm over the spatial dims of a single [C,H,W] map.
// Training mode normalizes with biased batch statistics and updates the
// running estimates (momentum 0.1); eval mode uses the running estimates.
struct BatchNorm2d {
    Tensor gamma;         // [C]
    Tensor beta;          // [C]
    Tensor running_mean;  // [C], buffer
    Tensor running_var;   // [C], buffer
    double momentum = 0.1;
    double eps = 1e-5;

    BatchNorm2d() = default;
    explicit BatchNorm2d(int channels);

    Tensor forward(Tape& tape, const Tensor& x, bool training);
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
    void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

}  // namespace graphcount

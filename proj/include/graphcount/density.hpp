#pragma once

// Density map prediction head and ground-truth density synthesis.

#include <vector>

#include "graphcount/backbone.hpp"
#include "graphcount/nn.hpp"

namespace graphcount {

struct DensityHeadConfig {
    int blocks = 3;           // conv3x3 + BN + ReLU repetitions
    int hidden_channels = 64;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

class DensityHead {
  public:
    DensityHead() = default;
    DensityHead(int in_channels, const DensityHeadConfig& cfg, Rng& rng);

    // F [C,H,W] -> M [1,H,W], unclamped.
    Tensor forward(Tape& tape, const Tensor& f, bool training);

    void collect(std::vector<NamedTensor>& out) const;
    void collect_buffers(std::vector<NamedTensor>& out) const;

  private:
    std::vector<ConvBnBlock> blocks_;
    Conv2d final_;
};

// Sum of per-point discrete Gaussians on the stride-s cell grid. Each kernel
// has std sigma (in cells), is truncated to a box of half-width ceil(3*sigma)
// intersected with the map, and is renormalized to unit mass over the visible
// cells, so every in-bounds point contributes exactly 1 to the map sum.
Tensor gt_density_map(const std::vector<Point>& points, int map_h, int map_w, int stride,
                      double sigma);

}  // namespace graphcount

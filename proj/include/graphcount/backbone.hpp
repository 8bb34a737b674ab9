#pragma once

// Three-stage feature extractor (strides 2/4/8 via 2x2 average pooling) and a
// minimal PA-FPN fusion: 1x1 laterals, top-down nearest-neighbor additions,
// bottom-up stride-2 additions. The fused map is taken at stride 8.

#include <array>
#include <vector>

#include "graphcount/nn.hpp"

namespace graphcount {

struct BackboneConfig {
    std::array<int, 3> stage_channels{16, 32, 64};
    int convs_per_stage = 2;
    int fused_channels = 64;
    static constexpr int stride = 8;
};

struct ConvBnBlock {
    Conv2d conv;
    BatchNorm2d bn;
};

class Backbone {
  public:
    Backbone() = default;
    Backbone(const BackboneConfig& cfg, Rng& rng);

    // image is [3, H0, W0] with H0, W0 multiples of the output stride.
    std::array<Tensor, 3> forward(Tape& tape, const Tensor& image, bool training);

    void collect(std::vector<NamedTensor>& out) const;
    void collect_buffers(std::vector<NamedTensor>& out) const;

  private:
    std::array<std::vector<ConvBnBlock>, 3> stages_;
};

class PaFpn {
  public:
    PaFpn() = default;
    PaFpn(const BackboneConfig& cfg, Rng& rng);

    Tensor forward(Tape& tape, const std::array<Tensor, 3>& features) const;

    void collect(std::vector<NamedTensor>& out) const;

  private:
    Tensor downsample(Tape& tape, const Tensor& x, int which) const;

    std::array<Conv2d, 3> lateral_;
    std::array<Conv2d, 2> down_;
};

}  // namespace graphcount

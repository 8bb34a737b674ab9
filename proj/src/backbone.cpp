#include "graphcount/backbone.hpp"

namespace graphcount {

Backbone::Backbone(const BackboneConfig& cfg, Rng& rng) {
    int cin = 3;
    for (int s = 0; s < 3; ++s) {
        const int cout = cfg.stage_channels[static_cast<std::size_t>(s)];
        for (int b = 0; b < cfg.convs_per_stage; ++b) {
            ConvBnBlock block;
            block.conv = Conv2d(b == 0 ? cin : cout, cout, 3, 1, 1, rng, /*has_bias=*/false);
            block.bn = BatchNorm2d(cout);
            stages_[static_cast<std::size_t>(s)].push_back(std::move(block));
        }
        cin = cout;
    }
}

std::array<Tensor, 3> Backbone::forward(Tape& tape, const Tensor& image, bool training) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw InputError("backbone: expected [3,H,W] image, got " + shape_str(image.shape()));
    if (image.dim(1) % BackboneConfig::stride != 0 || image.dim(2) % BackboneConfig::stride != 0)
        throw InputError("backbone: image dims " + shape_str(image.shape()) +
                         " must be multiples of " + std::to_string(BackboneConfig::stride));
    std::array<Tensor, 3> out;
    Tensor x = image;
    for (int s = 0; s < 3; ++s) {
        for (ConvBnBlock& block : stages_[static_cast<std::size_t>(s)]) {
            x = block.conv.forward(tape, x);
            x = block.bn.forward(tape, x, training);
            x = relu(tape, x);
        }
        x = avgpool2x2(tape, x);
        out[static_cast<std::size_t>(s)] = x;
    }
    return out;
}

void Backbone::collect(std::vector<NamedTensor>& out) const {
    for (int s = 0; s < 3; ++s)
        for (std::size_t b = 0; b < stages_[static_cast<std::size_t>(s)].size(); ++b) {
            const std::string prefix =
                "backbone.stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
            const ConvBnBlock& block = stages_[static_cast<std::size_t>(s)][b];
            block.conv.collect(prefix + ".conv", out);
            block.bn.collect(prefix + ".bn", out);
        }
}

void Backbone::collect_buffers(std::vector<NamedTensor>& out) const {
    for (int s = 0; s < 3; ++s)
        for (std::size_t b = 0; b < stages_[static_cast<std::size_t>(s)].size(); ++b) {
            const std::string prefix =
                "backbone.stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
            stages_[static_cast<std::size_t>(s)][b].bn.collect_buffers(prefix + ".bn", out);
        }
}

PaFpn::PaFpn(const BackboneConfig& cfg, Rng& rng) {
    const int c = cfg.fused_channels;
    for (int i = 0; i < 3; ++i)
        lateral_[static_cast<std::size_t>(i)] =
            Conv2d(cfg.stage_channels[static_cast<std::size_t>(i)], c, 1, 1, 0, rng);
    // Stride-2 3x3 downsampling convs run pad-free over an input reflect-padded
    // by one row/column, which keeps the output size exactly half on even maps.
    for (int i = 0; i < 2; ++i) down_[static_cast<std::size_t>(i)] = Conv2d(c, c, 3, 2, 0, rng);
}

Tensor PaFpn::downsample(Tape& tape, const Tensor& x, int which) const {
    Tensor padded = pad_reflect_br(tape, x, x.dim(1) + 1, x.dim(2) + 1);
    return down_[static_cast<std::size_t>(which)].forward(tape, padded);
}

Tensor PaFpn::forward(Tape& tape, const std::array<Tensor, 3>& features) const {
    Tensor l1 = lateral_[0].forward(tape, features[0]);
    Tensor l2 = lateral_[1].forward(tape, features[1]);
    Tensor l3 = lateral_[2].forward(tape, features[2]);

    // top-down
    Tensor p3 = l3;
    Tensor p2 = add(tape, l2, upsample_nearest(tape, p3, 2));
    Tensor p1 = add(tape, l1, upsample_nearest(tape, p2, 2));

    // bottom-up, fused output at stride 8
    Tensor n2 = add(tape, p2, downsample(tape, p1, 0));
    Tensor n3 = add(tape, p3, downsample(tape, n2, 1));
    return n3;
}

void PaFpn::collect(std::vector<NamedTensor>& out) const {
    for (int i = 0; i < 3; ++i)
        lateral_[static_cast<std::size_t>(i)].collect("fpn.lateral" + std::to_string(i + 1), out);
    for (int i = 0; i < 2; ++i)
        down_[static_cast<std::size_t>(i)].collect("fpn.down" + std::to_string(i + 1), out);
}

}  // namespace graphcount

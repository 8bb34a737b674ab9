#include "graphcount/density.hpp"

#include <cmath>

namespace graphcount {

DensityHead::DensityHead(int in_channels, const DensityHeadConfig& cfg, Rng& rng) {
    if (cfg.blocks < 1) throw ConfigError("density head: blocks must be >= 1");
    int cin = in_channels;
    for (int t = 0; t < cfg.blocks; ++t) {
        ConvBnBlock block;
        block.conv = Conv2d(cin, cfg.hidden_channels, 3, 1, 1, rng, /*has_bias=*/false);
        block.bn = BatchNorm2d(cfg.hidden_channels);
        blocks_.push_back(std::move(block));
        cin = cfg.hidden_channels;
    }
    final_ = Conv2d(cin, 1, 1, 1, 0, rng);
}

Tensor DensityHead::forward(Tape& tape, const Tensor& f, bool training) {
    Tensor x = f;
    for (ConvBnBlock& block : blocks_) {
        x = block.conv.forward(tape, x);
        x = block.bn.forward(tape, x, training);
        x = relu(tape, x);
    }
    return final_.forward(tape, x);
}

void DensityHead::collect(std::vector<NamedTensor>& out) const {
    for (std::size_t t = 0; t < blocks_.size(); ++t) {
        const std::string prefix = "density.block" + std::to_string(t);
        blocks_[t].conv.collect(prefix + ".conv", out);
        blocks_[t].bn.collect(prefix + ".bn", out);
    }
    final_.collect("density.final", out);
}

void DensityHead::collect_buffers(std::vector<NamedTensor>& out) const {
    for (std::size_t t = 0; t < blocks_.size(); ++t)
        blocks_[t].bn.collect_buffers("density.block" + std::to_string(t) + ".bn", out);
}

Tensor gt_density_map(const std::vector<Point>& points, int map_h, int map_w, int stride,
                      double sigma) {
    if (sigma <= 0.0) throw ConfigError("gt density: sigma must be positive");
    Tensor map = Tensor::zeros({1, map_h, map_w});
    const double img_h = static_cast<double>(map_h * stride);
    const double img_w = static_cast<double>(map_w * stride);
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

    for (std::size_t p = 0; p < points.size(); ++p) {
        const Point& pt = points[p];
        if (pt.x < 0.0 || pt.y < 0.0 || pt.x >= img_w || pt.y >= img_h)
            throw InputError("gt density: point (" + std::to_string(pt.x) + "," +
                             std::to_string(pt.y) + ") outside " + std::to_string((int)img_w) +
                             "x" + std::to_string((int)img_h) + " image");
        // kernel center in cell-index coordinates (cell i covers [i,i+1) cells
        // of the image grid, center offset 0.5)
        const double cy = pt.y / stride - 0.5;
        const double cx = pt.x / stride - 0.5;
        const int iy0 = static_cast<int>(std::lround(cy)) - r;
        const int ix0 = static_cast<int>(std::lround(cx)) - r;

        // normalize over the in-map part of the box so border points still
        // contribute exactly one count
        const int y_lo = std::max(iy0, 0), y_hi = std::min(iy0 + 2 * r, map_h - 1);
        const int x_lo = std::max(ix0, 0), x_hi = std::min(ix0 + 2 * r, map_w - 1);
        double mass = 0.0;
        for (int iy = y_lo; iy <= y_hi; ++iy)
            for (int ix = x_lo; ix <= x_hi; ++ix) {
                const double dy = iy - cy, dx = ix - cx;
                mass += std::exp(-(dy * dy + dx * dx) * inv2s2);
            }
        const double inv_mass = 1.0 / mass;
        for (int iy = y_lo; iy <= y_hi; ++iy) {
            double* row = map.data() + static_cast<std::size_t>(iy) * map_w;
            for (int ix = x_lo; ix <= x_hi; ++ix) {
                const double dy = iy - cy, dx = ix - cx;
                row[ix] += std::exp(-(dy * dy + dx * dx) * inv2s2) * inv_mass;
            }
        }
    }
    return map;
}

}  // namespace graphcount

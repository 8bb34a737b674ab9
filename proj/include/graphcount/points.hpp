#pragma once

// Point proposal heads over the fused feature map, anchor generation, decoding
// and exact one-to-one Hungarian matching against ground-truth points.

#include <vector>

#include "graphcount/density.hpp"
#include "graphcount/nn.hpp"

namespace graphcount {

struct PointHeadConfig {
    int points_per_side = 2;   // R: R*R proposals per stride-s cell
    double match_tau = 0.4;    // confidence weight in the matching cost (0.05 * stride)
    double threshold = 0.5;    // counting confidence cutoff, inclusive
};

// Proposal p = (i*W + j)*R*R + (u*R + v) sits at
//   x = j*s + (v+0.5)*s/R,  y = i*s + (u+0.5)*s/R.
std::vector<Point> generate_anchors(int map_h, int map_w, int stride, int points_per_side);

struct PointPredictions {
    Tensor offsets;              // [2*R*R, H, W] raw head output, scaled by s on decode
    Tensor conf;                 // [R*R, H, W] after sigmoid
    std::vector<Point> anchors;  // size M = R*R*H*W, proposal order
    int map_h = 0, map_w = 0;
    int stride = 0;
    int points_per_side = 0;

    int proposal_count() const { return static_cast<int>(anchors.size()); }
    Point decoded(int p) const;      // anchor + stride * raw offset
    double confidence(int p) const;
};

class PointHead {
  public:
    PointHead() = default;
    PointHead(int in_channels, int stride, const PointHeadConfig& cfg, Rng& rng);

    PointPredictions forward(Tape& tape, const Tensor& f_fused) const;

    void collect(std::vector<NamedTensor>& out) const;

  private:
    std::vector<Conv2d> reg_;  // 3 convs, last one zero-init to 2*R*R channels
    std::vector<Conv2d> cls_;  // 3 convs, last one zero-init to R*R channels
    int stride_ = 8;
    int r_ = 2;
};

struct Assignment {
    std::vector<int> gt_to_prop;     // xi: ground-truth index -> proposal index
    std::vector<char> prop_matched;  // size M
    double total_cost = 0.0;
};

// Exact minimum-cost assignment of all rows of cost (n x m, n <= m) to
// distinct columns; O(n^2 m) potentials + augmenting paths. Entries may be
// negative.
Assignment solve_assignment(const std::vector<double>& cost, int n, int m);

// cost(i, p) = |gt_i - decoded_p|_2 - tau * conf_p
Assignment hungarian_match(const PointPredictions& preds, const std::vector<Point>& gt,
                           double tau);

struct CountResult {
    int count = 0;
    std::vector<Point> kept;
    std::vector<double> kept_conf;
};

CountResult count_from_points(const PointPredictions& preds, double threshold);

}  // namespace graphcount

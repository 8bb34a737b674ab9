#pragma once

// Training objectives: pixel-mean density MSE, Hungarian-matched point loss
// (confidence + weighted localization), and their unweighted sum.

#include "graphcount/points.hpp"
#include "graphcount/tensor.hpp"

namespace graphcount {

struct LossConfig {
    double lambda1 = 2e-4;  // localization weight
    double lambda2 = 0.5;   // negative-proposal reweight
    double eps_log = 1e-12;
};

// mean over map cells of (m - m_gt)^2; m_gt is a constant
Tensor density_loss(Tape& tape, const Tensor& m, const Tensor& m_gt);

// L_cls + lambda1 * L_loc with the matching held fixed:
//   L_cls = -(1/M) [ sum_matched log c + lambda2 * sum_negative log(1-c) ]
//   L_loc = (1/N_gt) sum_matched |p - p_hat|^2
// cls_out/loc_out, when given, receive the component values.
Tensor point_loss(Tape& tape, const PointPredictions& preds, const std::vector<Point>& gt,
                  const Assignment& xi, const LossConfig& cfg, double* cls_out = nullptr,
                  double* loc_out = nullptr);

Tensor joint_loss(Tape& tape, const Tensor& l_point, const Tensor& l_density);

}  // namespace graphcount

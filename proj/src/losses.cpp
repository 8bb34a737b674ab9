#include "graphcount/losses.hpp"

#include <cmath>

namespace graphcount {

Tensor density_loss(Tape& tape, const Tensor& m, const Tensor& m_gt) {
    if (m.shape() != m_gt.shape())
        throw ShapeError("density loss: shape mismatch " + shape_str(m.shape()) + " vs " +
                         shape_str(m_gt.shape()));
    const std::size_t n = m.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = m.data()[i] - m_gt.data()[i];
        acc += d * d;
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(n));
    if (m.requires_grad()) {
        auto mi = m.impl();
        auto gi = m_gt.impl();
        auto oi = out.impl();
        tape.record(oi, [mi, gi, oi, n] {
            if (!oi->has_grad() || !mi->requires_grad) return;
            mi->ensure_grad();
            const double g = oi->grad[0] * 2.0 / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) mi->grad[i] += g * (mi->value[i] - gi->value[i]);
        });
    }
    return out;
}

Tensor point_loss(Tape& tape, const PointPredictions& preds, const std::vector<Point>& gt,
                  const Assignment& xi, const LossConfig& cfg, double* cls_out, double* loc_out) {
    const int m = preds.proposal_count();
    const int n_gt = static_cast<int>(gt.size());
    if (static_cast<int>(xi.prop_matched.size()) != m ||
        static_cast<int>(xi.gt_to_prop.size()) != n_gt)
        throw UsageError("point loss: assignment does not match predictions");

    // proposal -> matched ground-truth index, -1 for negatives
    std::vector<int> match_of(static_cast<std::size_t>(m), -1);
    for (int i = 0; i < n_gt; ++i) {
        const int p = xi.gt_to_prop[static_cast<std::size_t>(i)];
        if (p < 0 || p >= m || match_of[static_cast<std::size_t>(p)] != -1)
            throw UsageError("point loss: assignment is not a valid injection");
        match_of[static_cast<std::size_t>(p)] = i;
    }

    const double eps = cfg.eps_log;
    double l_cls = 0.0, l_loc = 0.0;
    for (int p = 0; p < m; ++p) {
        const double c = preds.confidence(p);
        const int i = match_of[static_cast<std::size_t>(p)];
        if (i >= 0) {
            l_cls -= std::log(std::max(c, eps));
            const Point d = preds.decoded(p);
            const double dx = gt[static_cast<std::size_t>(i)].x - d.x;
            const double dy = gt[static_cast<std::size_t>(i)].y - d.y;
            l_loc += dx * dx + dy * dy;
        } else {
            l_cls -= cfg.lambda2 * std::log(std::max(1.0 - c, eps));
        }
    }
    l_cls /= static_cast<double>(m);
    if (n_gt > 0) l_loc /= static_cast<double>(n_gt);
    if (cls_out) *cls_out = l_cls;
    if (loc_out) *loc_out = l_loc;
    Tensor out = Tensor::scalar(l_cls + cfg.lambda1 * l_loc);

    if (preds.conf.requires_grad() || preds.offsets.requires_grad()) {
        auto ci = preds.conf.impl();
        auto offi = preds.offsets.impl();
        auto oi = out.impl();
        const int map_h = preds.map_h, map_w = preds.map_w;
        const int r2 = preds.points_per_side * preds.points_per_side;
        const int stride = preds.stride;
        const double lambda1 = cfg.lambda1, lambda2 = cfg.lambda2;
        auto anchors = preds.anchors;
        auto gt_copy = gt;
        tape.record(oi, [=, match_of = std::move(match_of)] {
            if (!oi->has_grad()) return;
            const double g = oi->grad[0];
            const std::size_t plane = static_cast<std::size_t>(map_h) * map_w;
            const double inv_m = 1.0 / static_cast<double>(match_of.size());
            if (ci->requires_grad) ci->ensure_grad();
            if (offi->requires_grad) offi->ensure_grad();
            for (std::size_t p = 0; p < match_of.size(); ++p) {
                const std::size_t cell = p / static_cast<std::size_t>(r2);
                const std::size_t q = p % static_cast<std::size_t>(r2);
                const std::size_t at = q * plane + cell;  // conf index of proposal p
                const double c = ci->value[at];
                const int i = match_of[p];
                if (ci->requires_grad) {
                    if (i >= 0) {
                        if (c > eps) ci->grad[at] -= g * inv_m / c;
                    } else {
                        if (1.0 - c > eps) ci->grad[at] += g * inv_m * lambda2 / (1.0 - c);
                    }
                }
                if (i >= 0 && offi->requires_grad && n_gt > 0) {
                    const std::size_t x_at = 2 * q * plane + cell;
                    const std::size_t y_at = (2 * q + 1) * plane + cell;
                    const double px = anchors[p].x + offi->value[x_at] * stride;
                    const double py = anchors[p].y + offi->value[y_at] * stride;
                    const double coef = g * lambda1 * 2.0 / static_cast<double>(n_gt) * stride;
                    offi->grad[x_at] += coef * (px - gt_copy[static_cast<std::size_t>(i)].x);
                    offi->grad[y_at] += coef * (py - gt_copy[static_cast<std::size_t>(i)].y);
                }
            }
        });
    }
    return out;
}

Tensor joint_loss(Tape& tape, const Tensor& l_point, const Tensor& l_density) {
    return add(tape, l_point, l_density);
}

}  // namespace graphcount

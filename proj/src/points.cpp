#include "graphcount/points.hpp"

#include <cmath>
#include <limits>

namespace graphcount {

std::vector<Point> generate_anchors(int map_h, int map_w, int stride, int points_per_side) {
    if (points_per_side < 1) throw ConfigError("anchors: points_per_side must be >= 1");
    const int r = points_per_side;
    std::vector<Point> anchors;
    anchors.reserve(static_cast<std::size_t>(map_h) * map_w * r * r);
    const double cell = static_cast<double>(stride) / r;
    for (int i = 0; i < map_h; ++i)
        for (int j = 0; j < map_w; ++j)
            for (int u = 0; u < r; ++u)
                for (int v = 0; v < r; ++v)
                    anchors.push_back(Point{j * static_cast<double>(stride) + (v + 0.5) * cell,
                                            i * static_cast<double>(stride) + (u + 0.5) * cell});
    return anchors;
}

Point PointPredictions::decoded(int p) const {
    const int r2 = points_per_side * points_per_side;
    const int cell = p / r2, q = p % r2;
    const int i = cell / map_w, j = cell % map_w;
    const std::size_t plane = static_cast<std::size_t>(map_h) * map_w;
    const std::size_t at = static_cast<std::size_t>(i) * map_w + j;
    const double dx = offsets.data()[(2 * q) * plane + at] * stride;
    const double dy = offsets.data()[(2 * q + 1) * plane + at] * stride;
    return Point{anchors[static_cast<std::size_t>(p)].x + dx,
                 anchors[static_cast<std::size_t>(p)].y + dy};
}

double PointPredictions::confidence(int p) const {
    const int r2 = points_per_side * points_per_side;
    const int cell = p / r2, q = p % r2;
    const int i = cell / map_w, j = cell % map_w;
    const std::size_t plane = static_cast<std::size_t>(map_h) * map_w;
    return conf.data()[q * plane + static_cast<std::size_t>(i) * map_w + j];
}

PointHead::PointHead(int in_channels, int stride, const PointHeadConfig& cfg, Rng& rng)
    : stride_(stride), r_(cfg.points_per_side) {
    const int c = in_channels;
    reg_.push_back(Conv2d(c, c, 3, 1, 1, rng));
    reg_.push_back(Conv2d(c, c, 3, 1, 1, rng));
    reg_.push_back(Conv2d(c, 2 * r_ * r_, 3, 1, 1, rng));
    reg_.back().zero_init();
    cls_.push_back(Conv2d(c, c, 3, 1, 1, rng));
    cls_.push_back(Conv2d(c, c, 3, 1, 1, rng));
    cls_.push_back(Conv2d(c, r_ * r_, 3, 1, 1, rng));
    cls_.back().zero_init();
}

PointPredictions PointHead::forward(Tape& tape, const Tensor& f_fused) const {
    Tensor xr = relu(tape, reg_[0].forward(tape, f_fused));
    xr = relu(tape, reg_[1].forward(tape, xr));
    xr = reg_[2].forward(tape, xr);

    Tensor xc = relu(tape, cls_[0].forward(tape, f_fused));
    xc = relu(tape, cls_[1].forward(tape, xc));
    xc = sigmoid(tape, cls_[2].forward(tape, xc));

    PointPredictions out;
    out.offsets = xr;
    out.conf = xc;
    out.map_h = f_fused.dim(1);
    out.map_w = f_fused.dim(2);
    out.stride = stride_;
    out.points_per_side = r_;
    out.anchors = generate_anchors(out.map_h, out.map_w, stride_, r_);
    return out;
}

void PointHead::collect(std::vector<NamedTensor>& out) const {
    for (std::size_t l = 0; l < reg_.size(); ++l)
        reg_[l].collect("points.reg" + std::to_string(l), out);
    for (std::size_t l = 0; l < cls_.size(); ++l)
        cls_[l].collect("points.cls" + std::to_string(l), out);
}

Assignment solve_assignment(const std::vector<double>& cost, int n, int m) {
    if (n > m)
        throw InputError("assignment: " + std::to_string(n) + " rows exceed " + std::to_string(m) +
                         " columns");
    const double inf = std::numeric_limits<double>::infinity();
    // potentials over rows (u) and columns (v); p[j] = row matched to column j
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(m) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);
    auto a = [&](int i, int j) { return cost[static_cast<std::size_t>(i - 1) * m + (j - 1)]; };

    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            double delta = inf;
            int j1 = -1;
            for (int j = 1; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = a(i0, j) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }

    Assignment out;
    out.gt_to_prop.assign(static_cast<std::size_t>(n), -1);
    out.prop_matched.assign(static_cast<std::size_t>(m), 0);
    for (int j = 1; j <= m; ++j)
        if (p[static_cast<std::size_t>(j)] != 0) {
            out.gt_to_prop[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
            out.prop_matched[static_cast<std::size_t>(j - 1)] = 1;
        }
    for (int i = 0; i < n; ++i)
        out.total_cost += cost[static_cast<std::size_t>(i) * m + out.gt_to_prop[static_cast<std::size_t>(i)]];
    return out;
}

Assignment hungarian_match(const PointPredictions& preds, const std::vector<Point>& gt,
                           double tau) {
    const int n = static_cast<int>(gt.size());
    const int m = preds.proposal_count();
    if (n > m)
        throw InputError("matching: " + std::to_string(n) + " ground-truth points but only " +
                         std::to_string(m) + " proposals");
    if (n == 0) {
        Assignment out;
        out.prop_matched.assign(static_cast<std::size_t>(m), 0);
        return out;
    }
    std::vector<double> cost(static_cast<std::size_t>(n) * m);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < m; ++p) {
        const Point d = preds.decoded(p);
        const double conf_term = tau * preds.confidence(p);
        for (int i = 0; i < n; ++i) {
            const double dx = d.x - gt[static_cast<std::size_t>(i)].x;
            const double dy = d.y - gt[static_cast<std::size_t>(i)].y;
            cost[static_cast<std::size_t>(i) * m + p] = std::sqrt(dx * dx + dy * dy) - conf_term;
        }
    }
    return solve_assignment(cost, n, m);
}

CountResult count_from_points(const PointPredictions& preds, double threshold) {
    CountResult out;
    const int m = preds.proposal_count();
    for (int p = 0; p < m; ++p) {
        const double c = preds.confidence(p);
        if (c >= threshold) {
            ++out.count;
            out.kept.push_back(preds.decoded(p));
            out.kept_conf.push_back(c);
        }
    }
    return out;
}

}  // namespace graphcount

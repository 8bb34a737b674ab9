#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "graphcount/error.hpp"
#include "graphcount/gradcheck.hpp"
#include "graphcount/points.hpp"
#include "graphcount/rng.hpp"

using namespace graphcount;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// optimal injection cost by trying every assignment of rows to distinct columns
double brute_force_assignment(const std::vector<double>& cost, int n, int m) {
    std::vector<char> used(std::size_t(m), 0);
    double best = 1e300;
    const std::function<void(int, double)> place = [&](int row, double acc) {
        if (row == n) {
            best = std::min(best, acc);
            return;
        }
        for (int j = 0; j < m; ++j)
            if (!used[std::size_t(j)]) {
                used[std::size_t(j)] = 1;
                place(row + 1, acc + cost[row * m + j]);
                used[std::size_t(j)] = 0;
            }
    };
    place(0, 0.0);
    return best;
}

PointPredictions manual_preds(int map_h, int map_w, int r, int stride) {
    PointPredictions p;
    p.map_h = map_h;
    p.map_w = map_w;
    p.stride = stride;
    p.points_per_side = r;
    p.anchors = generate_anchors(map_h, map_w, stride, r);
    p.offsets = Tensor::zeros({2 * r * r, map_h, map_w});
    p.conf = Tensor::full({r * r, map_h, map_w}, 0.5);
    return p;
}

}  // namespace

TEST_CASE("anchors sit at cell and quarter centers") {
    const auto a1 = generate_anchors(2, 2, 8, 1);
    REQUIRE(a1.size() == 4);
    const double want1[4][2] = {{4, 4}, {12, 4}, {4, 12}, {12, 12}};
    for (int i = 0; i < 4; ++i) {
        CHECK(a1[i].x == want1[i][0]);
        CHECK(a1[i].y == want1[i][1]);
    }

    const auto a2 = generate_anchors(1, 1, 8, 2);
    REQUIRE(a2.size() == 4);
    const double want2[4][2] = {{2, 2}, {6, 2}, {2, 6}, {6, 6}};
    for (int i = 0; i < 4; ++i) {
        CHECK(a2[i].x == want2[i][0]);
        CHECK(a2[i].y == want2[i][1]);
    }

    CHECK(generate_anchors(8, 8, 8, 2).size() == 256);
}

TEST_CASE("fresh heads predict anchors at confidence one half") {
    Rng rng(1);
    PointHead head(16, 8, PointHeadConfig{}, rng);
    Tape tape;
    const Tensor f = Tensor::from({16, 2, 3}, random_values(16 * 6, rng));
    const PointPredictions preds = head.forward(tape, f);
    CHECK(preds.proposal_count() == 2 * 3 * 4);
    for (int p = 0; p < preds.proposal_count(); ++p) {
        CHECK(preds.confidence(p) == 0.5);
        CHECK(preds.decoded(p).x == preds.anchors[std::size_t(p)].x);
        CHECK(preds.decoded(p).y == preds.anchors[std::size_t(p)].y);
    }
}

TEST_CASE("head output count follows the R^2 H W contract") {
    Rng rng(2);
    PointHead head(64, 8, PointHeadConfig{}, rng);
    Tape tape;
    const Tensor f = Tensor::from({64, 8, 8}, random_values(64 * 64, rng));
    CHECK(head.forward(tape, f).proposal_count() == 256);
}

TEST_CASE("decode inverts the offset encoding exactly") {
    PointPredictions p = manual_preds(2, 2, 2, 8);
    Rng rng(3);
    const int plane = p.map_h * p.map_w;
    for (int idx = 0; idx < p.proposal_count(); ++idx) {
        const Point target{rng.uniform(0.0, 16.0), rng.uniform(0.0, 16.0)};
        const int cell = idx / 4, q = idx % 4;
        p.offsets.data()[(2 * q) * plane + cell] = (target.x - p.anchors[idx].x) / p.stride;
        p.offsets.data()[(2 * q + 1) * plane + cell] = (target.y - p.anchors[idx].y) / p.stride;
        const Point got = p.decoded(idx);
        CHECK(std::abs(got.x - target.x) < 1e-12);
        CHECK(std::abs(got.y - target.y) < 1e-12);
    }
}

TEST_CASE("both heads pass finite differences on 8x4x4 features") {
    Rng rng(4);
    PointHeadConfig cfg;
    PointHead head(8, 8, cfg, rng);
    std::vector<NamedTensor> params;
    head.collect(params);
    // randomize the zero-initialized final convs so gradients are generic
    for (auto& [name, t] : params)
        for (double& v : t.values()) v = rng.uniform(-0.3, 0.3);

    const Tensor f = Tensor::from({8, 4, 4}, random_values(8 * 16, rng));
    std::vector<Tensor> wrt = {f};
    for (auto& [name, t] : params) wrt.push_back(t);

    const std::vector<double> mo = random_values(8 * 16, rng);
    const std::vector<double> mc = random_values(4 * 16, rng);
    const auto fn = [&](Tape& tape) {
        const PointPredictions preds = head.forward(tape, f);
        const Tensor a = sum(tape, mul(tape, preds.offsets, Tensor::from({8, 4, 4}, mo)));
        const Tensor b = sum(tape, mul(tape, preds.conf, Tensor::from({4, 4, 4}, mc)));
        return add(tape, a, b);
    };
    CHECK(max_rel_err_fd(wrt, fn) < 1e-5);
}

TEST_CASE("assignment solves the 2x2 hand cases") {
    const Assignment a = solve_assignment({1, 2, 2, 1}, 2, 2);
    CHECK(a.gt_to_prop == std::vector<int>{0, 1});
    CHECK(a.total_cost == 2.0);

    const Assignment b = solve_assignment({4, 1, 2, 3}, 2, 2);
    CHECK(b.gt_to_prop == std::vector<int>{1, 0});
    CHECK(b.total_cost == 3.0);
}

TEST_CASE("assignment equals the exhaustive-injection optimum on 6x10 costs") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 6, m = 10;
        const std::vector<double> cost = random_values(std::size_t(n) * m, rng, -2.0, 2.0);
        const Assignment a = solve_assignment(cost, n, m);
        CHECK(std::abs(a.total_cost - brute_force_assignment(cost, n, m)) < 1e-9);

        // injective over ground truth, consistent matched marks
        std::vector<char> used(m, 0);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            const int j = a.gt_to_prop[std::size_t(i)];
            REQUIRE(j >= 0);
            REQUIRE(j < m);
            CHECK(!used[std::size_t(j)]);
            used[std::size_t(j)] = 1;
            CHECK(a.prop_matched[std::size_t(j)]);
            total += cost[i * m + j];
        }
        CHECK(std::abs(total - a.total_cost) < 1e-9);
    }
}

TEST_CASE("assignment is invariant to row-constant shifts") {
    Rng rng(6);
    const int n = 4, m = 7;
    const std::vector<double> cost = random_values(std::size_t(n) * m, rng);
    const Assignment base = solve_assignment(cost, n, m);
    std::vector<double> shifted = cost;
    for (int j = 0; j < m; ++j) shifted[2 * m + j] += 3.7;
    const Assignment moved = solve_assignment(shifted, n, m);
    CHECK(moved.gt_to_prop == base.gt_to_prop);
    CHECK(std::abs(moved.total_cost - (base.total_cost + 3.7)) < 1e-9);
}

TEST_CASE("assignment refuses more ground truth than proposals") {
    CHECK_THROWS_AS(solve_assignment(std::vector<double>(6, 1.0), 3, 2), InputError);
}

TEST_CASE("hungarian_match prefers close, confident proposals") {
    PointPredictions p = manual_preds(1, 2, 1, 8);  // anchors (4,4) and (12,4)
    const std::vector<Point> gt = {{11.0, 4.0}};
    const Assignment a = hungarian_match(p, gt, 0.4);
    REQUIRE(a.gt_to_prop.size() == 1);
    CHECK(a.gt_to_prop[0] == 1);
    CHECK(a.prop_matched == std::vector<char>{0, 1});

    // no ground truth: nothing matched
    const Assignment none = hungarian_match(p, {}, 0.4);
    CHECK(none.gt_to_prop.empty());
    CHECK(none.prop_matched == std::vector<char>{0, 0});
    CHECK(none.total_cost == 0.0);
}

TEST_CASE("counting threshold is inclusive") {
    PointPredictions p = manual_preds(1, 3, 1, 8);
    CHECK(count_from_points(p, 0.5).count == 3);  // all exactly 0.5

    std::fill(p.conf.values().begin(), p.conf.values().end(), 0.0);
    CHECK(count_from_points(p, 0.5).count == 0);

    p.conf.data()[0] = 0.9;
    p.conf.data()[1] = 0.4;
    p.conf.data()[2] = 0.6;
    const CountResult r = count_from_points(p, 0.5);
    CHECK(r.count == 2);
    REQUIRE(r.kept.size() == 2);
    CHECK(r.kept_conf == std::vector<double>{0.9, 0.6});
    CHECK(r.kept[0].x == p.anchors[0].x);
    CHECK(r.kept[1].x == p.anchors[2].x);
}

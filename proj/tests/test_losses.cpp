#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "graphcount/error.hpp"
#include "graphcount/gradcheck.hpp"
#include "graphcount/losses.hpp"
#include "graphcount/rng.hpp"

using namespace graphcount;

namespace {

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

Assignment assignment_of(const std::vector<int>& gt_to_prop, int m) {
    Assignment a;
    a.gt_to_prop = gt_to_prop;
    a.prop_matched.assign(std::size_t(m), 0);
    for (int p : gt_to_prop) a.prop_matched[std::size_t(p)] = 1;
    return a;
}

}  // namespace

TEST_CASE("density loss matches the per-pixel mean square") {
    Tape tape;
    const Tensor a = Tensor::from({1, 2, 2}, {0.3, -0.1, 0.7, 2.0});
    CHECK(density_loss(tape, a, a).item() == 0.0);

    const Tensor m = Tensor::from({2}, {1.0, 1.0});
    const Tensor g = Tensor::from({2}, {0.0, 0.0});
    CHECK(density_loss(tape, m, g).item() == 1.0);

    Rng rng(7);
    std::vector<double> mv(64), gv(64);
    for (auto& v : mv) v = rng.uniform(-2.0, 2.0);
    for (auto& v : gv) v = rng.uniform(-2.0, 2.0);
    double oracle = 0.0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const double d = mv[y * 8 + x] - gv[y * 8 + x];
            oracle += d * d;
        }
    oracle /= 64.0;
    const Tensor mm = Tensor::from({1, 8, 8}, mv);
    const Tensor gg = Tensor::from({1, 8, 8}, gv);
    CHECK(std::abs(density_loss(tape, mm, gg).item() - oracle) < 1e-12);

    CHECK_THROWS_AS(density_loss(tape, mm, g), ShapeError);
}

TEST_CASE("density loss gradient passes finite differences") {
    Rng rng(8);
    std::vector<double> gv(16);
    for (auto& v : gv) v = rng.uniform(0.0, 1.0);
    const Tensor gt = Tensor::from({1, 4, 4}, gv);
    Tensor m = Tensor::zeros({1, 4, 4});
    for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
    CHECK(max_rel_err_fd({m}, [&](Tape& tape) { return density_loss(tape, m, gt); }) < 1e-6);
}

TEST_CASE("point loss is zero on a perfect fit") {
    PointPredictions p = manual_preds(2, 2, 1, 8);
    p.conf.data()[0] = 1.0;
    p.conf.data()[3] = 1.0;
    p.conf.data()[1] = 0.0;
    p.conf.data()[2] = 0.0;
    const std::vector<Point> gt = {p.anchors[0], p.anchors[3]};
    const Assignment xi = assignment_of({0, 3}, 4);
    LossConfig cfg;
    Tape tape;
    CHECK(point_loss(tape, p, gt, xi, cfg).item() == 0.0);
}

TEST_CASE("single matched proposal at half confidence costs log two") {
    PointPredictions p = manual_preds(1, 1, 1, 8);
    const std::vector<Point> gt = {p.anchors[0]};
    const Assignment xi = assignment_of({0}, 1);
    LossConfig cfg;
    cfg.lambda1 = 123.0;  // localization is exactly zero, so lambda1 must not matter
    Tape tape;
    double cls = -1, loc = -1;
    const double got = point_loss(tape, p, gt, xi, cfg, &cls, &loc).item();
    CHECK(std::abs(got - 0.6931471805599453) < 1e-12);
    CHECK(cls == got);
    CHECK(loc == 0.0);
}

TEST_CASE("three proposals one ground truth match the hand-evaluated objective") {
    PointPredictions p = manual_preds(1, 3, 1, 8);  // anchors (4,4) (12,4) (20,4)
    p.conf.data()[0] = 0.7;
    p.conf.data()[1] = 0.2;
    p.conf.data()[2] = 0.6;
    // move proposal 0 to (5.2, 3.0); raw offsets are divided by the stride
    p.offsets.data()[0] = (5.2 - 4.0) / 8.0;
    p.offsets.data()[3] = (3.0 - 4.0) / 8.0;
    const std::vector<Point> gt = {{6.0, 4.5}};
    const Assignment xi = assignment_of({0}, 3);
    LossConfig cfg;

    const double l_cls =
        -(std::log(0.7) + 0.5 * (std::log(1.0 - 0.2) + std::log(1.0 - 0.6))) / 3.0;
    const double l_loc = (6.0 - 5.2) * (6.0 - 5.2) + (4.5 - 3.0) * (4.5 - 3.0);
    Tape tape;
    double cls = 0, loc = 0;
    const double got = point_loss(tape, p, gt, xi, cfg, &cls, &loc).item();
    CHECK(std::abs(got - (l_cls + cfg.lambda1 * l_loc)) < 1e-10);
    CHECK(std::abs(cls - l_cls) < 1e-12);
    CHECK(std::abs(loc - l_loc) < 1e-12);
}

TEST_CASE("empty ground truth treats every proposal as negative") {
    PointPredictions p = manual_preds(2, 2, 1, 8);
    p.conf.data()[0] = 0.1;
    p.conf.data()[1] = 0.25;
    p.conf.data()[2] = 0.5;
    p.conf.data()[3] = 0.9;
    Assignment xi;
    xi.prop_matched.assign(4, 0);
    LossConfig cfg;
    Tape tape;
    double cls = 0, loc = -1;
    const double got = point_loss(tape, p, {}, xi, cfg, &cls, &loc).item();
    double oracle = 0.0;
    for (const double c : {0.1, 0.25, 0.5, 0.9}) oracle -= 0.5 * std::log(1.0 - c);
    oracle /= 4.0;
    CHECK(std::abs(got - oracle) < 1e-12);
    CHECK(loc == 0.0);
    CHECK(cls == got);
}

TEST_CASE("scaling localization errors by alpha scales the component by alpha squared") {
    LossConfig cfg;
    const std::vector<Point> gt = {{4.0, 4.0}, {12.0, 4.0}};
    const Assignment xi = assignment_of({0, 1}, 2);
    const auto loc_for = [&](double err) {
        PointPredictions p = manual_preds(1, 2, 1, 8);
        p.offsets.data()[0] = err / 8.0;  // shift both proposals right of their gt
        p.offsets.data()[1] = err / 8.0;
        Tape tape;
        double loc = 0;
        point_loss(tape, p, gt, xi, cfg, nullptr, &loc);
        return loc;
    };
    const double base = loc_for(0.6);
    CHECK(std::abs(loc_for(1.8) - 9.0 * base) < 1e-10);
}

TEST_CASE("point loss gradients pass finite differences with the matching frozen") {
    Rng rng(9);
    PointPredictions p = manual_preds(2, 2, 2, 8);  // 16 proposals
    for (double& v : p.conf.values()) v = rng.uniform(0.15, 0.85);
    for (double& v : p.offsets.values()) v = rng.uniform(-0.5, 0.5);
    const std::vector<Point> gt = {{5.0, 7.0}, {13.5, 2.0}, {9.0, 12.0}};
    const Assignment xi = hungarian_match(p, gt, 0.4);
    LossConfig cfg;
    cfg.lambda1 = 0.05;  // large enough that localization errors register at fd scale
    const double err = max_rel_err_fd({p.conf, p.offsets}, [&](Tape& tape) {
        return point_loss(tape, p, gt, xi, cfg);
    });
    CHECK(err < 1e-5);
}

TEST_CASE("point loss rejects assignments that do not fit the predictions") {
    PointPredictions p = manual_preds(1, 2, 1, 8);
    LossConfig cfg;
    Tape tape;
    Assignment wrong_size;
    wrong_size.prop_matched.assign(5, 0);
    CHECK_THROWS_AS(point_loss(tape, p, {}, wrong_size, cfg), UsageError);

    Assignment duplicate = assignment_of({0}, 2);
    duplicate.gt_to_prop = {0, 0};
    CHECK_THROWS_AS(point_loss(tape, p, {{1, 1}, {2, 2}}, duplicate, cfg), UsageError);
}

TEST_CASE("joint loss is the plain sum with unit gradients") {
    Tape tape;
    CHECK(joint_loss(tape, Tensor::scalar(0.0), Tensor::scalar(0.0)).item() == 0.0);
    CHECK(joint_loss(tape, Tensor::scalar(2.5), Tensor::scalar(1.5)).item() == 4.0);

    Tensor a = Tensor::scalar(2.5, true);
    Tensor b = Tensor::scalar(1.5, true);
    Tensor j = joint_loss(tape, a, b);
    tape.backward(j);
    CHECK(a.grad() == std::vector<double>{1.0});
    CHECK(b.grad() == std::vector<double>{1.0});
}

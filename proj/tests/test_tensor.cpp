#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "graphcount/error.hpp"
#include "graphcount/gradcheck.hpp"
#include "graphcount/nn.hpp"
#include "graphcount/rng.hpp"
#include "graphcount/tensor.hpp"

using namespace graphcount;

namespace {

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// plain triple loop, independent of the library kernels
std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b,
                                  int m, int k, int n) {
    std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int t = 0; t < k; ++t) c[i * n + j] += a[i * k + t] * b[t * n + j];
    return c;
}

// direct six-loop cross-correlation with explicit zero padding
std::vector<double> conv_oracle(const std::vector<double>& x, const std::vector<double>& w,
                                const std::vector<double>& bias, int cin, int h, int wd, int cout,
                                int kk, int stride, int pad, int oh, int ow) {
    std::vector<double> y(static_cast<std::size_t>(cout) * oh * ow, 0.0);
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bias.empty() ? 0.0 : bias[co];
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < kk; ++ky)
                        for (int kx = 0; kx < kk; ++kx) {
                            const int iy = oy * stride + ky - pad;
                            const int ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                            acc += x[(ci * h + iy) * wd + ix] *
                                   w[((co * cin + ci) * kk + ky) * kk + kx];
                        }
                y[(co * oh + oy) * ow + ox] = acc;
            }
    return y;
}

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
    Tape tape;
    const Tensor i2 = Tensor::from({2, 2}, {1, 0, 0, 1});
    const Tensor a = Tensor::from({2, 2}, {2, 3, 4, 5});
    const Tensor c = matmul(tape, i2, a);
    CHECK(c.values() == std::vector<double>{2, 3, 4, 5});

    const Tensor r = Tensor::from({1, 2}, {1, 2});
    const Tensor col = Tensor::from({2, 1}, {3, 4});
    CHECK(matmul(tape, r, col).item() == 11.0);
}

TEST_CASE("matmul matches the triple-loop oracle") {
    Rng rng(42);
    const int m = 5, k = 4, n = 3;
    const std::vector<double> av = random_values(m * k, rng);
    const std::vector<double> bv = random_values(k * n, rng);
    Tape tape;
    const Tensor c = matmul(tape, Tensor::from({m, k}, av), Tensor::from({k, n}, bv));
    const std::vector<double> want = matmul_oracle(av, bv, m, k, n);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(close(c.values()[i], want[i], 1e-12));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape tape;
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({4, 2});
    try {
        matmul(tape, a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,2]") != std::string::npos);
    }
}

TEST_CASE("matmul backward accumulates dA = dC B^T and dB = A^T dC") {
    Tape tape;
    const Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    const Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12}, true);
    const Tensor w = Tensor::from({2, 2}, {1, 2, 3, 4});
    const Tensor loss = sum(tape, mul(tape, matmul(tape, a, b), w));
    tape.backward(loss);
    const std::vector<double> want_da = {23, 29, 35, 53, 67, 81};
    const std::vector<double> want_db = {13, 18, 17, 24, 21, 30};
    for (int i = 0; i < 6; ++i) {
        CHECK(close(a.grad()[i], want_da[i], 1e-12));
        CHECK(close(b.grad()[i], want_db[i], 1e-12));
    }
}

TEST_CASE("conv2d all-ones 3x3 sums to 9") {
    Tape tape;
    const Tensor x = Tensor::full({1, 3, 3}, 1.0);
    const Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
    const Tensor y = conv2d(tape, x, w, Tensor{}, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1});
    CHECK(y.item() == 9.0);
}

TEST_CASE("conv2d impulse response") {
    Tape tape;
    Tensor x = Tensor::zeros({1, 3, 3});
    x.data()[4] = 1.0;  // center impulse

    // symmetric kernel: cross-correlation and true convolution agree, the
    // output is a centered copy of the kernel
    const Tensor ws = Tensor::from({1, 1, 3, 3}, {1, 2, 1, 2, 5, 2, 1, 2, 1});
    const Tensor ys = conv2d(tape, x, ws, Tensor{}, 1, 1);
    CHECK(ys.values() == ws.values());

    // asymmetric kernel pins the no-flip convention: cross-correlation maps
    // an impulse to the 180-degree reflected kernel
    const Tensor wa = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor ya = conv2d(tape, x, wa, Tensor{}, 1, 1);
    for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 3; ++ox)
            CHECK(ya.values()[oy * 3 + ox] == wa.values()[(2 - oy) * 3 + (2 - ox)]);
}

TEST_CASE("conv2d matches the six-loop oracle") {
    Rng rng(7);
    struct Case {
        int h, w, stride, pad;
    };
    for (const Case tc : {Case{8, 8, 1, 1}, Case{8, 8, 1, 0}, Case{9, 9, 2, 0}}) {
        const int cin = 2, cout = 4, kk = 3;
        const std::vector<double> xv = random_values(std::size_t(cin) * tc.h * tc.w, rng);
        const std::vector<double> wv = random_values(std::size_t(cout) * cin * kk * kk, rng);
        const std::vector<double> bv = random_values(cout, rng);
        Tape tape;
        const Tensor y = conv2d(tape, Tensor::from({cin, tc.h, tc.w}, xv),
                                Tensor::from({cout, cin, kk, kk}, wv), Tensor::from({cout}, bv),
                                tc.stride, tc.pad);
        const int oh = (tc.h + 2 * tc.pad - kk) / tc.stride + 1;
        const int ow = (tc.w + 2 * tc.pad - kk) / tc.stride + 1;
        REQUIRE(y.shape() == Shape{cout, oh, ow});
        const std::vector<double> want =
            conv_oracle(xv, wv, bv, cin, tc.h, tc.w, cout, kk, tc.stride, tc.pad, oh, ow);
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(close(y.values()[i], want[i], 1e-12));
    }
}

TEST_CASE("conv2d rejects non-integral output sizes") {
    Tape tape;
    const Tensor x = Tensor::zeros({1, 8, 8});
    const Tensor w = Tensor::zeros({1, 1, 3, 3});
    CHECK_THROWS_AS(conv2d(tape, x, w, Tensor{}, 2, 0), ConfigError);
    CHECK_THROWS_AS(conv2d(tape, x, w, Tensor{}, 0, 0), ConfigError);
    CHECK_THROWS_AS(conv2d(tape, x, w, Tensor{}, 1, -1), ConfigError);
}

TEST_CASE("conv2d gradients pass finite differences") {
    Rng rng(3);
    const std::vector<double> xv = random_values(2 * 5 * 5, rng);
    const std::vector<double> wv = random_values(3 * 2 * 3 * 3, rng);
    const std::vector<double> bv = random_values(3, rng);
    const std::vector<double> sv = random_values(3 * 5 * 5, rng);
    const Tensor x = Tensor::from({2, 5, 5}, xv);
    const Tensor w = Tensor::from({3, 2, 3, 3}, wv);
    const Tensor b = Tensor::from({3}, bv);
    const auto f = [&](Tape& tape) {
        const Tensor y = conv2d(tape, x, w, b, 1, 1);
        return sum(tape, mul(tape, y, Tensor::from({3, 5, 5}, sv)));
    };
    CHECK(max_rel_err_fd({x, w, b}, f) < 1e-5);
}

TEST_CASE("batchnorm constant channels normalize to beta") {
    BatchNorm2d bn(2);
    Tape tape;
    Tensor x = Tensor::zeros({2, 3, 3});
    for (int i = 0; i < 9; ++i) x.data()[i] = 4.0;
    for (int i = 9; i < 18; ++i) x.data()[i] = -2.5;
    const Tensor y = bn.forward(tape, x, true);
    for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("batchnorm eval with identity stats shifts by beta") {
    BatchNorm2d bn(1);
    bn.beta.data()[0] = 5.0;
    Rng rng(11);
    Tape tape;

    // small inputs keep the eps skew below the stated 1e-9
    Tensor xs = Tensor::from({1, 2, 2}, random_values(4, rng, -1e-4, 1e-4));
    const Tensor ys = bn.forward(tape, xs, false);
    for (int i = 0; i < 4; ++i) CHECK(close(ys.values()[i], xs.values()[i] + 5.0, 1e-9));

    // for general magnitudes the exact transform is x / sqrt(1 + eps) + 5
    Tensor xg = Tensor::from({1, 2, 2}, random_values(4, rng));
    const Tensor yg = bn.forward(tape, xg, false);
    for (int i = 0; i < 4; ++i)
        CHECK(close(yg.values()[i], xg.values()[i] / std::sqrt(1.0 + 1e-5) + 5.0, 1e-12));
}

TEST_CASE("batchnorm train normalizes {1,3} with gamma 2 to about {-2,+2}") {
    BatchNorm2d bn(1);
    bn.gamma.data()[0] = 2.0;
    Tape tape;
    const Tensor y = bn.forward(tape, Tensor::from({1, 1, 2}, {1, 3}), true);
    CHECK(close(y.values()[0], -2.0, 1e-4));
    CHECK(close(y.values()[1], 2.0, 1e-4));
}

TEST_CASE("batchnorm running stats blend with momentum 0.1") {
    BatchNorm2d bn(1);
    Tape tape;
    bn.forward(tape, Tensor::from({1, 1, 2}, {1, 5}), true);  // mean 3, biased var 4
    CHECK(close(bn.running_mean.values()[0], 0.3, 1e-12));
    CHECK(close(bn.running_var.values()[0], 0.9 + 0.4, 1e-12));
}

TEST_CASE("zero-extent tensors are rejected at construction") {
    // a zero spatial extent can never reach batchnorm: the tensor itself
    // refuses the shape
    CHECK_THROWS_AS(Tensor::zeros({1, 0, 4}), ShapeError);
}

TEST_CASE("relu values and subgradient at zero") {
    Tape tape;
    const Tensor x = Tensor::from({3}, {-1, 0, 2}, true);
    const Tensor y = relu(tape, x);
    CHECK(y.values() == std::vector<double>{0, 0, 2});
    tape.backward(sum(tape, y));
    CHECK(x.grad() == std::vector<double>{0, 0, 1});

    Tape tape2;
    const Tensor neg = Tensor::from({4}, {-3, -1, -0.5, -2});
    const Tensor clipped = relu(tape2, neg);
    for (double v : clipped.values()) CHECK(v == 0.0);
}

TEST_CASE("upsample_nearest replicates blocks and sums gradients") {
    Tape tape;
    const Tensor x = Tensor::from({1, 2, 2}, {1, 2, 3, 4}, true);
    const Tensor y = upsample_nearest(tape, x, 2);
    REQUIRE(y.shape() == Shape{1, 4, 4});
    const std::vector<double> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    CHECK(y.values() == want);

    const Tensor same = upsample_nearest(tape, x, 1);
    CHECK(same.values() == x.values());

    tape.backward(sum(tape, y));
    for (double g : x.grad()) CHECK(g == 4.0);

    CHECK_THROWS_AS(upsample_nearest(tape, x, 0), ConfigError);
}

TEST_CASE("avgpool2x2 averages blocks and rejects odd extents") {
    Tape tape;
    const Tensor x = Tensor::from({1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8}, true);
    const Tensor y = avgpool2x2(tape, x);
    REQUIRE(y.shape() == Shape{1, 1, 2});
    CHECK(y.values() == std::vector<double>{3.5, 5.5});
    tape.backward(sum(tape, y));
    for (double g : x.grad()) CHECK(g == 0.25);

    CHECK_THROWS_AS(avgpool2x2(tape, Tensor::zeros({1, 3, 4})), ConfigError);
}

TEST_CASE("pad_reflect_br reflects interior rows and columns") {
    Tape tape;
    const Tensor x = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
    const Tensor y = pad_reflect_br(tape, x, 3, 3);
    // reflected row/col mirror the second-to-last entries, edge not repeated
    const std::vector<double> want = {1, 2, 1, 3, 4, 3, 1, 2, 1};
    CHECK(y.values() == want);

    CHECK_THROWS_AS(pad_reflect_br(tape, x, 4, 2), InputError);  // pad 2 >= extent 2
    CHECK_THROWS_AS(pad_reflect_br(tape, x, 1, 2), InputError);  // shrink
}

TEST_CASE("chw_to_nc and nc_to_chw round-trip with the documented layout") {
    Tape tape;
    Rng rng(5);
    const Tensor x = Tensor::from({3, 2, 4}, random_values(24, rng));
    const Tensor nodes = chw_to_nc(tape, x);
    REQUIRE(nodes.shape() == Shape{8, 3});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 2; ++y)
            for (int xx = 0; xx < 4; ++xx)
                CHECK(nodes.values()[(y * 4 + xx) * 3 + c] == x.values()[(c * 2 + y) * 4 + xx]);
    const Tensor back = nc_to_chw(tape, nodes, 2, 4);
    CHECK(back.values() == x.values());
    CHECK_THROWS_AS(nc_to_chw(tape, nodes, 3, 4), ShapeError);
}

TEST_CASE("backward of sum gives ones; of sum of squares gives 2x") {
    Tape tape;
    const Tensor x = Tensor::from({2, 3}, {1, -2, 0.5, 3, -1, 2}, true);
    tape.backward(sum(tape, x));
    for (double g : x.grad()) CHECK(g == 1.0);

    Tape tape2;
    const Tensor x2 = Tensor::from({2}, {1, 2}, true);
    tape2.backward(sum(tape2, mul(tape2, x2, x2)));
    CHECK(x2.grad() == std::vector<double>{2, 4});
}

TEST_CASE("backward rejects non-scalar losses") {
    Tape tape;
    const Tensor x = Tensor::from({2}, {1, 2}, true);
    const Tensor y = relu(tape, x);
    CHECK_THROWS_AS(tape.backward(y), UsageError);
}

TEST_CASE("gradients accumulate across backward calls and are additive in the loss") {
    const Tensor x = Tensor::from({2}, {1.5, -0.5}, true);
    Tape tape;
    const Tensor loss = sum(tape, mul(tape, x, x));
    tape.backward(loss);
    const std::vector<double> once = x.grad();
    tape.backward(loss);
    for (int i = 0; i < 2; ++i) CHECK(close(x.grad()[i], 2.0 * once[i], 1e-12));

    // backward(loss1 + loss2) equals the sum of the separate backwards
    const Tensor a = Tensor::from({2}, {0.7, -1.2}, true);
    Tape t1;
    const Tensor l1 = sum(t1, mul(t1, a, a));
    const Tensor l2 = sum(t1, relu(t1, a));
    t1.backward(add(t1, l1, l2));
    const std::vector<double> joint = a.grad();

    const Tensor b = Tensor::from({2}, {0.7, -1.2}, true);
    Tape t2;
    t2.backward(sum(t2, mul(t2, b, b)));
    Tape t3;
    t3.backward(sum(t3, relu(t3, b)));
    for (int i = 0; i < 2; ++i) CHECK(close(joint[i], b.grad()[i], 1e-12));
}

TEST_CASE("adam first step moves by about -lr and zero grads are a fixed point") {
    Tensor w = Tensor::from({1}, {0.5}, true);
    Adam opt;
    opt.add_group({w}, 0.1);
    Tape tape;
    tape.backward(sum(tape, w));  // grad 1
    opt.step();
    CHECK(close(w.values()[0], 0.4, 1e-8));

    // an exactly-zero gradient is a fixed point from fresh moment state; after
    // a real step the momentum keeps the parameter moving
    Tensor w2 = Tensor::from({1}, {0.7}, true);
    Adam opt2;
    opt2.add_group({w2}, 0.1);
    Tape tape2;
    tape2.backward(sum(tape2, mul(tape2, w2, Tensor::zeros({1}))));
    CHECK(w2.grad() == std::vector<double>{0.0});
    opt2.step();
    CHECK(w2.values()[0] == 0.7);
}

TEST_CASE("adam matches a hand-iterated recurrence on f(w) = w^2") {
    Tensor w = Tensor::from({1}, {1.0}, true);
    Adam opt;
    opt.add_group({w}, 0.1);
    for (int step = 0; step < 3; ++step) {
        opt.zero_grad();
        Tape tape;
        tape.backward(sum(tape, mul(tape, w, w)));
        opt.step();
    }

    double ref = 1.0, m = 0.0, v = 0.0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.1;
    for (int t = 1; t <= 3; ++t) {
        const double g = 2.0 * ref;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        ref -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    CHECK(close(w.values()[0], ref, 1e-10));
}

TEST_CASE("adam requires populated gradients") {
    Tensor w = Tensor::from({2}, {1, 2}, true);
    Adam opt;
    opt.add_group({w}, 0.01);
    CHECK_THROWS_AS(opt.step(), UsageError);
}

TEST_CASE("forward chains are deterministic") {
    const auto run = [] {
        Rng rng(99);
        Tape tape;
        const Tensor x = Tensor::from({2, 6, 6}, random_values(72, rng));
        const Tensor w = Tensor::from({3, 2, 3, 3}, random_values(54, rng));
        const Tensor y = relu(tape, conv2d(tape, x, w, Tensor{}, 1, 1));
        return sum(tape, sigmoid(tape, avgpool2x2(tape, y))).item();
    };
    CHECK(run() == run());
}

TEST_CASE("sigmoid values stay finite and match the closed form") {
    Tape tape;
    const Tensor x = Tensor::from({4}, {-40, -1, 0, 40});
    const Tensor y = sigmoid(tape, x);
    CHECK(close(y.values()[0], 0.0, 1e-15));
    CHECK(close(y.values()[1], 1.0 / (1.0 + std::exp(1.0)), 1e-15));
    CHECK(y.values()[2] == 0.5);
    CHECK(close(y.values()[3], 1.0, 1e-15));
    for (double v : y.values()) CHECK(std::isfinite(v));
}

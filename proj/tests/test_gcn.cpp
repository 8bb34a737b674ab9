#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "graphcount/error.hpp"
#include "graphcount/gcn.hpp"
#include "graphcount/gradcheck.hpp"
#include "graphcount/rng.hpp"

using namespace graphcount;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

std::vector<std::vector<int>> random_knn_adjacency(int n, int k, Rng& rng) {
    const std::vector<double> score = random_values(std::size_t(n) * n, rng);
    return topk_adjacency(score, n, k, false);
}

// dense reference: A from rows, D from row sums, A_hat = D^-1/2 A D^-1/2
std::vector<double> dense_a_hat(const std::vector<std::vector<int>>& adj) {
    const int n = static_cast<int>(adj.size());
    std::vector<double> a(std::size_t(n) * n, 0.0);
    std::vector<double> deg(n, 0.0);
    for (int i = 0; i < n; ++i) {
        deg[i] = static_cast<double>(adj[i].size());
        for (int j : adj[i]) a[i * n + j] = 1.0;
    }
    std::vector<double> out(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out[i * n + j] = a[i * n + j] / std::sqrt(deg[i] * deg[j]);
    return out;
}

std::vector<double> dense_mat_mul(const std::vector<double>& a, const std::vector<double>& b,
                                  int m, int k, int n) {
    std::vector<double> c(std::size_t(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int t = 0; t < k; ++t) c[i * n + j] += a[i * k + t] * b[t * n + j];
    return c;
}

}  // namespace

TEST_CASE("identity adjacency normalizes to identity") {
    const NormalizedAdjacency a = normalize_adjacency({{0}, {1}});
    CHECK(a.n == 2);
    CHECK(a.vals == std::vector<double>{1.0, 1.0});
    CHECK(a.cols == std::vector<int>{0, 1});
}

TEST_CASE("all-ones 2x2 adjacency normalizes to all 0.5") {
    // 1/sqrt(2) squared lands one ulp off 0.5, so compare with a tolerance
    const NormalizedAdjacency a = normalize_adjacency({{0, 1}, {0, 1}});
    REQUIRE(a.vals.size() == 4);
    for (double v : a.vals) CHECK(std::abs(v - 0.5) < 1e-15);
}

TEST_CASE("normalized adjacency matches the dense oracle and 1/d on the diagonal") {
    Rng rng(1);
    const int n = 16;
    const auto adj = random_knn_adjacency(n, 3, rng);
    const NormalizedAdjacency a = normalize_adjacency(adj);
    const std::vector<double> want = dense_a_hat(adj);

    for (int i = 0; i < n; ++i) {
        for (int e = a.row_ptr[i]; e < a.row_ptr[i + 1]; ++e) {
            CHECK(std::abs(a.vals[e] - want[i * n + a.cols[e]]) < 1e-12);
            if (a.cols[e] == i)
                CHECK(std::abs(a.vals[e] - 1.0 / double(adj[i].size())) < 1e-12);
        }
        CHECK(a.row_ptr[i + 1] - a.row_ptr[i] == static_cast<int>(adj[i].size()));
    }
}

TEST_CASE("normalize_adjacency rejects empty rows") {
    CHECK_THROWS_AS(normalize_adjacency({{0}, {}}), InternalError);
}

TEST_CASE("gcn_layer clips with ReLU and zeroes with zero weights") {
    Tape tape;
    const NormalizedAdjacency eye = normalize_adjacency({{0}, {1}});
    const Tensor h = Tensor::from({2, 2}, {1, 0, 0, 1});
    const Tensor w = Tensor::from({2, 2}, {2, 0, 0, -3});
    const Tensor y = gcn_layer(tape, eye, h, w);
    CHECK(y.values() == std::vector<double>{2, 0, 0, 0});

    const Tensor wz = Tensor::zeros({2, 2});
    const Tensor yz = gcn_layer(tape, eye, h, wz);
    for (double v : yz.values()) CHECK(v == 0.0);
}

TEST_CASE("gcn_layer matches the dense oracle and finite differences at N=9") {
    Rng rng(2);
    const int n = 9, cin = 4, cout = 3;
    const auto adj = random_knn_adjacency(n, 3, rng);
    const NormalizedAdjacency a = normalize_adjacency(adj);
    const std::vector<double> hv = random_values(std::size_t(n) * cin, rng);
    const std::vector<double> wv = random_values(std::size_t(cin) * cout, rng);
    const Tensor h = Tensor::from({n, cin}, hv);
    const Tensor w = Tensor::from({cin, cout}, wv);

    Tape tape;
    const Tensor y = gcn_layer(tape, a, h, w);
    std::vector<double> want =
        dense_mat_mul(dense_mat_mul(dense_a_hat(adj), hv, n, n, cin), wv, n, cin, cout);
    for (double& v : want) v = std::max(v, 0.0);
    for (int i = 0; i < n * cout; ++i) CHECK(std::abs(y.values()[i] - want[i]) < 1e-12);

    const std::vector<double> mix = random_values(std::size_t(n) * cout, rng);
    const auto f = [&](Tape& t) {
        return sum(t, mul(t, gcn_layer(t, a, h, w), Tensor::from({n, cout}, mix)));
    };
    CHECK(max_rel_err_fd({h, w}, f) < 1e-5);
}

TEST_CASE("branch over an identity adjacency is a per-node MLP") {
    Rng rng(3);
    const int n = 5, c = 4;
    GcnBranch branch("da", c, GcnBranchConfig{2}, rng);
    std::vector<NamedTensor> params;
    branch.collect(params);
    REQUIRE(params.size() == 2);
    // randomize the zero-initialized last layer so the MLP is generic
    for (auto& [name, t] : params)
        for (double& v : t.values()) v = rng.uniform(-0.5, 0.5);

    SemanticGraph g;
    g.kind = GraphKind::density;
    g.n = n;
    g.k = 0;
    g.node_features = Tensor::from({n, c}, random_values(std::size_t(n) * c, rng));
    for (int i = 0; i < n; ++i) g.adj.push_back({i});

    Tape tape;
    const Tensor out = branch.forward(tape, g, 1, n);
    REQUIRE(out.shape() == Shape{c, 1, n});

    // oracle: per node, relu(h W0) W1
    const std::vector<double>& w0 = params[0].second.values();
    const std::vector<double>& w1 = params[1].second.values();
    std::vector<double> h1 = dense_mat_mul(g.node_features.values(), w0, n, c, c);
    for (double& v : h1) v = std::max(v, 0.0);
    const std::vector<double> h2 = dense_mat_mul(h1, w1, n, c, c);
    // out is [C, 1, n]; node j feature f lives at out[f][0][j]
    for (int j = 0; j < n; ++j)
        for (int f = 0; f < c; ++f)
            CHECK(std::abs(out.values()[f * n + j] - h2[j * c + f]) < 1e-12);
}

TEST_CASE("two-layer branch matches the dense oracle on a 4x4 map") {
    Rng rng(4);
    const int h = 4, w = 4, n = h * w, c = 6;
    GcnBranch branch("ra", c, GcnBranchConfig{2}, rng);
    std::vector<NamedTensor> params;
    branch.collect(params);
    for (auto& [name, t] : params)
        for (double& v : t.values()) v = rng.uniform(-0.5, 0.5);

    const std::vector<double> fv = random_values(std::size_t(n) * c, rng);
    SemanticGraph g = build_rsg(Tensor::from({n, c}, fv), 4);

    Tape tape;
    const Tensor out = branch.forward(tape, g, h, w);
    REQUIRE(out.shape() == Shape{c, h, w});

    const std::vector<double> ahat = dense_a_hat(g.adj);
    std::vector<double> x = fv;
    // hidden layer: relu(A H W0)
    x = dense_mat_mul(dense_mat_mul(ahat, x, n, n, c), params[0].second.values(), n, c, c);
    for (double& v : x) v = std::max(v, 0.0);
    // final layer: linear
    x = dense_mat_mul(dense_mat_mul(ahat, x, n, n, c), params[1].second.values(), n, c, c);

    for (int node = 0; node < n; ++node)
        for (int f = 0; f < c; ++f)
            CHECK(std::abs(out.values()[f * n + node] - x[node * c + f]) < 1e-10);
}

TEST_CASE("fresh branches contribute nothing and branch names keep weights apart") {
    Rng rng(5);
    const int c = 3, n = 4;
    GcnBranch da("da", c, GcnBranchConfig{2}, rng);
    GcnBranch ra("ra", c, GcnBranchConfig{2}, rng);

    std::vector<NamedTensor> params;
    da.collect(params);
    ra.collect(params);
    std::set<std::string> names;
    for (const auto& [name, t] : params) CHECK(names.insert(name).second);

    SemanticGraph g = build_rsg(Tensor::from({n, c}, random_values(std::size_t(n) * c, rng)), 2);
    Tape tape;
    // zero-initialized final layer: untrained output is exactly zero
    const Tensor untrained = da.forward(tape, g, 2, 2);
    for (double v : untrained.values()) CHECK(v == 0.0);
}

TEST_CASE("fuse_features adds elementwise and distributes gradient") {
    Tape tape;
    Rng rng(6);
    const Tensor f = Tensor::from({2, 2, 2}, random_values(8, rng), true);
    const Tensor zero = Tensor::zeros({2, 2, 2});
    CHECK(fuse_features(tape, f, zero, zero).values() == f.values());

    const Tensor x = Tensor::from({2, 2, 2}, random_values(8, rng), true);
    const Tensor fused = fuse_features(tape, Tensor::zeros({2, 2, 2}), x, x);
    for (int i = 0; i < 8; ++i) CHECK(fused.values()[i] == 2.0 * x.values()[i]);

    Tape t2;
    const Tensor a = Tensor::from({1, 1, 2}, {1, 2}, true);
    const Tensor b = Tensor::from({1, 1, 2}, {3, 4}, true);
    const Tensor c = Tensor::from({1, 1, 2}, {5, 6}, true);
    t2.backward(sum(t2, fuse_features(t2, a, b, c)));
    for (const Tensor& t : {a, b, c})
        for (double gradv : t.grad()) CHECK(gradv == 1.0);

    CHECK_THROWS_AS(fuse_features(t2, a, b, Tensor::zeros({1, 1, 3})), ShapeError);
}

#include "graphcount/gcn.hpp"

#include <cmath>

#include "graphcount/kernels.hpp"

namespace graphcount {

NormalizedAdjacency normalize_adjacency(const std::vector<std::vector<int>>& adj) {
    const int n = static_cast<int>(adj.size());
    NormalizedAdjacency a;
    a.n = n;
    a.row_ptr.resize(static_cast<std::size_t>(n) + 1, 0);

    std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::size_t deg = adj[static_cast<std::size_t>(i)].size();
        if (deg == 0) throw InternalError("normalize_adjacency: empty row (self-loop missing)");
        inv_sqrt_deg[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(static_cast<double>(deg));
        a.row_ptr[static_cast<std::size_t>(i) + 1] =
            a.row_ptr[static_cast<std::size_t>(i)] + static_cast<int>(deg);
    }
    const int nnz = a.row_ptr[static_cast<std::size_t>(n)];
    a.cols.reserve(static_cast<std::size_t>(nnz));
    a.vals.reserve(static_cast<std::size_t>(nnz));
    for (int i = 0; i < n; ++i)
        for (int j : adj[static_cast<std::size_t>(i)]) {
            a.cols.push_back(j);
            a.vals.push_back(inv_sqrt_deg[static_cast<std::size_t>(i)] *
                             inv_sqrt_deg[static_cast<std::size_t>(j)]);
        }

    // transpose in two passes: count column occupancy, then scatter
    a.t_row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
    for (int e = 0; e < nnz; ++e) ++a.t_row_ptr[static_cast<std::size_t>(a.cols[e]) + 1];
    for (int i = 0; i < n; ++i)
        a.t_row_ptr[static_cast<std::size_t>(i) + 1] += a.t_row_ptr[static_cast<std::size_t>(i)];
    a.t_cols.resize(static_cast<std::size_t>(nnz));
    a.t_vals.resize(static_cast<std::size_t>(nnz));
    std::vector<int> cursor(a.t_row_ptr.begin(), a.t_row_ptr.end() - 1);
    for (int i = 0; i < n; ++i)
        for (int e = a.row_ptr[static_cast<std::size_t>(i)]; e < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++e) {
            const int j = a.cols[static_cast<std::size_t>(e)];
            const int slot = cursor[static_cast<std::size_t>(j)]++;
            a.t_cols[static_cast<std::size_t>(slot)] = i;
            a.t_vals[static_cast<std::size_t>(slot)] = a.vals[static_cast<std::size_t>(e)];
        }
    return a;
}

Tensor gcn_propagate(Tape& tape, const NormalizedAdjacency& a_hat, const Tensor& h) {
    if (h.rank() != 2 || h.dim(0) != a_hat.n)
        throw ShapeError("gcn propagate: features " + shape_str(h.shape()) + " vs " +
                         std::to_string(a_hat.n) + " graph nodes");
    const int n = a_hat.n, c = h.dim(1);
    Tensor out = Tensor::zeros({n, c});
    kernels::csr_spmm(a_hat.row_ptr.data(), a_hat.cols.data(), a_hat.vals.data(), h.data(), n, c,
                      out.data());
    if (h.requires_grad()) {
        auto hi = h.impl();
        auto oi = out.impl();
        // capture the CSR transpose by value; the adjacency object is per-image
        auto t_row_ptr = a_hat.t_row_ptr;
        auto t_cols = a_hat.t_cols;
        auto t_vals = a_hat.t_vals;
        tape.record(oi, [hi, oi, t_row_ptr = std::move(t_row_ptr), t_cols = std::move(t_cols),
                         t_vals = std::move(t_vals), n, c] {
            if (!oi->has_grad() || !hi->requires_grad) return;
            hi->ensure_grad();
            kernels::csr_spmm_add(t_row_ptr.data(), t_cols.data(), t_vals.data(), oi->grad.data(),
                                  n, c, hi->grad.data());
        });
    }
    return out;
}

Tensor gcn_layer(Tape& tape, const NormalizedAdjacency& a_hat, const Tensor& h, const Tensor& w) {
    return relu(tape, matmul(tape, gcn_propagate(tape, a_hat, h), w));
}

GcnBranch::GcnBranch(const std::string& name, int channels, const GcnBranchConfig& cfg, Rng& rng)
    : name_(name) {
    if (cfg.layers < 1) throw ConfigError("gcn branch: layers must be >= 1");
    for (int l = 0; l < cfg.layers; ++l) {
        Tensor w = Tensor::zeros({channels, channels}, true);
        if (l + 1 < cfg.layers) init_fan_in_uniform(w, channels, rng);
        weights_.push_back(w);
    }
}

Tensor GcnBranch::forward(Tape& tape, const SemanticGraph& graph, int h, int w) const {
    if (graph.n != h * w)
        throw InternalError("gcn branch: graph has " + std::to_string(graph.n) + " nodes, map is " +
                            std::to_string(h) + "x" + std::to_string(w));
    const NormalizedAdjacency a_hat = normalize_adjacency(graph.adj);
    Tensor x = graph.node_features;
    for (std::size_t l = 0; l + 1 < weights_.size(); ++l)
        x = gcn_layer(tape, a_hat, x, weights_[l]);
    x = matmul(tape, gcn_propagate(tape, a_hat, x), weights_.back());
    return nc_to_chw(tape, x, h, w);
}

void GcnBranch::collect(std::vector<NamedTensor>& out) const {
    for (std::size_t l = 0; l < weights_.size(); ++l)
        out.emplace_back(name_ + ".layer" + std::to_string(l) + ".weight", weights_[l]);
}

Tensor fuse_features(Tape& tape, const Tensor& f, const Tensor& f_d, const Tensor& f_r) {
    return add(tape, add(tape, f, f_d), f_r);
}

}  // namespace graphcount

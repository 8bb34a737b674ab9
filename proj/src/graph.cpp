#include "graphcount/graph.hpp"

#include <cmath>
#include <functional>

#include "graphcount/kernels.hpp"

namespace graphcount {

std::vector<double> density_similarity(const std::vector<double>& m_flat) {
    const int n = static_cast<int>(m_flat.size());
    std::vector<double> s(static_cast<std::size_t>(n) * n);
    kernels::pairwise_abs_diff(m_flat.data(), n, s.data());
    return s;
}

std::vector<double> representation_similarity(const std::vector<double>& f_flat, int n, int c,
                                              int* zero_rows) {
    std::vector<double> s(static_cast<std::size_t>(n) * n);
    kernels::cosine_matrix(f_flat.data(), n, c, s.data(), zero_rows);
    return s;
}

std::vector<std::vector<int>> topk_adjacency(const std::vector<double>& score, int n, int k,
                                             bool largest) {
    if (k < 1 || k >= n)
        throw ConfigError("topk adjacency: need 1 <= K < N, got K=" + std::to_string(k) +
                          ", N=" + std::to_string(n));
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
#pragma omp parallel
    {
        std::vector<int> buf(static_cast<std::size_t>(k) + 1);
#pragma omp for schedule(static)
        for (int i = 0; i < n; ++i) {
            const int cnt =
                kernels::topk_row(score.data() + static_cast<std::size_t>(i) * n, n, i, k, largest,
                                  buf.data());
            adj[static_cast<std::size_t>(i)].assign(buf.begin(), buf.begin() + cnt);
        }
    }
    return adj;
}

namespace {

// Row-block construction (block = 1 row): scores are produced on the fly, so
// no N x N matrix is materialized. Semantics match the dense path exactly.
std::vector<std::vector<int>> topk_rows_streaming(int n, int k,
                                                  const std::function<void(int, double*)>& fill_row,
                                                  bool largest) {
    if (k < 1 || k >= n)
        throw ConfigError("graph build: need 1 <= K < N, got K=" + std::to_string(k) +
                          ", N=" + std::to_string(n));
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
#pragma omp parallel
    {
        std::vector<double> row(static_cast<std::size_t>(n));
        std::vector<int> buf(static_cast<std::size_t>(k) + 1);
#pragma omp for schedule(static)
        for (int i = 0; i < n; ++i) {
            fill_row(i, row.data());
            const int cnt = kernels::topk_row(row.data(), n, i, k, largest, buf.data());
            adj[static_cast<std::size_t>(i)].assign(buf.begin(), buf.begin() + cnt);
        }
    }
    return adj;
}

}  // namespace

SemanticGraph build_dsg(const Tensor& f_nodes, const Tensor& m, int k) {
    if (f_nodes.rank() != 2) throw InternalError("build_dsg: node features must be [N,C]");
    const int n = f_nodes.dim(0);
    if (static_cast<int>(m.size()) != n)
        throw InternalError("build_dsg: density map size " + std::to_string(m.size()) +
                            " does not match node count " + std::to_string(n));
    const double* mv = m.data();
    SemanticGraph g;
    g.kind = GraphKind::density;
    g.n = n;
    g.k = k;
    g.node_features = f_nodes;
    g.adj = topk_rows_streaming(
        n, k,
        [mv, n](int i, double* row) {
            const double mi = mv[i];
            for (int j = 0; j < n; ++j) row[j] = std::abs(mi - mv[j]);
        },
        /*largest=*/false);
    return g;
}

SemanticGraph build_rsg(const Tensor& f_nodes, int k) {
    if (f_nodes.rank() != 2) throw InternalError("build_rsg: node features must be [N,C]");
    const int n = f_nodes.dim(0);
    const int c = f_nodes.dim(1);
    const double* fv = f_nodes.data();

    std::vector<double> norm(static_cast<std::size_t>(n));
    int zeros = 0;
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        const double* fi = fv + static_cast<std::size_t>(i) * c;
        for (int p = 0; p < c; ++p) acc += fi[p] * fi[p];
        norm[static_cast<std::size_t>(i)] = std::sqrt(acc);
        if (acc == 0.0) ++zeros;
    }

    SemanticGraph g;
    g.kind = GraphKind::representation;
    g.n = n;
    g.k = k;
    g.node_features = f_nodes;
    g.zero_norm_rows = zeros;
    g.adj = topk_rows_streaming(
        n, k,
        [fv, &norm, n, c](int i, double* row) {
            const double* fi = fv + static_cast<std::size_t>(i) * c;
            const double ni = norm[static_cast<std::size_t>(i)];
            for (int j = 0; j < n; ++j) {
                if (j == i) {
                    row[j] = 1.0;
                    continue;
                }
                const double nj = norm[static_cast<std::size_t>(j)];
                if (ni == 0.0 || nj == 0.0) {
                    row[j] = 0.0;
                    continue;
                }
                const double* fj = fv + static_cast<std::size_t>(j) * c;
                double dot = 0.0;
                for (int p = 0; p < c; ++p) dot += fi[p] * fj[p];
                row[j] = dot / (ni * nj);
            }
        },
        /*largest=*/true);
    return g;
}

std::string graph_kind_name(GraphKind kind) {
    return kind == GraphKind::density ? "density" : "representation";
}

}  // namespace graphcount

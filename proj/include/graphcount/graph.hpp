#pragma once

// Density-driven (DSG) and representation-driven (RSG) semantic graph
// construction: per-node top-K neighbor selection over a similarity score
// plus a self-loop, kept as directed per-row adjacency lists.

#include <string>
#include <vector>

#include "graphcount/tensor.hpp"

namespace graphcount {

enum class GraphKind { density, representation };

struct SemanticGraph {
    GraphKind kind = GraphKind::density;
    int n = 0;
    int k = 0;
    Tensor node_features;               // [N, C]
    std::vector<std::vector<int>> adj;  // per row: ascending neighbor ids incl. self
    int zero_norm_rows = 0;             // RSG only: feature rows with zero norm
};

// Dense pairwise |m_i - m_j| over a flattened density map.
std::vector<double> density_similarity(const std::vector<double>& m_flat);

// Dense cosine-similarity matrix over N x C feature rows. Zero-norm rows get
// similarity 0 to others and 1 to themselves; their count goes to zero_rows.
std::vector<double> representation_similarity(const std::vector<double>& f_flat, int n, int c,
                                              int* zero_rows);

// Per-row top-K selection with self-loops over a dense N x N score matrix.
// direction: smallest keeps the K lowest scores per row, largest the K highest.
std::vector<std::vector<int>> topk_adjacency(const std::vector<double>& score, int n, int k,
                                             bool largest);

// f_nodes: [N, C] node features (flattened fused map); m: [1, H, W] density map.
SemanticGraph build_dsg(const Tensor& f_nodes, const Tensor& m, int k);
SemanticGraph build_rsg(const Tensor& f_nodes, int k);

std::string graph_kind_name(GraphKind kind);

}  // namespace graphcount

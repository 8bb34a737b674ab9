#pragma once

// Graph-convolutional branches over the semantic graphs. Propagation uses the
// symmetric normalization D^{-1/2} A D^{-1/2} applied verbatim to the directed
// adjacency (degrees from row sums), stored sparse (CSR) with a precomputed
// transpose for the backward pass.

#include <string>
#include <vector>

#include "graphcount/graph.hpp"
#include "graphcount/nn.hpp"

namespace graphcount {

struct NormalizedAdjacency {
    int n = 0;
    std::vector<int> row_ptr, cols;
    std::vector<double> vals;
    std::vector<int> t_row_ptr, t_cols;  // transpose, same value layout
    std::vector<double> t_vals;
};

NormalizedAdjacency normalize_adjacency(const std::vector<std::vector<int>>& adj);

// ReLU(A_hat * h * w) with h [N,C_in], w [C_in,C_out].
Tensor gcn_layer(Tape& tape, const NormalizedAdjacency& a_hat, const Tensor& h, const Tensor& w);

// A_hat * h without the nonlinearity (used by the final branch layer).
Tensor gcn_propagate(Tape& tape, const NormalizedAdjacency& a_hat, const Tensor& h);

struct GcnBranchConfig {
    int layers = 2;
};

// Chain of GCN layers with independent weights per branch. Hidden layers apply
// ReLU; the last layer is linear and zero-initialized so an untrained branch
// contributes exactly nothing to the fused features (and can still learn,
// which a ReLU clamped at zero would prevent).
class GcnBranch {
  public:
    GcnBranch() = default;
    GcnBranch(const std::string& name, int channels, const GcnBranchConfig& cfg, Rng& rng);

    // graph.node_features [N,C] -> feature map [C,H,W] with N = H*W.
    Tensor forward(Tape& tape, const SemanticGraph& graph, int h, int w) const;

    void collect(std::vector<NamedTensor>& out) const;
    const std::string& name() const { return name_; }

  private:
    std::string name_;
    std::vector<Tensor> weights_;  // each [C,C]
};

Tensor fuse_features(Tape& tape, const Tensor& f, const Tensor& f_d, const Tensor& f_r);

}  // namespace graphcount

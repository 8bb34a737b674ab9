#pragma once

// Full pipeline: backbone -> PA-FPN fusion -> density prediction -> dual
// semantic graphs -> GCN branches -> feature fusion -> point heads.
// Ablation switches gate the wiring; every module is always constructed (with
// switch-independent init), so variants of the same seed share weights.

#include <vector>

#include "graphcount/backbone.hpp"
#include "graphcount/density.hpp"
#include "graphcount/gcn.hpp"
#include "graphcount/graph.hpp"
#include "graphcount/points.hpp"

namespace graphcount {

struct AblationSwitches {
    bool use_dp = true;  // density prediction module
    bool use_da = true;  // density-driven graph branch (needs use_dp)
    bool use_ra = true;  // representation-driven graph branch
};

struct ModelConfig {
    BackboneConfig backbone;
    DensityHeadConfig density;
    GcnBranchConfig gcn;
    PointHeadConfig points;
    int k = 4;              // graph neighbors
    double gt_sigma = 2.0;  // GT density kernel std, in cells
    AblationSwitches ablation;

    void validate() const;
};

struct ForwardResult {
    Tensor fused_base;   // F from the FPN, stride 8
    Tensor density;      // M, defined when use_dp
    Tensor fused_final;  // F + active branch outputs
    PointPredictions preds;
    SemanticGraph dsg;  // populated when use_da
    SemanticGraph rsg;  // populated when use_ra
    bool has_density = false;
    bool has_dsg = false;
    bool has_rsg = false;
};

// Pre-built graph topologies, used by gradient checks to hold the discrete
// adjacency fixed while inputs are perturbed.
struct FrozenGraphs {
    std::vector<std::vector<int>> dsg_adj;
    std::vector<std::vector<int>> rsg_adj;
};

class CountingModel {
  public:
    CountingModel(const ModelConfig& cfg, unsigned long long seed);

    ForwardResult forward(Tape& tape, const Tensor& image, bool training,
                          const FrozenGraphs* frozen = nullptr);

    std::vector<NamedTensor> parameters() const;         // every module
    std::vector<NamedTensor> active_parameters() const;  // wired modules only
    std::vector<NamedTensor> buffers() const;            // BN running stats

    // optimizer groups over active parameters
    std::vector<Tensor> backbone_param_group() const;
    std::vector<Tensor> head_param_group() const;

    const ModelConfig& config() const { return cfg_; }

    static std::size_t parameter_count(const std::vector<NamedTensor>& params);

  private:
    ModelConfig cfg_;
    Backbone backbone_;
    PaFpn fpn_;
    DensityHead density_;
    GcnBranch da_;
    GcnBranch ra_;
    PointHead points_;
};

}  // namespace graphcount

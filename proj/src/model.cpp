#include "graphcount/model.hpp"

namespace graphcount {

void ModelConfig::validate() const {
    if (k < 1) throw ConfigError("model: graph neighbor count K must be >= 1");
    if (gt_sigma <= 0.0) throw ConfigError("model: gt_sigma must be positive");
    if (ablation.use_da && !ablation.use_dp)
        throw ConfigError("model: use_da requires use_dp (the density branch consumes M)");
    if (backbone.convs_per_stage < 1) throw ConfigError("model: convs_per_stage must be >= 1");
    for (int c : backbone.stage_channels)
        if (c < 1) throw ConfigError("model: stage channels must be >= 1");
    if (backbone.fused_channels < 1) throw ConfigError("model: fused_channels must be >= 1");
    if (density.blocks < 1) throw ConfigError("model: density blocks must be >= 1");
    if (density.hidden_channels < 1) throw ConfigError("model: density hidden channels must be >= 1");
    if (gcn.layers < 1) throw ConfigError("model: gcn layers must be >= 1");
    if (points.points_per_side < 1) throw ConfigError("model: points_per_side must be >= 1");
    if (points.threshold <= 0.0 || points.threshold >= 1.0)
        throw ConfigError("model: counting threshold must lie in (0,1)");
}

CountingModel::CountingModel(const ModelConfig& cfg, unsigned long long seed) : cfg_(cfg) {
    cfg_.validate();
    // Per-module seed streams are independent of the ablation switches, so
    // e.g. baseline and full variants of one seed share backbone weights.
    Rng backbone_rng(mix_seed(seed, 1, 0));
    Rng fpn_rng(mix_seed(seed, 2, 0));
    Rng density_rng(mix_seed(seed, 3, 0));
    Rng da_rng(mix_seed(seed, 4, 0));
    Rng ra_rng(mix_seed(seed, 5, 0));
    Rng points_rng(mix_seed(seed, 6, 0));

    backbone_ = Backbone(cfg_.backbone, backbone_rng);
    fpn_ = PaFpn(cfg_.backbone, fpn_rng);
    density_ = DensityHead(cfg_.backbone.fused_channels, cfg_.density, density_rng);
    da_ = GcnBranch("gcn_da", cfg_.backbone.fused_channels, cfg_.gcn, da_rng);
    ra_ = GcnBranch("gcn_ra", cfg_.backbone.fused_channels, cfg_.gcn, ra_rng);
    points_ = PointHead(cfg_.backbone.fused_channels, BackboneConfig::stride, cfg_.points,
                        points_rng);
}

ForwardResult CountingModel::forward(Tape& tape, const Tensor& image, bool training,
                                     const FrozenGraphs* frozen) {
    const int s = BackboneConfig::stride;
    Tensor x = image;
    if (x.dim(1) % s != 0 || x.dim(2) % s != 0) {
        const int th = (x.dim(1) + s - 1) / s * s;
        const int tw = (x.dim(2) + s - 1) / s * s;
        x = pad_reflect_br(tape, x, th, tw);
    }

    ForwardResult r;
    const std::array<Tensor, 3> feats = backbone_.forward(tape, x, training);
    r.fused_base = fpn_.forward(tape, feats);
    const int h = r.fused_base.dim(1), w = r.fused_base.dim(2);

    if (cfg_.ablation.use_dp) {
        r.density = density_.forward(tape, r.fused_base, training);
        r.has_density = true;
    }

    Tensor fused = r.fused_base;
    if (cfg_.ablation.use_da || cfg_.ablation.use_ra) {
        Tensor nodes = chw_to_nc(tape, r.fused_base);
        if (cfg_.ablation.use_da) {
            if (frozen) {
                r.dsg.kind = GraphKind::density;
                r.dsg.n = h * w;
                r.dsg.k = cfg_.k;
                r.dsg.node_features = nodes;
                r.dsg.adj = frozen->dsg_adj;
            } else {
                r.dsg = build_dsg(nodes, r.density, cfg_.k);
            }
            r.has_dsg = true;
            fused = add(tape, fused, da_.forward(tape, r.dsg, h, w));
        }
        if (cfg_.ablation.use_ra) {
            if (frozen) {
                r.rsg.kind = GraphKind::representation;
                r.rsg.n = h * w;
                r.rsg.k = cfg_.k;
                r.rsg.node_features = nodes;
                r.rsg.adj = frozen->rsg_adj;
            } else {
                r.rsg = build_rsg(nodes, cfg_.k);
            }
            r.has_rsg = true;
            fused = add(tape, fused, ra_.forward(tape, r.rsg, h, w));
        }
    }
    r.fused_final = fused;
    r.preds = points_.forward(tape, r.fused_final);
    return r;
}

std::vector<NamedTensor> CountingModel::parameters() const {
    std::vector<NamedTensor> out;
    backbone_.collect(out);
    fpn_.collect(out);
    density_.collect(out);
    da_.collect(out);
    ra_.collect(out);
    points_.collect(out);
    return out;
}

std::vector<NamedTensor> CountingModel::active_parameters() const {
    std::vector<NamedTensor> out;
    backbone_.collect(out);
    fpn_.collect(out);
    if (cfg_.ablation.use_dp) density_.collect(out);
    if (cfg_.ablation.use_da) da_.collect(out);
    if (cfg_.ablation.use_ra) ra_.collect(out);
    points_.collect(out);
    return out;
}

std::vector<NamedTensor> CountingModel::buffers() const {
    std::vector<NamedTensor> out;
    backbone_.collect_buffers(out);
    density_.collect_buffers(out);
    return out;
}

std::vector<Tensor> CountingModel::backbone_param_group() const {
    std::vector<NamedTensor> named;
    backbone_.collect(named);
    fpn_.collect(named);
    std::vector<Tensor> out;
    for (auto& [name, t] : named) out.push_back(t);
    return out;
}

std::vector<Tensor> CountingModel::head_param_group() const {
    std::vector<NamedTensor> named;
    if (cfg_.ablation.use_dp) density_.collect(named);
    if (cfg_.ablation.use_da) da_.collect(named);
    if (cfg_.ablation.use_ra) ra_.collect(named);
    points_.collect(named);
    std::vector<Tensor> out;
    for (auto& [name, t] : named) out.push_back(t);
    return out;
}

std::size_t CountingModel::parameter_count(const std::vector<NamedTensor>& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

}  // namespace graphcount

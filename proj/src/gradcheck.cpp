#include "graphcount/gradcheck.hpp"

#include <cmath>

#include "graphcount/backbone.hpp"
#include "graphcount/config.hpp"
#include "graphcount/density.hpp"
#include "graphcount/gcn.hpp"
#include "graphcount/graph.hpp"
#include "graphcount/losses.hpp"
#include "graphcount/model.hpp"
#include "graphcount/points.hpp"
#include "graphcount/rng.hpp"

namespace graphcount {

double max_rel_err_fd(const std::vector<Tensor>& wrt,
                      const std::function<Tensor(Tape&)>& f, double eps) {
    for (const Tensor& t : wrt) {
        Tensor leaf = t;
        leaf.set_requires_grad(true);
        if (leaf.has_grad()) leaf.zero_grad();
    }
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor loss = f(tape);
        tape.backward(loss);
        for (const Tensor& t : wrt)
            analytic.push_back(t.has_grad() ? t.grad()
                                            : std::vector<double>(t.size(), 0.0));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < wrt.size(); ++i) {
        Tensor t = wrt[i];
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double orig = t.data()[j];
            t.data()[j] = orig + eps;
            double lp;
            {
                Tape tape;
                lp = f(tape).item();
            }
            t.data()[j] = orig - eps;
            double lm;
            {
                Tape tape;
                lm = f(tape).item();
            }
            t.data()[j] = orig;
            const double fd = (lp - lm) / (2.0 * eps);
            const double a = analytic[i][j];
            const double rel = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
            if (rel > worst) worst = rel;
        }
    }
    return worst;
}

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                   bool requires_grad = true) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

// keeps values away from the ReLU kink so central differences stay two-sided
Tensor rand_tensor_off_zero(Shape shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double u = rng.uniform(-1.0, 1.0);
        t.data()[i] = u + (u >= 0.0 ? 0.05 : -0.05);
    }
    return t;
}

// scalarizes a tensor with fixed random weights so upstream grads vary
Tensor weighted_sum(Tape& tape, const Tensor& x, const Tensor& w) {
    return sum(tape, mul(tape, x, w));
}

using CheckFn = std::function<double(unsigned long long)>;

struct CheckDef {
    std::string name;
    CheckFn run;
};

double check_elementwise(unsigned long long seed, int which) {
    Rng rng(mix_seed(seed, 11, static_cast<unsigned long long>(which)));
    Tensor a = which == 4 ? rand_tensor_off_zero({3, 4}, rng) : rand_tensor({3, 4}, rng);
    Tensor b = rand_tensor({3, 4}, rng);
    Tensor w = rand_tensor({3, 4}, rng, -1.0, 1.0, false);
    auto f = [=](Tape& tape) {
        Tensor y;
        switch (which) {
            case 0: y = add(tape, a, b); break;
            case 1: y = sub(tape, a, b); break;
            case 2: y = mul(tape, a, b); break;
            case 3: y = scale(tape, a, -1.7); break;
            case 4: y = relu(tape, a); break;
            default: y = sigmoid(tape, a); break;
        }
        return weighted_sum(tape, y, w);
    };
    return max_rel_err_fd({a, b}, f);
}

double check_matmul(unsigned long long seed) {
    Rng rng(mix_seed(seed, 12, 0));
    Tensor a = rand_tensor({4, 3}, rng);
    Tensor b = rand_tensor({3, 5}, rng);
    Tensor w = rand_tensor({4, 5}, rng, -1.0, 1.0, false);
    return max_rel_err_fd({a, b},
                          [=](Tape& tape) { return weighted_sum(tape, matmul(tape, a, b), w); });
}

double check_conv(unsigned long long seed, int stride, int pad, int h, int wdim) {
    Rng rng(mix_seed(seed, 13, static_cast<unsigned long long>(stride * 10 + pad)));
    Tensor x = rand_tensor({2, h, wdim}, rng);
    Tensor k = rand_tensor({3, 2, 3, 3}, rng);
    Tensor bias = rand_tensor({3}, rng);
    const int oh = (h + 2 * pad - 3) / stride + 1;
    const int ow = (wdim + 2 * pad - 3) / stride + 1;
    Tensor w = rand_tensor({3, oh, ow}, rng, -1.0, 1.0, false);
    return max_rel_err_fd({x, k, bias}, [=](Tape& tape) {
        return weighted_sum(tape, conv2d(tape, x, k, bias, stride, pad), w);
    });
}

double check_upsample(unsigned long long seed) {
    Rng rng(mix_seed(seed, 14, 0));
    Tensor x = rand_tensor({2, 3, 3}, rng);
    Tensor w = rand_tensor({2, 6, 6}, rng, -1.0, 1.0, false);
    return max_rel_err_fd(
        {x}, [=](Tape& tape) { return weighted_sum(tape, upsample_nearest(tape, x, 2), w); });
}

double check_avgpool(unsigned long long seed) {
    Rng rng(mix_seed(seed, 15, 0));
    Tensor x = rand_tensor({2, 4, 6}, rng);
    Tensor w = rand_tensor({2, 2, 3}, rng, -1.0, 1.0, false);
    return max_rel_err_fd({x},
                          [=](Tape& tape) { return weighted_sum(tape, avgpool2x2(tape, x), w); });
}

double check_pad_reflect(unsigned long long seed) {
    Rng rng(mix_seed(seed, 16, 0));
    Tensor x = rand_tensor({2, 4, 5}, rng);
    Tensor w = rand_tensor({2, 6, 7}, rng, -1.0, 1.0, false);
    return max_rel_err_fd(
        {x}, [=](Tape& tape) { return weighted_sum(tape, pad_reflect_br(tape, x, 6, 7), w); });
}

double check_reshape(unsigned long long seed) {
    Rng rng(mix_seed(seed, 17, 0));
    Tensor x = rand_tensor({3, 2, 4}, rng);
    Tensor w = rand_tensor({3, 2, 4}, rng, -1.0, 1.0, false);
    return max_rel_err_fd({x}, [=](Tape& tape) {
        Tensor nodes = chw_to_nc(tape, x);
        return weighted_sum(tape, nc_to_chw(tape, nodes, 2, 4), w);
    });
}

double check_batchnorm(unsigned long long seed, bool training) {
    Rng rng(mix_seed(seed, 18, training ? 1 : 0));
    Tensor x = rand_tensor({3, 4, 4}, rng);
    BatchNorm2d bn(3);
    for (std::size_t i = 0; i < 3; ++i) {
        bn.gamma.data()[i] = rng.uniform(0.5, 1.5);
        bn.beta.data()[i] = rng.uniform(-0.5, 0.5);
        bn.running_mean.data()[i] = rng.uniform(-0.3, 0.3);
        bn.running_var.data()[i] = rng.uniform(0.5, 1.5);
    }
    Tensor w = rand_tensor({3, 4, 4}, rng, -1.0, 1.0, false);
    auto bn_shared = std::make_shared<BatchNorm2d>(bn);
    return max_rel_err_fd({x, bn.gamma, bn.beta}, [=](Tape& tape) {
        return weighted_sum(tape, bn_shared->forward(tape, x, training), w);
    });
}

double check_gcn(unsigned long long seed, bool full_layer) {
    Rng rng(mix_seed(seed, 19, full_layer ? 1 : 0));
    const int n = 9;
    std::vector<double> score(static_cast<std::size_t>(n) * n);
    for (double& s : score) s = rng.uniform(0.0, 1.0);
    const NormalizedAdjacency a_hat = normalize_adjacency(topk_adjacency(score, n, 3, false));
    Tensor h = rand_tensor({n, 4}, rng);
    Tensor wmat = rand_tensor({4, 4}, rng);
    Tensor w = rand_tensor({n, 4}, rng, -1.0, 1.0, false);
    return max_rel_err_fd({h, wmat}, [=](Tape& tape) {
        Tensor y = full_layer ? gcn_layer(tape, a_hat, h, wmat)
                              : matmul(tape, gcn_propagate(tape, a_hat, h), wmat);
        return weighted_sum(tape, y, w);
    });
}

double check_gcn_branch(unsigned long long seed) {
    Rng rng(mix_seed(seed, 20, 0));
    GcnBranchConfig cfg;
    cfg.layers = 2;
    GcnBranch branch("b", 4, cfg, rng);
    std::vector<NamedTensor> params;
    branch.collect(params);
    for (auto& [name, t] : params)  // randomize the zero-initialized last layer too
        for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-0.7, 0.7);

    const int n = 16;
    std::vector<double> score(static_cast<std::size_t>(n) * n);
    for (double& s : score) s = rng.uniform(0.0, 1.0);
    SemanticGraph g;
    g.n = n;
    g.k = 4;
    g.adj = topk_adjacency(score, n, 4, true);
    Tensor nodes = rand_tensor({n, 4}, rng);
    g.node_features = nodes;
    Tensor w = rand_tensor({4, 4, 4}, rng, -1.0, 1.0, false);
    std::vector<Tensor> wrt{nodes};
    for (auto& [name, t] : params) wrt.push_back(t);
    auto branch_shared = std::make_shared<GcnBranch>(std::move(branch));
    return max_rel_err_fd(wrt, [=](Tape& tape) {
        return weighted_sum(tape, branch_shared->forward(tape, g, 4, 4), w);
    });
}

double check_backbone_fpn(unsigned long long seed) {
    Rng rng(mix_seed(seed, 21, 0));
    BackboneConfig cfg;
    cfg.stage_channels = {2, 3, 4};
    cfg.convs_per_stage = 1;
    cfg.fused_channels = 4;
    Rng init_rng(mix_seed(seed, 21, 1));
    auto backbone = std::make_shared<Backbone>(cfg, init_rng);
    auto fpn = std::make_shared<PaFpn>(cfg, init_rng);
    Tensor image = rand_tensor({3, 8, 8}, rng, 0.0, 1.0);
    Tensor w = rand_tensor({4, 1, 1}, rng, -1.0, 1.0, false);
    std::vector<NamedTensor> params;
    backbone->collect(params);
    fpn->collect(params);
    std::vector<Tensor> wrt{image, params[0].second, params.back().second};
    return max_rel_err_fd(wrt, [=](Tape& tape) {
        return weighted_sum(tape, fpn->forward(tape, backbone->forward(tape, image, true)), w);
    });
}

double check_density_head(unsigned long long seed) {
    Rng rng(mix_seed(seed, 22, 0));
    DensityHeadConfig cfg;
    cfg.blocks = 2;
    cfg.hidden_channels = 6;
    Rng init_rng(mix_seed(seed, 22, 1));
    auto head = std::make_shared<DensityHead>(4, cfg, init_rng);
    Tensor f = rand_tensor({4, 4, 4}, rng);
    Tensor w = rand_tensor({1, 4, 4}, rng, -1.0, 1.0, false);
    std::vector<NamedTensor> params;
    head->collect(params);
    std::vector<Tensor> wrt{f, params[0].second, params.back().second};
    return max_rel_err_fd(
        wrt, [=](Tape& tape) { return weighted_sum(tape, head->forward(tape, f, true), w); });
}

double check_point_heads(unsigned long long seed) {
    Rng rng(mix_seed(seed, 23, 0));
    PointHeadConfig cfg;
    Rng init_rng(mix_seed(seed, 23, 1));
    auto head = std::make_shared<PointHead>(4, 8, cfg, init_rng);
    std::vector<NamedTensor> params;
    head->collect(params);
    for (auto& [name, t] : params)  // give the zero-init finals generic values
        for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-0.4, 0.4);
    Tensor f = rand_tensor({4, 4, 4}, rng);
    Tensor wo = rand_tensor({8, 4, 4}, rng, -1.0, 1.0, false);
    Tensor wc = rand_tensor({4, 4, 4}, rng, -1.0, 1.0, false);
    std::vector<Tensor> wrt{f, params[2].second, params.back().second};
    return max_rel_err_fd(wrt, [=](Tape& tape) {
        PointPredictions preds = head->forward(tape, f);
        return add(tape, weighted_sum(tape, preds.offsets, wo),
                   weighted_sum(tape, preds.conf, wc));
    });
}

double check_density_loss(unsigned long long seed) {
    Rng rng(mix_seed(seed, 24, 0));
    Tensor m = rand_tensor({1, 4, 4}, rng);
    Tensor m_gt = rand_tensor({1, 4, 4}, rng, 0.0, 1.0, false);
    return max_rel_err_fd({m}, [=](Tape& tape) { return density_loss(tape, m, m_gt); });
}

double check_point_loss(unsigned long long seed, bool with_gt) {
    Rng rng(mix_seed(seed, 25, with_gt ? 1 : 0));
    const int h = 2, w = 2, r = 1, s = 8;
    Tensor logits = rand_tensor({r * r, h, w}, rng, -2.0, 2.0);
    Tensor offsets = rand_tensor({2 * r * r, h, w}, rng, -0.5, 0.5);
    std::vector<Point> gt;
    if (with_gt) {
        gt.push_back(Point{rng.uniform(0.0, 16.0), rng.uniform(0.0, 16.0)});
        gt.push_back(Point{rng.uniform(0.0, 16.0), rng.uniform(0.0, 16.0)});
    }
    LossConfig cfg;
    cfg.lambda1 = 0.05;  // raise the localization share so its gradient is exercised

    // fixed matching, computed once from the starting values
    Assignment xi;
    {
        Tape tape;
        PointPredictions preds;
        preds.offsets = offsets;
        preds.conf = sigmoid(tape, logits);
        preds.map_h = h;
        preds.map_w = w;
        preds.stride = s;
        preds.points_per_side = r;
        preds.anchors = generate_anchors(h, w, s, r);
        xi = hungarian_match(preds, gt, 0.4);
    }
    return max_rel_err_fd({logits, offsets}, [=](Tape& tape) {
        PointPredictions preds;
        preds.offsets = offsets;
        preds.conf = sigmoid(tape, logits);
        preds.map_h = h;
        preds.map_w = w;
        preds.stride = s;
        preds.points_per_side = r;
        preds.anchors = generate_anchors(h, w, s, r);
        return point_loss(tape, preds, gt, xi, cfg);
    });
}

double check_joint_e2e(unsigned long long seed) {
    ModelConfig cfg;
    cfg.backbone.stage_channels = {2, 3, 4};
    cfg.backbone.convs_per_stage = 1;
    cfg.backbone.fused_channels = 4;
    cfg.density.blocks = 1;
    cfg.density.hidden_channels = 4;
    cfg.k = 2;
    cfg.points.points_per_side = 1;
    auto model = std::make_shared<CountingModel>(cfg, mix_seed(seed, 26, 0));

    Rng rng(mix_seed(seed, 26, 1));
    std::vector<NamedTensor> params = model->parameters();
    for (auto& [name, t] : params)  // zero-init layers included, so every path carries signal
        for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-0.4, 0.4);

    Tensor image = rand_tensor({3, 16, 16}, rng, 0.0, 1.0);
    std::vector<Point> gt{Point{rng.uniform(1.0, 15.0), rng.uniform(1.0, 15.0)},
                          Point{rng.uniform(1.0, 15.0), rng.uniform(1.0, 15.0)}};
    Tensor m_gt = gt_density_map(gt, 2, 2, 8, 1.0);
    LossConfig loss_cfg;
    loss_cfg.lambda1 = 0.05;

    // freeze the discrete structures at their starting-point values
    auto frozen = std::make_shared<FrozenGraphs>();
    Assignment xi;
    {
        Tape tape;
        ForwardResult r = model->forward(tape, image, true);
        frozen->dsg_adj = r.dsg.adj;
        frozen->rsg_adj = r.rsg.adj;
        xi = hungarian_match(r.preds, gt, cfg.points.match_tau);
    }

    std::vector<Tensor> wrt;
    for (auto& [name, t] : params) {
        if (name == "backbone.stage1.block0.conv.weight" || name == "fpn.lateral3.weight" ||
            name == "density.final.weight" || name == "gcn_da.layer0.weight" ||
            name == "gcn_ra.layer1.weight" || name == "points.cls2.weight" ||
            name == "points.reg2.bias")
            wrt.push_back(t);
    }
    if (wrt.size() != 7) throw InternalError("e2e gradcheck: parameter names drifted");
    auto f = [=](Tape& tape) {
        ForwardResult r = model->forward(tape, image, true, frozen.get());
        Tensor lp = point_loss(tape, r.preds, gt, xi, loss_cfg);
        Tensor ld = density_loss(tape, r.density, m_gt);
        return joint_loss(tape, lp, ld);
    };
    return max_rel_err_fd(wrt, f);
}

}  // namespace

std::vector<GradCheck> gradcheck_suite(int seeds, double tol) {
    std::vector<CheckDef> defs;
    defs.push_back({"tensor.add", [](unsigned long long s) { return check_elementwise(s, 0); }});
    defs.push_back({"tensor.sub", [](unsigned long long s) { return check_elementwise(s, 1); }});
    defs.push_back({"tensor.mul", [](unsigned long long s) { return check_elementwise(s, 2); }});
    defs.push_back({"tensor.scale", [](unsigned long long s) { return check_elementwise(s, 3); }});
    defs.push_back({"tensor.relu", [](unsigned long long s) { return check_elementwise(s, 4); }});
    defs.push_back({"tensor.sigmoid", [](unsigned long long s) { return check_elementwise(s, 5); }});
    defs.push_back({"tensor.matmul", check_matmul});
    defs.push_back({"tensor.conv2d_s1p1", [](unsigned long long s) { return check_conv(s, 1, 1, 6, 6); }});
    defs.push_back({"tensor.conv2d_s1p0", [](unsigned long long s) { return check_conv(s, 1, 0, 5, 5); }});
    defs.push_back({"tensor.conv2d_s2p0", [](unsigned long long s) { return check_conv(s, 2, 0, 7, 7); }});
    defs.push_back({"tensor.upsample_nearest", check_upsample});
    defs.push_back({"tensor.avgpool2x2", check_avgpool});
    defs.push_back({"tensor.pad_reflect_br", check_pad_reflect});
    defs.push_back({"tensor.reshape_roundtrip", check_reshape});
    defs.push_back({"tensor.batchnorm_train", [](unsigned long long s) { return check_batchnorm(s, true); }});
    defs.push_back({"tensor.batchnorm_eval", [](unsigned long long s) { return check_batchnorm(s, false); }});
    defs.push_back({"gcn.propagate", [](unsigned long long s) { return check_gcn(s, false); }});
    defs.push_back({"gcn.layer", [](unsigned long long s) { return check_gcn(s, true); }});
    defs.push_back({"gcn.branch", check_gcn_branch});
    defs.push_back({"backbone.fpn_fusion", check_backbone_fpn});
    defs.push_back({"density.head", check_density_head});
    defs.push_back({"points.heads", check_point_heads});
    defs.push_back({"losses.density", check_density_loss});
    defs.push_back({"losses.point", [](unsigned long long s) { return check_point_loss(s, true); }});
    defs.push_back({"losses.point_no_gt", [](unsigned long long s) { return check_point_loss(s, false); }});
    defs.push_back({"e2e.joint_loss", check_joint_e2e});

    std::vector<GradCheck> out;
    for (const CheckDef& def : defs) {
        GradCheck result;
        result.name = def.name;
        for (int s = 1; s <= seeds; ++s) {
            const double err = def.run(static_cast<unsigned long long>(s));
            if (err > result.max_rel_err) {
                result.max_rel_err = err;
                result.worst_seed = static_cast<unsigned long long>(s);
            }
        }
        result.pass = result.max_rel_err < tol;
        out.push_back(std::move(result));
    }
    return out;
}

}  // namespace graphcount

#include "graphcount/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

namespace graphcount {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& block,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError("config: '" + block + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw ConfigError("config: unknown key '" + it.key() + "' in '" + block + "'");
    }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& block, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad value for '" + block + "." + key + "'");
    }
}

void read_stage_channels(const json& obj, const std::string& block, std::array<int, 3>& out) {
    if (!obj.contains("stage_channels")) return;
    const json& arr = obj.at("stage_channels");
    if (!arr.is_array() || arr.size() != 3)
        throw ConfigError("config: '" + block + ".stage_channels' must be an array of 3 ints");
    for (int i = 0; i < 3; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = arr.at(static_cast<std::size_t>(i)).get<int>();
        } catch (const json::exception&) {
            throw ConfigError("config: bad value in '" + block + ".stage_channels'");
        }
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    model.validate();
    if (loss.lambda1 < 0.0 || loss.lambda2 < 0.0)
        throw ConfigError("config: loss weights must be nonnegative");
    if (optim.lr < 0.0 || optim.backbone_lr_scale < 0.0)
        throw ConfigError("config: learning rates must be nonnegative");
    if (optim.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (train.epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (train.train_scenes < 1 || train.eval_scenes < 1)
        throw ConfigError("config: scene counts must be >= 1");
    if (train.eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
    if (train.stop_at_train_mae < 0.0)
        throw ConfigError("config: stop_at_train_mae must be >= 0");
    if (train.freeze_bn_tail < 0 || train.freeze_bn_tail > train.epochs)
        throw ConfigError("config: need 0 <= freeze_bn_tail <= epochs");
    // scene/augment blocks are validated where they are consumed; run the
    // cheap structural checks here so `config init` output round-trips
    if (scene.count_min < 0 || scene.count_max < scene.count_min)
        throw ConfigError("config: need 0 <= scene.count_min <= scene.count_max");
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["backbone"] = {{"stage_channels", cfg.model.backbone.stage_channels},
                     {"convs_per_stage", cfg.model.backbone.convs_per_stage},
                     {"fused_channels", cfg.model.backbone.fused_channels}};
    j["density_head"] = {{"blocks", cfg.model.density.blocks},
                         {"hidden_channels", cfg.model.density.hidden_channels}};
    j["graph"] = {{"k", cfg.model.k}};
    j["gcn"] = {{"layers", cfg.model.gcn.layers}};
    j["point_head"] = {{"points_per_side", cfg.model.points.points_per_side},
                       {"match_tau", cfg.model.points.match_tau},
                       {"threshold", cfg.model.points.threshold}};
    j["gt_density"] = {{"sigma", cfg.model.gt_sigma}};
    j["ablation"] = {{"use_dp", cfg.model.ablation.use_dp},
                     {"use_da", cfg.model.ablation.use_da},
                     {"use_ra", cfg.model.ablation.use_ra}};
    j["loss"] = {{"lambda1", cfg.loss.lambda1},
                 {"lambda2", cfg.loss.lambda2},
                 {"eps_log", cfg.loss.eps_log}};
    j["scene"] = {{"height", cfg.scene.height},
                  {"width", cfg.scene.width},
                  {"count_min", cfg.scene.count_min},
                  {"count_max", cfg.scene.count_max},
                  {"clusters_min", cfg.scene.clusters_min},
                  {"clusters_max", cfg.scene.clusters_max},
                  {"cluster_spread", cfg.scene.cluster_spread},
                  {"blob_r_near", cfg.scene.blob_r_near},
                  {"blob_r_far", cfg.scene.blob_r_far},
                  {"amp_min", cfg.scene.amp_min},
                  {"amp_max", cfg.scene.amp_max},
                  {"tint", cfg.scene.tint},
                  {"background", cfg.scene.background},
                  {"background_gradient", cfg.scene.background_gradient},
                  {"noise", cfg.scene.noise}};
    j["augment"] = {{"enabled", cfg.augment.enabled},
                    {"scale_min", cfg.augment.scale_min},
                    {"scale_max", cfg.augment.scale_max},
                    {"crop_h", cfg.augment.crop_h},
                    {"crop_w", cfg.augment.crop_w},
                    {"gamma_min", cfg.augment.gamma_min},
                    {"gamma_max", cfg.augment.gamma_max}};
    j["optim"] = {{"lr", cfg.optim.lr},
                  {"backbone_lr_scale", cfg.optim.backbone_lr_scale},
                  {"batch_size", cfg.optim.batch_size}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"train_scenes", cfg.train.train_scenes},
                  {"eval_scenes", cfg.train.eval_scenes},
                  {"eval_every", cfg.train.eval_every},
                  {"stop_at_train_mae", cfg.train.stop_at_train_mae},
                  {"freeze_bn_tail", cfg.train.freeze_bn_tail}};
    return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    check_keys(j, "(top level)",
               {"seed", "backbone", "density_head", "graph", "gcn", "point_head", "gt_density",
                "ablation", "loss", "scene", "augment", "optim", "train"});
    read(j, "seed", "(top level)", cfg.seed);
    if (j.contains("backbone")) {
        const json& b = j.at("backbone");
        check_keys(b, "backbone", {"stage_channels", "convs_per_stage", "fused_channels"});
        read_stage_channels(b, "backbone", cfg.model.backbone.stage_channels);
        read(b, "convs_per_stage", "backbone", cfg.model.backbone.convs_per_stage);
        read(b, "fused_channels", "backbone", cfg.model.backbone.fused_channels);
    }
    if (j.contains("density_head")) {
        const json& b = j.at("density_head");
        check_keys(b, "density_head", {"blocks", "hidden_channels"});
        read(b, "blocks", "density_head", cfg.model.density.blocks);
        read(b, "hidden_channels", "density_head", cfg.model.density.hidden_channels);
    }
    if (j.contains("graph")) {
        const json& b = j.at("graph");
        check_keys(b, "graph", {"k"});
        read(b, "k", "graph", cfg.model.k);
    }
    if (j.contains("gcn")) {
        const json& b = j.at("gcn");
        check_keys(b, "gcn", {"layers"});
        read(b, "layers", "gcn", cfg.model.gcn.layers);
    }
    if (j.contains("point_head")) {
        const json& b = j.at("point_head");
        check_keys(b, "point_head", {"points_per_side", "match_tau", "threshold"});
        read(b, "points_per_side", "point_head", cfg.model.points.points_per_side);
        read(b, "match_tau", "point_head", cfg.model.points.match_tau);
        read(b, "threshold", "point_head", cfg.model.points.threshold);
    }
    if (j.contains("gt_density")) {
        const json& b = j.at("gt_density");
        check_keys(b, "gt_density", {"sigma"});
        read(b, "sigma", "gt_density", cfg.model.gt_sigma);
    }
    if (j.contains("ablation")) {
        const json& b = j.at("ablation");
        check_keys(b, "ablation", {"use_dp", "use_da", "use_ra"});
        read(b, "use_dp", "ablation", cfg.model.ablation.use_dp);
        read(b, "use_da", "ablation", cfg.model.ablation.use_da);
        read(b, "use_ra", "ablation", cfg.model.ablation.use_ra);
    }
    if (j.contains("loss")) {
        const json& b = j.at("loss");
        check_keys(b, "loss", {"lambda1", "lambda2", "eps_log"});
        read(b, "lambda1", "loss", cfg.loss.lambda1);
        read(b, "lambda2", "loss", cfg.loss.lambda2);
        read(b, "eps_log", "loss", cfg.loss.eps_log);
    }
    if (j.contains("scene")) {
        const json& b = j.at("scene");
        check_keys(b, "scene",
                   {"height", "width", "count_min", "count_max", "clusters_min", "clusters_max",
                    "cluster_spread", "blob_r_near", "blob_r_far", "amp_min", "amp_max", "tint",
                    "background", "background_gradient", "noise"});
        read(b, "height", "scene", cfg.scene.height);
        read(b, "width", "scene", cfg.scene.width);
        read(b, "count_min", "scene", cfg.scene.count_min);
        read(b, "count_max", "scene", cfg.scene.count_max);
        read(b, "clusters_min", "scene", cfg.scene.clusters_min);
        read(b, "clusters_max", "scene", cfg.scene.clusters_max);
        read(b, "cluster_spread", "scene", cfg.scene.cluster_spread);
        read(b, "blob_r_near", "scene", cfg.scene.blob_r_near);
        read(b, "blob_r_far", "scene", cfg.scene.blob_r_far);
        read(b, "amp_min", "scene", cfg.scene.amp_min);
        read(b, "amp_max", "scene", cfg.scene.amp_max);
        read(b, "tint", "scene", cfg.scene.tint);
        read(b, "background", "scene", cfg.scene.background);
        read(b, "background_gradient", "scene", cfg.scene.background_gradient);
        read(b, "noise", "scene", cfg.scene.noise);
    }
    if (j.contains("augment")) {
        const json& b = j.at("augment");
        check_keys(b, "augment",
                   {"enabled", "scale_min", "scale_max", "crop_h", "crop_w", "gamma_min",
                    "gamma_max"});
        read(b, "enabled", "augment", cfg.augment.enabled);
        read(b, "scale_min", "augment", cfg.augment.scale_min);
        read(b, "scale_max", "augment", cfg.augment.scale_max);
        read(b, "crop_h", "augment", cfg.augment.crop_h);
        read(b, "crop_w", "augment", cfg.augment.crop_w);
        read(b, "gamma_min", "augment", cfg.augment.gamma_min);
        read(b, "gamma_max", "augment", cfg.augment.gamma_max);
    }
    if (j.contains("optim")) {
        const json& b = j.at("optim");
        check_keys(b, "optim", {"lr", "backbone_lr_scale", "batch_size"});
        read(b, "lr", "optim", cfg.optim.lr);
        read(b, "backbone_lr_scale", "optim", cfg.optim.backbone_lr_scale);
        read(b, "batch_size", "optim", cfg.optim.batch_size);
    }
    if (j.contains("train")) {
        const json& b = j.at("train");
        check_keys(b, "train",
                   {"epochs", "train_scenes", "eval_scenes", "eval_every", "stop_at_train_mae",
                    "freeze_bn_tail"});
        read(b, "epochs", "train", cfg.train.epochs);
        read(b, "train_scenes", "train", cfg.train.train_scenes);
        read(b, "eval_scenes", "train", cfg.train.eval_scenes);
        read(b, "eval_every", "train", cfg.train.eval_every);
        read(b, "stop_at_train_mae", "train", cfg.train.stop_at_train_mae);
        read(b, "freeze_bn_tail", "train", cfg.train.freeze_bn_tail);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

void save_config(const std::string& path, const ExperimentConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw ConfigError("config: cannot write '" + path + "'");
    out << config_to_json(cfg).dump(2) << "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string dump = config_to_json(cfg).dump();
    unsigned long long h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace graphcount

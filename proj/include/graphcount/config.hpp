#pragma once

// Experiment configuration: one JSON document with explicit defaults.
// Unknown keys are rejected; missing keys fall back to the defaults.

#include <string>

#include <json.hpp>

#include "graphcount/losses.hpp"
#include "graphcount/model.hpp"
#include "graphcount/scenes.hpp"

namespace graphcount {

struct OptimConfig {
    double lr = 1e-4;
    double backbone_lr_scale = 0.1;  // backbone group trains at lr * scale
    int batch_size = 8;              // logical, via gradient accumulation
};

struct TrainConfig {
    int epochs = 50;
    int train_scenes = 10;
    int eval_scenes = 20;
    int eval_every = 10;             // epochs between train-MAE probes
    double stop_at_train_mae = 0.0;  // early stop threshold; 0 disables
    // last N epochs of the budget run with normalization statistics frozen
    // (eval-mode batchnorm), so the function being optimized is the one used
    // at inference; 0 disables
    int freeze_bn_tail = 0;
};

struct ExperimentConfig {
    unsigned long long seed = 1;
    ModelConfig model;
    LossConfig loss;
    SceneConfig scene;
    AugmentConfig augment;
    OptimConfig optim;
    TrainConfig train;

    void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::string& path);
void save_config(const std::string& path, const ExperimentConfig& cfg);

// FNV-1a over the canonical (sorted-key) serialization.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace graphcount

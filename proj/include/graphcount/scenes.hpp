#pragma once

// Deterministic synthetic crowd scenes: clustered individuals rendered as
// soft radial blobs whose radius shrinks toward the top of the image
// (near-large, far-small), with per-individual contrast and tint over a noisy
// background. Plus the training augmentations and the counting metrics.

#include <utility>
#include <vector>

#include "graphcount/density.hpp"
#include "graphcount/rng.hpp"
#include "graphcount/tensor.hpp"

namespace graphcount {

struct SceneConfig {
    int height = 128;
    int width = 128;
    int count_min = 5;
    int count_max = 80;
    int clusters_min = 2;
    int clusters_max = 5;
    double cluster_spread = 0.15;  // fraction of image width
    double blob_r_near = 4.0;      // blob radius at the bottom edge
    double blob_r_far = 1.5;       // blob radius at the top edge
    double amp_min = 0.35;
    double amp_max = 0.75;
    double tint = 0.15;            // per-channel amplitude jitter
    double background = 0.3;
    double background_gradient = 0.1;
    double noise = 0.04;
};

struct AugmentConfig {
    bool enabled = false;
    double scale_min = 0.7;
    double scale_max = 1.3;
    int crop_h = 64;
    int crop_w = 64;
    double gamma_min = 0.7;
    double gamma_max = 1.3;
};

struct Scene {
    Tensor image;  // [3, H, W] in [0,1]
    std::vector<Point> points;
    unsigned long long seed = 0;
};

Scene generate_scene(const SceneConfig& cfg, unsigned long long seed);

// scale (nearest resample) -> crop (dropping outside points) -> contrast
Scene augment(const Scene& scene, const AugmentConfig& cfg, Rng& rng);

// MAE = mean |error|; the second value is the crowd-counting "MSE",
// i.e. sqrt(mean error^2).
std::pair<double, double> mae_mse(const std::vector<double>& pred_counts,
                                  const std::vector<double>& gt_counts);

}  // namespace graphcount

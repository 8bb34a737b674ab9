#include "graphcount/scenes.hpp"

#include <algorithm>
#include <cmath>

#include "graphcount/error.hpp"

namespace graphcount {

namespace {

struct Blob {
    double x, y, r;
    double amp[3];
};

void validate(const SceneConfig& cfg) {
    if (cfg.height < 8 || cfg.width < 8)
        throw ConfigError("scene: image must be at least 8x8");
    if (cfg.count_min < 0 || cfg.count_max < cfg.count_min)
        throw ConfigError("scene: need 0 <= count_min <= count_max");
    if (cfg.clusters_min < 1 || cfg.clusters_max < cfg.clusters_min)
        throw ConfigError("scene: need 1 <= clusters_min <= clusters_max");
    if (cfg.blob_r_far < 1.0 || cfg.blob_r_near < 1.0)
        throw ConfigError("scene: blob radii must be >= 1 pixel");
}

}  // namespace

Scene generate_scene(const SceneConfig& cfg, unsigned long long seed) {
    validate(cfg);
    Rng rng(mix_seed(seed, 0x5ce11e5ULL, 1));
    const int h = cfg.height, w = cfg.width;
    const double margin = 1.5;

    const int count = cfg.count_min == cfg.count_max
                          ? cfg.count_min
                          : rng.uniform_int(cfg.count_min, cfg.count_max);
    const int n_clusters = cfg.clusters_min == cfg.clusters_max
                               ? cfg.clusters_min
                               : rng.uniform_int(cfg.clusters_min, cfg.clusters_max);
    std::vector<Point> centers;
    for (int c = 0; c < n_clusters; ++c)
        centers.push_back(Point{rng.uniform(margin, w - margin), rng.uniform(margin, h - margin)});

    Scene scene;
    scene.seed = seed;
    const double spread = cfg.cluster_spread * w;
    std::vector<Blob> blobs;
    for (int i = 0; i < count; ++i) {
        const Point& c = centers[static_cast<std::size_t>(rng.uniform_int(0, n_clusters - 1))];
        const double x = std::clamp(c.x + rng.normal() * spread, margin, w - margin);
        const double y = std::clamp(c.y + rng.normal() * spread, margin, h - margin);
        scene.points.push_back(Point{x, y});
        Blob b;
        b.x = x;
        b.y = y;
        b.r = cfg.blob_r_far + (cfg.blob_r_near - cfg.blob_r_far) * (y / h);
        const double base_amp = rng.uniform(cfg.amp_min, cfg.amp_max);
        for (int ch = 0; ch < 3; ++ch)
            b.amp[ch] = base_amp * rng.uniform(1.0 - cfg.tint, 1.0 + cfg.tint);
        blobs.push_back(b);
    }

    // Noise is drawn serially in pixel order so the scene is identical for any
    // thread count; the per-pixel blob gather below is then order-fixed too.
    std::vector<double> noise(static_cast<std::size_t>(h) * w);
    for (double& v : noise) v = rng.uniform(-1.0, 1.0) * cfg.noise;

    scene.image = Tensor::zeros({3, h, w});
    double* img = scene.image.data();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t at = static_cast<std::size_t>(y) * w + x;
            const double base =
                cfg.background + cfg.background_gradient * (static_cast<double>(y) / h) + noise[at];
            double v[3] = {base, base, base};
            const double px = x + 0.5, py = y + 0.5;
            for (const Blob& b : blobs) {
                const double dx = px - b.x, dy = py - b.y;
                const double d2 = dx * dx + dy * dy;
                const double cutoff = 2.0 * b.r;
                if (d2 > cutoff * cutoff) continue;
                const double sigma = 0.5 * b.r;
                const double g = std::exp(-d2 / (2.0 * sigma * sigma));
                for (int ch = 0; ch < 3; ++ch) v[ch] += b.amp[ch] * g;
            }
            for (int ch = 0; ch < 3; ++ch)
                img[ch * plane + at] = std::clamp(v[ch], 0.0, 1.0);
        }
    }
    return scene;
}

Scene augment(const Scene& scene, const AugmentConfig& cfg, Rng& rng) {
    const int h = scene.image.dim(1), w = scene.image.dim(2);
    if (cfg.scale_min <= 0.0 || cfg.scale_max < cfg.scale_min)
        throw ConfigError("augment: need 0 < scale_min <= scale_max");
    if (cfg.crop_h < 8 || cfg.crop_w < 8)
        throw ConfigError("augment: crop must be at least 8x8");
    const int min_h = static_cast<int>(std::floor(h * cfg.scale_min));
    const int min_w = static_cast<int>(std::floor(w * cfg.scale_min));
    if (cfg.crop_h > min_h || cfg.crop_w > min_w)
        throw ConfigError("augment: crop " + std::to_string(cfg.crop_h) + "x" +
                          std::to_string(cfg.crop_w) + " can exceed the scaled image (min " +
                          std::to_string(min_h) + "x" + std::to_string(min_w) + ")");

    const double f = rng.uniform(cfg.scale_min, cfg.scale_max);
    const int sh = static_cast<int>(std::lround(h * f));
    const int sw = static_cast<int>(std::lround(w * f));
    const double fy = static_cast<double>(sh) / h;
    const double fx = static_cast<double>(sw) / w;

    Tensor scaled = Tensor::zeros({3, sh, sw});
    const std::size_t splane = static_cast<std::size_t>(sh) * sw;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int y = 0; y < sh; ++y) {
        const int yi = std::min(h - 1, static_cast<int>(y / fy));
        for (int x = 0; x < sw; ++x) {
            const int xi = std::min(w - 1, static_cast<int>(x / fx));
            for (int ch = 0; ch < 3; ++ch)
                scaled.data()[ch * splane + static_cast<std::size_t>(y) * sw + x] =
                    scene.image.data()[ch * plane + static_cast<std::size_t>(yi) * w + xi];
        }
    }

    const int oy = sh == cfg.crop_h ? 0 : rng.uniform_int(0, sh - cfg.crop_h);
    const int ox = sw == cfg.crop_w ? 0 : rng.uniform_int(0, sw - cfg.crop_w);
    const double gamma = rng.uniform(cfg.gamma_min, cfg.gamma_max);

    Scene out;
    out.seed = scene.seed;
    out.image = Tensor::zeros({3, cfg.crop_h, cfg.crop_w});
    const std::size_t cplane = static_cast<std::size_t>(cfg.crop_h) * cfg.crop_w;
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < cfg.crop_h; ++y)
            for (int x = 0; x < cfg.crop_w; ++x) {
                const double v =
                    scaled.data()[ch * splane + static_cast<std::size_t>(y + oy) * sw + (x + ox)];
                out.image.data()[ch * cplane + static_cast<std::size_t>(y) * cfg.crop_w + x] =
                    std::clamp(gamma * (v - 0.5) + 0.5, 0.0, 1.0);
            }

    for (const Point& p : scene.points) {
        const double x = p.x * fx - ox;
        const double y = p.y * fy - oy;
        if (x >= 0.0 && x < cfg.crop_w && y >= 0.0 && y < cfg.crop_h)
            out.points.push_back(Point{x, y});
    }
    return out;
}

std::pair<double, double> mae_mse(const std::vector<double>& pred_counts,
                                  const std::vector<double>& gt_counts) {
    if (pred_counts.empty() || pred_counts.size() != gt_counts.size())
        throw UsageError("metrics: count lists must be nonempty and equal length");
    double abs_acc = 0.0, sq_acc = 0.0;
    for (std::size_t i = 0; i < pred_counts.size(); ++i) {
        const double e = pred_counts[i] - gt_counts[i];
        abs_acc += std::abs(e);
        sq_acc += e * e;
    }
    const double n = static_cast<double>(pred_counts.size());
    return {abs_acc / n, std::sqrt(sq_acc / n)};
}

}  // namespace graphcount

#pragma once

// File outputs: density maps as ASCII PGM (max-scaled) and raw CSV, scene
// images as binary PPM, point lists as CSV, and the parameter checkpoint
// (JSON header line + raw little-endian doubles).

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphcount/density.hpp"
#include "graphcount/nn.hpp"

namespace graphcount {

// map [1,H,W] or [H,W]; values scaled so the max maps to 255
void write_pgm(const std::string& path, const Tensor& map);

// image [3,H,W] with values in [0,1]
void write_ppm(const std::string& path, const Tensor& image);

// raw values, one CSV row per map row
void write_density_csv(const std::string& path, const Tensor& map);

// header "x,y,confidence"; confs may be empty for plain "x,y" files
void write_points_csv(const std::string& path, const std::vector<Point>& points,
                      const std::vector<double>& confs);

struct Checkpoint {
    std::string config_hash;
    nlohmann::json config;
    std::map<std::string, std::pair<Shape, std::vector<double>>> tensors;
};

void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const std::string& config_hash, const std::vector<NamedTensor>& tensors);

Checkpoint load_checkpoint(const std::string& path);

// copies checkpoint values into the named tensors; every name must be present
// with a matching shape
void apply_checkpoint(const Checkpoint& ckpt, const std::vector<NamedTensor>& tensors);

}  // namespace graphcount

#include "graphcount/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace graphcount {

namespace {

void open_or_throw(std::ofstream& out, const std::string& path) {
    if (!out) throw InputError("io: cannot write '" + path + "'");
}

}  // namespace

void write_pgm(const std::string& path, const Tensor& map) {
    int h, w;
    if (map.rank() == 3 && map.dim(0) == 1) {
        h = map.dim(1);
        w = map.dim(2);
    } else if (map.rank() == 2) {
        h = map.dim(0);
        w = map.dim(1);
    } else {
        throw ShapeError("pgm: expected [1,H,W] or [H,W], got " + shape_str(map.shape()));
    }
    double mx = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i) mx = std::max(mx, map.data()[i]);
    const double scale = mx > 0.0 ? 255.0 / mx : 0.0;

    std::ofstream out(path);
    open_or_throw(out, path);
    out << "P2\n" << w << " " << h << "\n255\n";
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = map.data()[static_cast<std::size_t>(y) * w + x];
            const int g = std::clamp(static_cast<int>(std::lround(v * scale)), 0, 255);
            out << g << (x + 1 == w ? "" : " ");
        }
        out << "\n";
    }
}

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw ShapeError("ppm: expected [3,H,W], got " + shape_str(image.shape()));
    const int h = image.dim(1), w = image.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::ofstream out(path, std::ios::binary);
    open_or_throw(out, path);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                const double v = image.data()[ch * plane + static_cast<std::size_t>(y) * w + x];
                row[static_cast<std::size_t>(x) * 3 + ch] = static_cast<unsigned char>(
                    std::clamp(static_cast<int>(std::lround(v * 255.0)), 0, 255));
            }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

void write_density_csv(const std::string& path, const Tensor& map) {
    int h, w;
    if (map.rank() == 3 && map.dim(0) == 1) {
        h = map.dim(1);
        w = map.dim(2);
    } else if (map.rank() == 2) {
        h = map.dim(0);
        w = map.dim(1);
    } else {
        throw ShapeError("density csv: expected [1,H,W] or [H,W], got " + shape_str(map.shape()));
    }
    std::ofstream out(path);
    open_or_throw(out, path);
    out.precision(17);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            out << map.data()[static_cast<std::size_t>(y) * w + x] << (x + 1 == w ? "" : ",");
        out << "\n";
    }
}

void write_points_csv(const std::string& path, const std::vector<Point>& points,
                      const std::vector<double>& confs) {
    if (!confs.empty() && confs.size() != points.size())
        throw UsageError("points csv: confidence list length mismatch");
    std::ofstream out(path);
    open_or_throw(out, path);
    out.precision(17);
    out << (confs.empty() ? "x,y" : "x,y,confidence") << "\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        out << points[i].x << "," << points[i].y;
        if (!confs.empty()) out << "," << confs[i];
        out << "\n";
    }
}

void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const std::string& config_hash, const std::vector<NamedTensor>& tensors) {
    nlohmann::json header;
    header["magic"] = "graphcount-checkpoint";
    header["version"] = 1;
    header["config_hash"] = config_hash;
    header["config"] = config;
    nlohmann::json list = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : tensors) {
        list.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.size();
    }
    header["tensors"] = list;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("checkpoint: cannot write '" + path + "'");
    out << header.dump() << "\n";
    for (const auto& [name, t] : tensors)
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!out) throw CheckpointError("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open '" + path + "'");
    std::string header_line;
    if (!std::getline(in, header_line))
        throw CheckpointError("checkpoint: missing header in '" + path + "'");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("checkpoint: bad header in '" + path + "': " + e.what());
    }
    if (!header.contains("magic") || header["magic"] != "graphcount-checkpoint")
        throw CheckpointError("checkpoint: '" + path + "' is not a checkpoint file");

    Checkpoint ckpt;
    try {
        ckpt.config_hash = header.at("config_hash").get<std::string>();
        ckpt.config = header.at("config");
        std::vector<std::pair<std::string, std::pair<Shape, std::size_t>>> entries;
        for (const auto& e : header.at("tensors"))
            entries.push_back({e.at("name").get<std::string>(),
                               {e.at("shape").get<Shape>(), e.at("offset").get<std::size_t>()}});
        for (auto& [name, sh_off] : entries) {
            const std::size_t numel = shape_numel(sh_off.first);
            std::vector<double> data(numel);
            in.seekg(static_cast<std::streamoff>(header_line.size() + 1 +
                                                 sh_off.second * sizeof(double)));
            in.read(reinterpret_cast<char*>(data.data()),
                    static_cast<std::streamsize>(numel * sizeof(double)));
            if (!in)
                throw CheckpointError("checkpoint: truncated data for tensor '" + name + "'");
            ckpt.tensors[name] = {sh_off.first, std::move(data)};
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("checkpoint: malformed header in '" + path + "': " + e.what());
    }
    return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, const std::vector<NamedTensor>& tensors) {
    for (const auto& [name, t] : tensors) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end())
            throw CheckpointError("checkpoint: missing tensor '" + name + "'");
        if (it->second.first != t.shape())
            throw CheckpointError("checkpoint: tensor '" + name + "' has shape " +
                                  shape_str(it->second.first) + ", model expects " +
                                  shape_str(t.shape()));
        Tensor dst = t;  // shares storage
        std::copy(it->second.second.begin(), it->second.second.end(), dst.data());
    }
}

}  // namespace graphcount

#include "relight/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "relight/errors.hpp"
#include "relight/image_io.hpp"

namespace relight {

namespace {

// Bilinear upsample of a g x g control grid to size x size.
Tensor upsample_grid(const Tensor& grid, int size) {
    const int g = grid.dim(0);
    Tensor out = Tensor::zeros({size, size, 1});
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            const double fy = (i + 0.5) / size * (g - 1);
            const double fx = (j + 0.5) / size * (g - 1);
            const int y0 = std::clamp(static_cast<int>(fy), 0, g - 2);
            const int x0 = std::clamp(static_cast<int>(fx), 0, g - 2);
            const double ty = fy - y0, tx = fx - x0;
            out.at(i, j, 0) = (1 - ty) * ((1 - tx) * grid.at(y0, x0, 0) + tx * grid.at(y0, x0 + 1, 0)) +
                              ty * ((1 - tx) * grid.at(y0 + 1, x0, 0) + tx * grid.at(y0 + 1, x0 + 1, 0));
        }
    return out;
}

Tensor random_grid(int g, double lo, double hi, Rng& rng) {
    Tensor grid = Tensor::zeros({g, g, 1});
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = rng.uniform(lo, hi);
    return grid;
}

}  // namespace

PairSet make_synthetic_pairs(const SyntheticConfig& cfg) {
    if (cfg.count < 1 || cfg.size < 8) throw DataError("synthetic config needs count>=1, size>=8");
    PairSet out;
    Rng rng(cfg.seed);
    for (int n = 0; n < cfg.count; ++n) {
        // Reflectance: per-channel smooth blobs plus fine texture noise.
        Tensor reflectance = Tensor::zeros({cfg.size, cfg.size, 3});
        for (int c = 0; c < 3; ++c) {
            Tensor coarse = upsample_grid(random_grid(4, 0.15, 0.95, rng), cfg.size);
            for (int i = 0; i < cfg.size; ++i)
                for (int j = 0; j < cfg.size; ++j) {
                    const double v = coarse.at(i, j, 0) + rng.uniform(-0.04, 0.04);
                    reflectance.at(i, j, c) = std::clamp(v, 0.05, 1.0);
                }
        }
        Tensor illum_low = upsample_grid(random_grid(2, cfg.low_illum_min, cfg.low_illum_max, rng),
                                         cfg.size);
        Tensor illum_normal = upsample_grid(
            random_grid(2, cfg.normal_illum_min, cfg.normal_illum_max, rng), cfg.size);

        ImagePair pair;
        pair.scene_id = "toy" + std::string(n < 10 ? "0" : "") + std::to_string(n);
        pair.low.data = Tensor::zeros({cfg.size, cfg.size, 3});
        pair.normal.data = Tensor::zeros({cfg.size, cfg.size, 3});
        for (int i = 0; i < cfg.size; ++i)
            for (int j = 0; j < cfg.size; ++j)
                for (int c = 0; c < 3; ++c) {
                    const double r = reflectance.at(i, j, c);
                    pair.low.data.at(i, j, c) = std::clamp(r * illum_low.at(i, j, 0), 0.0, 1.0);
                    pair.normal.data.at(i, j, c) =
                        std::clamp(r * illum_normal.at(i, j, 0), 0.0, 1.0);
                }
        out.push_back(std::move(pair));
    }
    return out;
}

void write_pair_pngs(const PairSet& pairs, const std::string& root) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(root) / "low", ec);
    fs::create_directories(fs::path(root) / "high", ec);
    if (ec) throw IoError("cannot create dataset directories under '" + root + "'");
    for (const auto& p : pairs) {
        write_png((fs::path(root) / "low" / (p.scene_id + ".png")).string(), p.low);
        write_png((fs::path(root) / "high" / (p.scene_id + ".png")).string(), p.normal);
    }
}

}  // namespace relight

#pragma once

#include <array>
#include <string>
#include <vector>

#include "relight/dataset.hpp"
#include "relight/decomposer.hpp"
#include "relight/refiner.hpp"

namespace relight {

// Peak signal-to-noise ratio against peak 1.0, capped at 99.0 dB so
// identical images stay finite and sortable.
double psnr(const PixelImage& a, const PixelImage& b);

// Mean structural similarity: 11x11 Gaussian window (sigma 1.5), valid
// windows only, averaged over the three channels. Requires min(H,W) >= 11.
double ssim(const PixelImage& a, const PixelImage& b);

// Cross-synthesis consistency check: decompose both exposures, rebuild all
// four (R_i, L_j) combinations, and score each against the exposure whose L
// component it uses.
struct SwapResult {
    // Indices: 0 = (R_l,L_l), 1 = (R_l,L_n), 2 = (R_n,L_l), 3 = (R_n,L_n).
    std::array<double, 4> psnr_db{};
    std::array<std::string, 4> combo{};
    std::array<std::string, 4> target{};

    double psnr_ll() const { return psnr_db[0]; }
    double psnr_ln() const { return psnr_db[1]; }
    double psnr_nl() const { return psnr_db[2]; }
    double psnr_nn() const { return psnr_db[3]; }
    double mean_psnr() const {
        return (psnr_db[0] + psnr_db[1] + psnr_db[2] + psnr_db[3]) / 4.0;
    }
};

SwapResult swap_protocol(const ImagePair& pair, const Decomposer& w);

struct MetricReport {
    struct Row {
        std::string scene_id;
        double psnr = 0.0;
        double ssim = 0.0;
    };
    std::vector<Row> per_image;
    double mean_psnr = 0.0, std_psnr = 0.0;
    double mean_ssim = 0.0, std_ssim = 0.0;
};

// Runs the full enhancement pipeline over every pair and scores against the
// normal exposure.
MetricReport eval_dataset(const PairSet& pairs, const Decomposer& dw, const Refiner& rw);

}  // namespace relight

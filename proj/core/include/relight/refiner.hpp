#pragma once

#include <array>
#include <string>
#include <vector>

#include "relight/decomposer.hpp"
#include "relight/imaging.hpp"
#include "relight/nn.hpp"

namespace relight {

struct RefinerConfig {
    int channels = 8;  // component width at the outer scale; doubles per scale
    int heads = 2;
    int ffn_expansion = 2;
    std::array<int, 3> blocks_per_scale{1, 2, 2};
    nn::GftbFusion fusion = nn::GftbFusion::cross;
};

// One component branch of the refiner: a three-scale U. Guidance is the raw
// single-channel map, pooled once per scale (average for the reflectance
// branch, max for the illumination branch) and projected inside each block.
class RefinerBranch {
public:
    RefinerConfig cfg;
    GuidanceKind expected_guidance = GuidanceKind::mean;
    bool max_pool_guidance = false;

    std::vector<nn::Gftb> enc0, enc1, bottleneck, dec1, dec0;
    nn::Conv2d down0, down1;            // 4x4 stride 2, channel doubling
    nn::ConvTranspose2d up1, up0;       // 2x2 stride 2, channel halving
    nn::Conv2d fuse1, fuse0;            // 1x1 skip fusion after concat
    nn::Conv2d head;                    // 3x3, zero-init residual output

    static RefinerBranch make(const RefinerConfig& cfg, GuidanceKind expected,
                              bool max_pool_guidance);
    void init(Rng& rng);
    void register_params(nn::ParamRegistry& reg);

    // guidance: (H,W,1), spatially aligned with x; H and W divisible by 4.
    ag::Var forward(ag::Tape& t, ag::Var x, const Tensor& guidance,
                    nn::GftbProbe* probe = nullptr) const;
};

// Both branches; no shared parameters.
struct Refiner {
    RefinerBranch r_branch;  // guided by the channel-mean map
    RefinerBranch l_branch;  // guided by the channel-max map

    static Refiner make(const RefinerConfig& cfg);
    void init(Rng& rng);
};

// Residual refinement of one component. The guidance kind must match the
// branch (mean for R, max for L).
Tensor refine_component(const Tensor& x, const GuidanceMap& g, const RefinerBranch& branch);

// Full inference pipeline: offset-log transform, frozen decomposition,
// per-component refinement under its guidance map, reconstruction, inverse
// transform. Inputs of any size are handled by replicate-padding to a
// multiple of 4 and cropping back.
PixelImage enhance(const PixelImage& i_low, const Decomposer& dw, const Refiner& rw);

}  // namespace relight

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "relight/imaging.hpp"
#include "relight/nn.hpp"

namespace relight {

// Decomposition strategies: the shipped design plus the ablation variants it
// is measured against.
enum class Strategy {
    full,                // additive, latent space, offset-log domain
    v0_pixel_mult,       // classic Retinex: pixel-space R (3ch) x L (1ch), clipped
    v1_latent_mult,      // multiplicative in latent space, no log transform
    v2_latent_add_nolog, // additive in latent space, no log transform
    v3_rgb_add_log,      // additive directly in 3-channel log space
};

enum class CombineRule { additive, multiplicative };
enum class ComponentSpace { latent, pixel };

struct StrategyTraits {
    CombineRule combine;
    ComponentSpace space;
    bool log_domain;        // network input is ln(1+I) instead of I
    bool clip_components;   // clamp R and L to [0,1] at the branch outputs
    bool recon_conv;        // reconstruction applies a 3x3 conv after combining

    int r_channels(int latent_c) const { return space == ComponentSpace::latent ? latent_c : 3; }
    int l_channels(int latent_c) const;
};

StrategyTraits strategy_traits(Strategy s);
Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);
const std::vector<Strategy>& all_strategies();

// Output of decompose(); strategy fixes the component shapes.
struct LatentComponents {
    Tensor r;
    Tensor l;
    Strategy strategy = Strategy::full;
};

struct DecomposerConfig {
    Strategy strategy = Strategy::full;
    int channels = 8;       // latent width C
    int heads = 2;
    int block_depth = 1;    // transformer blocks per branch
    int ffn_expansion = 2;
};

// Dual-branch decomposition network: a 3x3 conv fuses the domain image with
// its illumination prior, one transformer stack per branch splits the shared
// feature into R and L, and (for latent strategies) a 3x3 conv maps the
// combined components back to 3 channels.
class Decomposer {
public:
    DecomposerConfig cfg;
    nn::Conv2d input_proj;               // 3x3, 4 -> C
    std::vector<nn::Gftb> blocks_r;
    std::vector<nn::Gftb> blocks_l;
    nn::Conv2d head_r, head_l;           // pixel-space strategies only
    nn::Conv2d recon_proj;               // latent strategies only, 3x3 C -> 3

    static Decomposer make(const DecomposerConfig& cfg);
    void init(Rng& rng);
    void register_params(nn::ParamRegistry& reg);

    // Tape-level forms used by training; the free functions below wrap them
    // for inference.
    std::pair<ag::Var, ag::Var> decompose_t(ag::Tape& t, ag::Var s, ag::Var p) const;
    ag::Var reconstruct_t(ag::Tape& t, ag::Var r, ag::Var l) const;
};

// Network input for the strategy: offset-log image or raw pixels.
Tensor domain_forward(const PixelImage& img, Strategy strat);
// Maps a reconstruction in the strategy's domain back to clamped pixels.
PixelImage domain_inverse(const Tensor& recon, Strategy strat);
// Illumination prior over whichever domain the strategy uses.
GuidanceMap domain_prior(const Tensor& domain_img);

LatentComponents decompose(const Tensor& s, const GuidanceMap& p, const Decomposer& w);
Tensor reconstruct(const LatentComponents& c, const Decomposer& w);
PixelImage reconstruct_pixels(const LatentComponents& c, const Decomposer& w);

// Analytic vs finite-difference partials of the combine rule at a point.
// Both partials are shaped like R; for the broadcast L of v0_pixel_mult,
// entry (i,j,c) holds the partial w.r.t. the single L element under it.
struct JacobianReport {
    Tensor analytic_dr, analytic_dl;
    Tensor fd_dr, fd_dl;
    double max_rel_discrepancy = 0.0;
};

JacobianReport jacobian_diagnostic(Strategy strat, const LatentComponents& point);

}  // namespace relight

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "relight/autograd.hpp"
#include "relight/rng.hpp"

namespace relight::nn {

using ag::Param;
using ag::Tape;
using ag::Var;

// Flat view over a module's parameters in registration order. Registration
// order is fixed by construction, so optimizers and checkpoints agree on it.
class ParamRegistry {
public:
    void add(const std::string& name, Param& p) {
        p.name = name;
        entries_.emplace_back(name, &p);
    }
    const std::vector<std::pair<std::string, Param*>>& entries() const { return entries_; }
    Param* find(const std::string& name) const;
    std::size_t total_elements() const;
    void zero_grads() const;

private:
    std::vector<std::pair<std::string, Param*>> entries_;
};

constexpr double kInitStddev = 0.02;

struct Conv2d {
    int kh = 3, kw = 3, ci = 1, co = 1, stride = 1, pad = 1;
    bool has_bias = true;
    Param w, b;

    static Conv2d make(int kh, int kw, int ci, int co, int stride, int pad, bool bias = true);
    void init(Rng& rng);
    void init_zero();
    void register_params(ParamRegistry& reg, const std::string& prefix);
    Var forward(Tape& t, Var x) const;
};

struct ConvTranspose2d {
    int k = 2, ci = 1, co = 1, stride = 2;
    Param w, b;

    static ConvTranspose2d make(int k, int ci, int co, int stride);
    void init(Rng& rng);
    void register_params(ParamRegistry& reg, const std::string& prefix);
    Var forward(Tape& t, Var x) const;
};

// Gated pointwise feed-forward: gelu(gate) * value -> projection.
struct GatedFfn {
    int channels = 0, hidden = 0;
    Conv2d conv_in;   // C -> 2*hidden
    Conv2d conv_out;  // hidden -> C

    static GatedFfn make(int channels, int expansion);
    void init(Rng& rng);
    void register_params(ParamRegistry& reg, const std::string& prefix);
    Var forward(Tape& t, Var x) const;
};

// Test/diagnostic hooks threaded through GFTB forwards.
struct GftbProbe {
    bool zero_guidance = false;           // force the guidance branch output to zero
    std::vector<Tensor>* attn = nullptr;  // collects row-stochastic attention matrices
    Tensor* attn_stage = nullptr;         // combined attention output, pre-residual
};

enum class GftbFusion {
    cross,      // guidance query cross-attention (full design)
    self_only,  // no guidance branch
    mul_v,      // guidance feature gates V elementwise
    mul_fin,    // guidance feature gates f_in elementwise
};

GftbFusion fusion_from_string(const std::string& s);
std::string to_string(GftbFusion f);

// Transposed (channel) attention block with an optional guidance branch.
// Attention operates on the CxC channel-similarity matrix: Q,K are
// L2-normalized along the token axis, A = softmax((Q^T K) / alpha) row-wise,
// and each output channel is the A-weighted mixture of value channels.
struct Gftb {
    int channels = 0, heads = 1;
    GftbFusion fusion = GftbFusion::cross;
    Conv2d wq, wk, wv;            // 1x1, no bias
    std::vector<Param> alpha_m;   // per-head temperature, init sqrt(C/heads)
    Conv2d guide_proj;            // 3x3, 1 -> C (guidance modes only)
    Conv2d wg;                    // 1x1, no bias (cross mode only)
    std::vector<Param> alpha_g;   // per-head temperature (cross mode only)
    GatedFfn ffn;
    Param pos_w, pos_b;           // depthwise 3x3 positional term

    static Gftb make(int channels, int heads, GftbFusion fusion, int ffn_expansion);
    void init(Rng& rng);
    void register_params(ParamRegistry& reg, const std::string& prefix);
    bool uses_guidance() const { return fusion != GftbFusion::self_only; }

    // guidance must be a spatially aligned (H,W,1) map for guidance modes;
    // pass an invalid Var for self_only.
    Var forward(Tape& t, Var f_in, Var guidance, GftbProbe* probe = nullptr) const;
};

// Multi-head channel attention core shared by both GFTB branches.
Var channel_attention(Tape& t, Var q_map, Var k_map, Var v_map, const std::vector<Param>& alpha,
                      int heads, const std::string& layer_name,
                      std::vector<Tensor>* attn_out = nullptr);

}  // namespace relight::nn

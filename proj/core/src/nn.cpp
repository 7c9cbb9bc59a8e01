#include "relight/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "relight/errors.hpp"

namespace relight::nn {

Param* ParamRegistry::find(const std::string& name) const {
    for (const auto& [n, p] : entries_)
        if (n == name) return p;
    return nullptr;
}

std::size_t ParamRegistry::total_elements() const {
    std::size_t n = 0;
    for (const auto& [name, p] : entries_) n += p->value.size();
    return n;
}

void ParamRegistry::zero_grads() const {
    for (const auto& [name, p] : entries_) p->zero_grad();
}

namespace {

void fill_truncated_normal(Tensor& t, Rng& rng) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.truncated_normal(kInitStddev);
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d Conv2d::make(int kh, int kw, int ci, int co, int stride, int pad, bool bias) {
    Conv2d c;
    c.kh = kh;
    c.kw = kw;
    c.ci = ci;
    c.co = co;
    c.stride = stride;
    c.pad = pad;
    c.has_bias = bias;
    c.w = Param(Tensor::zeros({kh, kw, ci, co}));
    if (bias) c.b = Param(Tensor::zeros({co}));
    return c;
}

void Conv2d::init(Rng& rng) { fill_truncated_normal(w.value, rng); }

void Conv2d::init_zero() {
    std::fill(w.value.values().begin(), w.value.values().end(), 0.0);
    if (has_bias) std::fill(b.value.values().begin(), b.value.values().end(), 0.0);
}

void Conv2d::register_params(ParamRegistry& reg, const std::string& prefix) {
    reg.add(prefix + ".w", w);
    if (has_bias) reg.add(prefix + ".b", b);
}

Var Conv2d::forward(Tape& t, Var x) const {
    Var bias = has_bias ? t.param(b) : Var{};
    return ag::conv2d(x, t.param(w), bias, stride, pad);
}

// ---------------------------------------------------------------- ConvTranspose2d

ConvTranspose2d ConvTranspose2d::make(int k, int ci, int co, int stride) {
    ConvTranspose2d c;
    c.k = k;
    c.ci = ci;
    c.co = co;
    c.stride = stride;
    c.w = Param(Tensor::zeros({k, k, ci, co}));
    c.b = Param(Tensor::zeros({co}));
    return c;
}

void ConvTranspose2d::init(Rng& rng) { fill_truncated_normal(w.value, rng); }

void ConvTranspose2d::register_params(ParamRegistry& reg, const std::string& prefix) {
    reg.add(prefix + ".w", w);
    reg.add(prefix + ".b", b);
}

Var ConvTranspose2d::forward(Tape& t, Var x) const {
    return ag::conv2d_transpose(x, t.param(w), t.param(b), stride);
}

// ---------------------------------------------------------------- GatedFfn

GatedFfn GatedFfn::make(int channels, int expansion) {
    GatedFfn f;
    f.channels = channels;
    f.hidden = channels * expansion;
    f.conv_in = Conv2d::make(1, 1, channels, 2 * f.hidden, 1, 0, true);
    f.conv_out = Conv2d::make(1, 1, f.hidden, channels, 1, 0, true);
    return f;
}

void GatedFfn::init(Rng& rng) {
    conv_in.init(rng);
    conv_out.init(rng);
}

void GatedFfn::register_params(ParamRegistry& reg, const std::string& prefix) {
    conv_in.register_params(reg, prefix + ".in");
    conv_out.register_params(reg, prefix + ".out");
}

Var GatedFfn::forward(Tape& t, Var x) const {
    Var both = conv_in.forward(t, x);
    Var gate = ag::slice_c(both, 0, hidden);
    Var value = ag::slice_c(both, hidden, hidden);
    return conv_out.forward(t, ag::mul(ag::gelu(gate), value));
}

// ---------------------------------------------------------------- attention

Var channel_attention(Tape& t, Var q_map, Var k_map, Var v_map, const std::vector<Param>& alpha,
                      int heads, const std::string& layer_name,
                      std::vector<Tensor>* attn_out) {
    const int h = k_map.val().dim(0), w = k_map.val().dim(1), c = k_map.val().dim(2);
    if (c % heads != 0) throw std::invalid_argument("channel_attention: C % heads != 0");
    const int d = c / heads;
    Var out{};
    for (int hd = 0; hd < heads; ++hd) {
        Var q = ag::tokens(ag::slice_c(q_map, hd * d, d));
        Var k = ag::tokens(ag::slice_c(k_map, hd * d, d));
        Var v = ag::tokens(ag::slice_c(v_map, hd * d, d));
        Var logits = ag::matmul(ag::unit_columns(q), ag::unit_columns(k), true, false);
        Var scaled = ag::mul_scalar(logits, ag::recip(t.param(alpha[static_cast<std::size_t>(hd)])));
        if (!scaled.val().all_finite())
            throw NumericError("non-finite attention logits in layer " + layer_name);
        Var a = ag::softmax_rows(scaled);
        if (attn_out) attn_out->push_back(a.val());
        Var y = ag::matmul(v, a, false, true);
        Var y_map = ag::map_from_tokens(y, h, w);
        out = out.valid() ? ag::concat_c(out, y_map) : y_map;
    }
    return out;
}

// ---------------------------------------------------------------- Gftb

GftbFusion fusion_from_string(const std::string& s) {
    if (s == "cross") return GftbFusion::cross;
    if (s == "self_only") return GftbFusion::self_only;
    if (s == "mul_v") return GftbFusion::mul_v;
    if (s == "mul_fin") return GftbFusion::mul_fin;
    throw ConfigError("unknown gftb fusion mode '" + s +
                      "' (expected cross|self_only|mul_v|mul_fin)");
}

std::string to_string(GftbFusion f) {
    switch (f) {
        case GftbFusion::cross: return "cross";
        case GftbFusion::self_only: return "self_only";
        case GftbFusion::mul_v: return "mul_v";
        case GftbFusion::mul_fin: return "mul_fin";
    }
    return "cross";
}

Gftb Gftb::make(int channels, int heads, GftbFusion fusion, int ffn_expansion) {
    if (channels <= 0 || heads <= 0 || channels % heads != 0)
        throw ConfigError("gftb channels (" + std::to_string(channels) +
                          ") must be a positive multiple of heads (" + std::to_string(heads) + ")");
    Gftb g;
    g.channels = channels;
    g.heads = heads;
    g.fusion = fusion;
    g.wq = Conv2d::make(1, 1, channels, channels, 1, 0, false);
    g.wk = Conv2d::make(1, 1, channels, channels, 1, 0, false);
    g.wv = Conv2d::make(1, 1, channels, channels, 1, 0, false);
    const double a0 = std::sqrt(static_cast<double>(channels) / heads);
    for (int i = 0; i < heads; ++i) g.alpha_m.emplace_back(Tensor::scalar(a0));
    if (fusion != GftbFusion::self_only) g.guide_proj = Conv2d::make(3, 3, 1, channels, 1, 1, true);
    if (fusion == GftbFusion::cross) {
        g.wg = Conv2d::make(1, 1, channels, channels, 1, 0, false);
        for (int i = 0; i < heads; ++i) g.alpha_g.emplace_back(Tensor::scalar(a0));
    }
    g.ffn = GatedFfn::make(channels, ffn_expansion);
    g.pos_w = Param(Tensor::zeros({3, 3, channels}));
    g.pos_b = Param(Tensor::zeros({channels}));
    return g;
}

void Gftb::init(Rng& rng) {
    wq.init(rng);
    wk.init(rng);
    wv.init(rng);
    if (uses_guidance()) guide_proj.init(rng);
    if (fusion == GftbFusion::cross) wg.init(rng);
    ffn.init(rng);
    fill_truncated_normal(pos_w.value, rng);
}

void Gftb::register_params(ParamRegistry& reg, const std::string& prefix) {
    wq.register_params(reg, prefix + ".wq");
    wk.register_params(reg, prefix + ".wk");
    wv.register_params(reg, prefix + ".wv");
    for (std::size_t i = 0; i < alpha_m.size(); ++i)
        reg.add(prefix + ".alpha_m." + std::to_string(i), alpha_m[i]);
    if (uses_guidance()) guide_proj.register_params(reg, prefix + ".gproj");
    if (fusion == GftbFusion::cross) {
        wg.register_params(reg, prefix + ".wg");
        for (std::size_t i = 0; i < alpha_g.size(); ++i)
            reg.add(prefix + ".alpha_g." + std::to_string(i), alpha_g[i]);
    }
    ffn.register_params(reg, prefix + ".ffn");
    reg.add(prefix + ".pos.w", pos_w);
    reg.add(prefix + ".pos.b", pos_b);
}

Var Gftb::forward(Tape& t, Var f_in, Var guidance, GftbProbe* probe) const {
    const Tensor& x = f_in.val();
    if (x.rank() != 3 || x.dim(2) != channels)
        throw std::invalid_argument("gftb: input channels " + x.shape_str() + " != block C=" +
                                    std::to_string(channels));
    if (uses_guidance()) {
        if (!guidance.valid()) throw std::invalid_argument("gftb: guidance map required");
        const Tensor& g = guidance.val();
        if (g.rank() != 3 || g.dim(2) != 1 || g.dim(0) != x.dim(0) || g.dim(1) != x.dim(1))
            throw std::invalid_argument("gftb: guidance map " + g.shape_str() +
                                        " not aligned with input " + x.shape_str());
    }

    Var k = wk.forward(t, f_in);
    Var v = wv.forward(t, f_in);
    Var qm = wq.forward(t, f_in);
    std::vector<Tensor>* attn = probe ? probe->attn : nullptr;
    Var y = channel_attention(t, qm, k, v, alpha_m, heads, "self_attention", attn);

    const bool guidance_zeroed = probe && probe->zero_guidance;
    if (uses_guidance() && !guidance_zeroed) {
        Var gfeat = guide_proj.forward(t, guidance);
        Var yg{};
        switch (fusion) {
            case GftbFusion::cross: {
                Var qg = wg.forward(t, gfeat);
                yg = channel_attention(t, qg, k, v, alpha_g, heads, "guidance_attention", attn);
                break;
            }
            case GftbFusion::mul_v:
                yg = ag::mul(gfeat, v);
                break;
            case GftbFusion::mul_fin:
                yg = ag::mul(gfeat, f_in);
                break;
            default:
                break;
        }
        if (yg.valid()) y = ag::add(y, yg);
    }
    if (probe && probe->attn_stage) *probe->attn_stage = y.val();

    Var f1 = ag::add(f_in, y);
    Var f2 = ag::add(f1, ffn.forward(t, f1));
    return ag::add(f2, ag::dwconv3x3(f2, t.param(pos_w), t.param(pos_b)));
}

}  // namespace relight::nn

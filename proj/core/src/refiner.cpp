#include "relight/refiner.hpp"

#include <stdexcept>

#include "relight/errors.hpp"

namespace relight {

namespace {

std::vector<nn::Gftb> make_stack(int count, int channels, const RefinerConfig& cfg) {
    std::vector<nn::Gftb> out;
    for (int i = 0; i < count; ++i)
        out.push_back(nn::Gftb::make(channels, cfg.heads, cfg.fusion, cfg.ffn_expansion));
    return out;
}

void init_stack(std::vector<nn::Gftb>& stack, Rng& rng) {
    for (auto& b : stack) b.init(rng);
}

void register_stack(std::vector<nn::Gftb>& stack, nn::ParamRegistry& reg,
                    const std::string& prefix) {
    for (std::size_t i = 0; i < stack.size(); ++i)
        stack[i].register_params(reg, prefix + ".block" + std::to_string(i));
}

ag::Var run_stack(const std::vector<nn::Gftb>& stack, ag::Tape& t, ag::Var x, ag::Var g,
                  nn::GftbProbe* probe) {
    for (const auto& b : stack) x = b.forward(t, x, g, probe);
    return x;
}

}  // namespace

RefinerBranch RefinerBranch::make(const RefinerConfig& cfg, GuidanceKind expected,
                                  bool max_pool_guidance) {
    const int c = cfg.channels;
    if (c < 1 || cfg.heads < 1 || c % cfg.heads != 0)
        throw ConfigError("refiner channels must be a positive multiple of heads");
    RefinerBranch b;
    b.cfg = cfg;
    b.expected_guidance = expected;
    b.max_pool_guidance = max_pool_guidance;
    b.enc0 = make_stack(cfg.blocks_per_scale[0], c, cfg);
    b.enc1 = make_stack(cfg.blocks_per_scale[1], 2 * c, cfg);
    b.bottleneck = make_stack(cfg.blocks_per_scale[2], 4 * c, cfg);
    b.dec1 = make_stack(cfg.blocks_per_scale[1], 2 * c, cfg);
    b.dec0 = make_stack(cfg.blocks_per_scale[0], c, cfg);
    b.down0 = nn::Conv2d::make(4, 4, c, 2 * c, 2, 1);
    b.down1 = nn::Conv2d::make(4, 4, 2 * c, 4 * c, 2, 1);
    b.up1 = nn::ConvTranspose2d::make(2, 4 * c, 2 * c, 2);
    b.up0 = nn::ConvTranspose2d::make(2, 2 * c, c, 2);
    b.fuse1 = nn::Conv2d::make(1, 1, 4 * c, 2 * c, 1, 0);
    b.fuse0 = nn::Conv2d::make(1, 1, 2 * c, c, 1, 0);
    b.head = nn::Conv2d::make(3, 3, c, c, 1, 1);
    return b;
}

void RefinerBranch::init(Rng& rng) {
    init_stack(enc0, rng);
    init_stack(enc1, rng);
    init_stack(bottleneck, rng);
    init_stack(dec1, rng);
    init_stack(dec0, rng);
    down0.init(rng);
    down1.init(rng);
    up1.init(rng);
    up0.init(rng);
    fuse1.init(rng);
    fuse0.init(rng);
    head.init_zero();  // the branch starts as the identity map
}

void RefinerBranch::register_params(nn::ParamRegistry& reg) {
    register_stack(enc0, reg, "enc0");
    down0.register_params(reg, "down0");
    register_stack(enc1, reg, "enc1");
    down1.register_params(reg, "down1");
    register_stack(bottleneck, reg, "bottleneck");
    up1.register_params(reg, "up1");
    fuse1.register_params(reg, "fuse1");
    register_stack(dec1, reg, "dec1");
    up0.register_params(reg, "up0");
    fuse0.register_params(reg, "fuse0");
    register_stack(dec0, reg, "dec0");
    head.register_params(reg, "head");
}

ag::Var RefinerBranch::forward(ag::Tape& t, ag::Var x, const Tensor& guidance,
                               nn::GftbProbe* probe) const {
    const Tensor& xv = x.val();
    if (xv.rank() != 3 || xv.dim(2) != cfg.channels)
        throw DataError("refiner branch expects (H,W," + std::to_string(cfg.channels) +
                        "), got " + xv.shape_str());
    if (xv.dim(0) % 4 != 0 || xv.dim(1) % 4 != 0)
        throw DataError("refiner input spatial dims must be divisible by 4, got " +
                        xv.shape_str());
    if (guidance.dim(0) != xv.dim(0) || guidance.dim(1) != xv.dim(1) || guidance.dim(2) != 1)
        throw DataError("guidance map " + guidance.shape_str() +
                        " is not aligned with refiner input " + xv.shape_str());

    const Tensor g0t = guidance;
    const Tensor g1t = max_pool_guidance ? pool_max2x2(g0t) : pool_avg2x2(g0t);
    const Tensor g2t = max_pool_guidance ? pool_max2x2(g1t) : pool_avg2x2(g1t);
    ag::Var g0 = t.constant(g0t), g1 = t.constant(g1t), g2 = t.constant(g2t);

    ag::Var e0 = run_stack(enc0, t, x, g0, probe);
    ag::Var e1 = run_stack(enc1, t, down0.forward(t, e0), g1, probe);
    ag::Var b = run_stack(bottleneck, t, down1.forward(t, e1), g2, probe);
    ag::Var d1 = fuse1.forward(t, ag::concat_c(up1.forward(t, b), e1));
    d1 = run_stack(dec1, t, d1, g1, probe);
    ag::Var d0 = fuse0.forward(t, ag::concat_c(up0.forward(t, d1), e0));
    d0 = run_stack(dec0, t, d0, g0, probe);
    return x + head.forward(t, d0);
}

Refiner Refiner::make(const RefinerConfig& cfg) {
    Refiner r;
    r.r_branch = RefinerBranch::make(cfg, GuidanceKind::mean, /*max_pool_guidance=*/false);
    r.l_branch = RefinerBranch::make(cfg, GuidanceKind::max, /*max_pool_guidance=*/true);
    return r;
}

void Refiner::init(Rng& rng) {
    r_branch.init(rng);
    l_branch.init(rng);
}

Tensor refine_component(const Tensor& x, const GuidanceMap& g, const RefinerBranch& branch) {
    if (g.kind != branch.expected_guidance)
        throw DataError("guidance kind " + to_string(g.kind) + " does not match this branch (" +
                        to_string(branch.expected_guidance) + ")");
    ag::Tape t(false);
    return branch.forward(t, t.constant(x), g.data).val();
}

PixelImage enhance(const PixelImage& i_low, const Decomposer& dw, const Refiner& rw) {
    if (dw.cfg.strategy != Strategy::full)
        throw DataError("enhancement is defined only for the full strategy, got " +
                        to_string(dw.cfg.strategy));

    const int h = i_low.height(), w = i_low.width();
    LogImage s = log_forward(i_low);
    Tensor sp = pad_replicate_to_multiple(s.data, 4);

    ag::Tape t(false);
    GuidanceMap prior;
    prior.data = channel_max(sp);
    auto [r, l] = dw.decompose_t(t, t.constant(sp), t.constant(prior.data));

    LogImage sp_log;
    sp_log.data = sp;
    GuidanceMap g_mean = guidance_mean(sp_log);
    GuidanceMap g_max = guidance_max(sp_log);

    ag::Var r_ref = rw.r_branch.forward(t, r, g_mean.data);
    ag::Var l_ref = rw.l_branch.forward(t, l, g_max.data);
    ag::Var s_en = dw.reconstruct_t(t, r_ref, l_ref);

    LogImage out;
    out.data = crop_topleft(s_en.val(), h, w);
    return log_inverse(out);
}

}  // namespace relight

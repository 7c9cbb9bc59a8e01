#include "relight/decomposer.hpp"

#include <cmath>
#include <stdexcept>

#include "relight/errors.hpp"

namespace relight {

int StrategyTraits::l_channels(int latent_c) const {
    if (space == ComponentSpace::latent) return latent_c;
    return combine == CombineRule::multiplicative ? 1 : 3;
}

StrategyTraits strategy_traits(Strategy s) {
    switch (s) {
        case Strategy::full:
            return {CombineRule::additive, ComponentSpace::latent, true, false, true};
        case Strategy::v0_pixel_mult:
            return {CombineRule::multiplicative, ComponentSpace::pixel, false, true, false};
        case Strategy::v1_latent_mult:
            return {CombineRule::multiplicative, ComponentSpace::latent, false, false, true};
        case Strategy::v2_latent_add_nolog:
            return {CombineRule::additive, ComponentSpace::latent, false, false, true};
        case Strategy::v3_rgb_add_log:
            return {CombineRule::additive, ComponentSpace::pixel, true, false, false};
    }
    throw std::invalid_argument("unknown strategy");
}

Strategy strategy_from_string(const std::string& s) {
    for (Strategy k : all_strategies())
        if (to_string(k) == s) return k;
    throw ConfigError("unknown strategy '" + s +
                      "' (expected one of: full, v0_pixel_mult, v1_latent_mult, "
                      "v2_latent_add_nolog, v3_rgb_add_log)");
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::full: return "full";
        case Strategy::v0_pixel_mult: return "v0_pixel_mult";
        case Strategy::v1_latent_mult: return "v1_latent_mult";
        case Strategy::v2_latent_add_nolog: return "v2_latent_add_nolog";
        case Strategy::v3_rgb_add_log: return "v3_rgb_add_log";
    }
    return "?";
}

const std::vector<Strategy>& all_strategies() {
    static const std::vector<Strategy> k = {Strategy::full, Strategy::v0_pixel_mult,
                                            Strategy::v1_latent_mult, Strategy::v2_latent_add_nolog,
                                            Strategy::v3_rgb_add_log};
    return k;
}

Decomposer Decomposer::make(const DecomposerConfig& cfg) {
    if (cfg.channels < 1 || cfg.heads < 1 || cfg.channels % cfg.heads != 0)
        throw ConfigError("decomposer channels must be a positive multiple of heads");
    const StrategyTraits tr = strategy_traits(cfg.strategy);
    Decomposer d;
    d.cfg = cfg;
    d.input_proj = nn::Conv2d::make(3, 3, 4, cfg.channels, 1, 1);
    for (int i = 0; i < cfg.block_depth; ++i) {
        d.blocks_r.push_back(
            nn::Gftb::make(cfg.channels, cfg.heads, nn::GftbFusion::self_only, cfg.ffn_expansion));
        d.blocks_l.push_back(
            nn::Gftb::make(cfg.channels, cfg.heads, nn::GftbFusion::self_only, cfg.ffn_expansion));
    }
    if (tr.space == ComponentSpace::pixel) {
        d.head_r = nn::Conv2d::make(3, 3, cfg.channels, tr.r_channels(cfg.channels), 1, 1);
        d.head_l = nn::Conv2d::make(3, 3, cfg.channels, tr.l_channels(cfg.channels), 1, 1);
    }
    if (tr.recon_conv) d.recon_proj = nn::Conv2d::make(3, 3, cfg.channels, 3, 1, 1);
    return d;
}

void Decomposer::init(Rng& rng) {
    const StrategyTraits tr = strategy_traits(cfg.strategy);
    input_proj.init(rng);
    for (auto& b : blocks_r) b.init(rng);
    for (auto& b : blocks_l) b.init(rng);
    if (tr.space == ComponentSpace::pixel) {
        head_r.init(rng);
        head_l.init(rng);
        if (tr.clip_components) {
            // Bias the clipped branches toward mid-range so training does not
            // start saturated at the clamp boundaries.
            for (std::size_t i = 0; i < head_r.b.value.size(); ++i) head_r.b.value[i] = 0.5;
            for (std::size_t i = 0; i < head_l.b.value.size(); ++i) head_l.b.value[i] = 0.5;
        }
    }
    if (tr.recon_conv) recon_proj.init(rng);
}

void Decomposer::register_params(nn::ParamRegistry& reg) {
    const StrategyTraits tr = strategy_traits(cfg.strategy);
    input_proj.register_params(reg, "input_proj");
    for (std::size_t i = 0; i < blocks_r.size(); ++i)
        blocks_r[i].register_params(reg, "branch_r.block" + std::to_string(i));
    for (std::size_t i = 0; i < blocks_l.size(); ++i)
        blocks_l[i].register_params(reg, "branch_l.block" + std::to_string(i));
    if (tr.space == ComponentSpace::pixel) {
        head_r.register_params(reg, "head_r");
        head_l.register_params(reg, "head_l");
    }
    if (tr.recon_conv) recon_proj.register_params(reg, "recon_proj");
}

std::pair<ag::Var, ag::Var> Decomposer::decompose_t(ag::Tape& t, ag::Var s, ag::Var p) const {
    const StrategyTraits tr = strategy_traits(cfg.strategy);
    if (s.val().rank() != 3 || s.val().dim(2) != 3)
        throw DataError("decompose expects an (H,W,3) domain image, got " + s.val().shape_str());
    if (p.val().dim(0) != s.val().dim(0) || p.val().dim(1) != s.val().dim(1) ||
        p.val().dim(2) != 1)
        throw DataError("illumination prior is not aligned with the image: " +
                        p.val().shape_str() + " vs " + s.val().shape_str());

    ag::Var x = ag::concat_c(s, p);
    ag::Var f = input_proj.forward(t, x);
    ag::Var fr = f, fl = f;
    for (const auto& b : blocks_r) fr = b.forward(t, fr, ag::Var{});
    for (const auto& b : blocks_l) fl = b.forward(t, fl, ag::Var{});
    if (tr.space == ComponentSpace::pixel) {
        fr = head_r.forward(t, fr);
        fl = head_l.forward(t, fl);
    }
    if (tr.clip_components) {
        fr = ag::clamp01(fr);
        fl = ag::clamp01(fl);
    }
    if (!fr.val().all_finite())
        throw NumericError("non-finite activations in decomposer layer branch_r");
    if (!fl.val().all_finite())
        throw NumericError("non-finite activations in decomposer layer branch_l");
    return {fr, fl};
}

ag::Var Decomposer::reconstruct_t(ag::Tape& t, ag::Var r, ag::Var l) const {
    const StrategyTraits tr = strategy_traits(cfg.strategy);
    const int rc = tr.r_channels(cfg.channels), lc = tr.l_channels(cfg.channels);
    if (r.val().dim(2) != rc || l.val().dim(2) != lc)
        throw DataError("components do not match strategy " + to_string(cfg.strategy) + ": R " +
                        r.val().shape_str() + ", L " + l.val().shape_str());
    ag::Var combined;
    if (tr.combine == CombineRule::additive) {
        combined = r + l;
    } else if (lc == 1) {
        combined = ag::channel_bcast_mul(r, l);
    } else {
        combined = r * l;
    }
    return tr.recon_conv ? recon_proj.forward(t, combined) : combined;
}

Tensor domain_forward(const PixelImage& img, Strategy strat) {
    if (strategy_traits(strat).log_domain) return log_forward(img).data;
    return img.data;
}

PixelImage domain_inverse(const Tensor& recon, Strategy strat) {
    if (strategy_traits(strat).log_domain) {
        LogImage s;
        s.data = recon;
        return log_inverse(s);
    }
    return PixelImage{clamp01(recon)};
}

GuidanceMap domain_prior(const Tensor& domain_img) {
    GuidanceMap g;
    g.data = channel_max(domain_img);
    g.kind = GuidanceKind::prior_p;
    return g;
}

LatentComponents decompose(const Tensor& s, const GuidanceMap& p, const Decomposer& w) {
    ag::Tape t(false);
    auto [r, l] = w.decompose_t(t, t.constant(s), t.constant(p.data));
    return LatentComponents{r.val(), l.val(), w.cfg.strategy};
}

Tensor reconstruct(const LatentComponents& c, const Decomposer& w) {
    if (c.strategy != w.cfg.strategy)
        throw DataError("components carry strategy " + to_string(c.strategy) +
                        " but the decomposer uses " + to_string(w.cfg.strategy));
    ag::Tape t(false);
    return w.reconstruct_t(t, t.constant(c.r), t.constant(c.l)).val();
}

PixelImage reconstruct_pixels(const LatentComponents& c, const Decomposer& w) {
    return domain_inverse(reconstruct(c, w), w.cfg.strategy);
}

JacobianReport jacobian_diagnostic(Strategy strat, const LatentComponents& point) {
    const StrategyTraits tr = strategy_traits(strat);
    const Tensor& r = point.r;
    const Tensor& l = point.l;
    const bool broadcast = l.dim(2) == 1 && r.dim(2) != 1;
    const double h = 1e-4;

    JacobianReport rep;
    rep.analytic_dr = Tensor::zeros(r.shape());
    rep.analytic_dl = Tensor::zeros(r.shape());
    rep.fd_dr = Tensor::zeros(r.shape());
    rep.fd_dl = Tensor::zeros(r.shape());

    auto combine_at = [&](double rv, double lv) {
        return tr.combine == CombineRule::additive ? rv + lv : rv * lv;
    };
    for (int i = 0; i < r.dim(0); ++i)
        for (int j = 0; j < r.dim(1); ++j)
            for (int c = 0; c < r.dim(2); ++c) {
                const double rv = r.at(i, j, c);
                const double lv = l.at(i, j, broadcast ? 0 : c);
                const bool additive = tr.combine == CombineRule::additive;
                rep.analytic_dr.at(i, j, c) = additive ? 1.0 : lv;
                rep.analytic_dl.at(i, j, c) = additive ? 1.0 : rv;
                rep.fd_dr.at(i, j, c) =
                    (combine_at(rv + h, lv) - combine_at(rv - h, lv)) / (2.0 * h);
                rep.fd_dl.at(i, j, c) =
                    (combine_at(rv, lv + h) - combine_at(rv, lv - h)) / (2.0 * h);
            }

    double worst = 0.0;
    for (std::size_t i = 0; i < rep.analytic_dr.size(); ++i) {
        auto rel = [](double a, double f) {
            return std::abs(a - f) / std::max({1.0, std::abs(a), std::abs(f)});
        };
        worst = std::max(worst, rel(rep.analytic_dr[i], rep.fd_dr[i]));
        worst = std::max(worst, rel(rep.analytic_dl[i], rep.fd_dl[i]));
    }
    rep.max_rel_discrepancy = worst;
    return rep;
}

}  // namespace relight

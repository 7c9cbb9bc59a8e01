#include "relight/losses.hpp"

#include "relight/errors.hpp"

namespace relight {

namespace {
constexpr std::uint64_t kExtractorSeed = 0x7e11ca1u;
}

PerceptualExtractor PerceptualExtractor::fixed_default() {
    PerceptualExtractor e;
    Rng rng(kExtractorSeed);
    const int widths[4] = {3, 8, 16, 24};
    for (int i = 0; i < 3; ++i) {
        auto c = nn::Conv2d::make(3, 3, widths[i], widths[i + 1], 2, 1);
        c.init(rng);
        e.convs_.push_back(std::move(c));
    }
    return e;
}

std::vector<ag::Var> PerceptualExtractor::features(ag::Tape& t, ag::Var x) const {
    ag::FreezeScope freeze(t);
    std::vector<ag::Var> out;
    for (const auto& c : convs_) {
        x = ag::gelu(c.forward(t, x));
        out.push_back(x);
    }
    return out;
}

ag::Var recon_loss_t(ag::Tape& t, const Decomposer& w, ag::Var r_l, ag::Var l_l, ag::Var r_n,
                     ag::Var l_n, ag::Var s_l, ag::Var s_n) {
    ag::Var rec_l = w.reconstruct_t(t, r_l, l_l);
    ag::Var rec_n = w.reconstruct_t(t, r_n, l_n);
    if (rec_l.val().shape() != s_l.val().shape() || rec_n.val().shape() != s_n.val().shape())
        throw DataError("reconstruction/target shape mismatch in recon_loss");
    return ag::mean_all(ag::abs_of(rec_l - s_l)) + ag::mean_all(ag::abs_of(rec_n - s_n));
}

ag::Var smoothness_loss_t(ag::Tape& t, ag::Var r, ag::Var l, double alpha_smooth) {
    (void)t;
    ag::Var rbar = r.val().dim(2) == 1 ? r : ag::channel_mean(r);
    ag::Var acc;
    for (int axis = 0; axis < 2; ++axis) {
        ag::Var gl = ag::abs_of(ag::fwd_diff(l, axis));
        ag::Var wgt = ag::exp_of(ag::scale(ag::abs_of(ag::fwd_diff(rbar, axis)), alpha_smooth));
        ag::Var term = ag::mean_all(ag::channel_bcast_mul(gl, wgt));
        acc = axis == 0 ? term : acc + term;
    }
    return acc;
}

ag::Var reflectance_consistency_t(ag::Tape& t, ag::Var r_l, ag::Var r_n) {
    (void)t;
    return ag::mean_all(ag::abs_of(r_l - r_n));
}

EnhanceLossVars enhance_loss_t(ag::Tape& t, ag::Var s_en, ag::Var s_n, double lambda_p,
                               const PerceptualExtractor* extractor) {
    EnhanceLossVars out;
    out.l1 = ag::mean_all(ag::abs_of(s_en - s_n));
    if (extractor == nullptr) {
        out.perceptual = t.constant(Tensor::scalar(0.0));
        out.perceptual_skipped = true;
        out.total = out.l1;
        return out;
    }
    std::vector<ag::Var> fa = extractor->features(t, s_en);
    std::vector<ag::Var> fb = extractor->features(t, s_n);
    ag::Var acc;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        ag::Var d = fa[i] - fb[i];
        ag::Var mse = ag::mean_all(d * d);
        acc = i == 0 ? mse : acc + mse;
    }
    out.perceptual = ag::scale(acc, 1.0 / static_cast<double>(fa.size()));
    out.total = out.l1 + ag::scale(out.perceptual, lambda_p);
    return out;
}

double recon_loss(const LatentComponents& c_l, const LatentComponents& c_n, const Tensor& s_l,
                  const Tensor& s_n, const Decomposer& w) {
    ag::Tape t(false);
    return recon_loss_t(t, w, t.constant(c_l.r), t.constant(c_l.l), t.constant(c_n.r),
                        t.constant(c_n.l), t.constant(s_l), t.constant(s_n))
        .val()[0];
}

double smoothness_loss(const Tensor& r, const Tensor& l, double alpha_smooth) {
    ag::Tape t(false);
    return smoothness_loss_t(t, t.constant(r), t.constant(l), alpha_smooth).val()[0];
}

double reflectance_consistency(const Tensor& r_l, const Tensor& r_n) {
    ag::Tape t(false);
    return reflectance_consistency_t(t, t.constant(r_l), t.constant(r_n)).val()[0];
}

DecomLossTerms decomposition_loss(const LatentComponents& c_l, const LatentComponents& c_n,
                                  const Tensor& s_l, const Tensor& s_n, const Decomposer& w,
                                  double lambda1, double lambda2, double alpha_smooth) {
    DecomLossTerms terms;
    terms.lambda1 = lambda1;
    terms.lambda2 = lambda2;
    terms.alpha_smooth = alpha_smooth;
    terms.recon = recon_loss(c_l, c_n, s_l, s_n, w);
    terms.is_smooth = smoothness_loss(c_l.r, c_l.l, alpha_smooth) +
                      smoothness_loss(c_n.r, c_n.l, alpha_smooth);
    terms.iR_consistency = reflectance_consistency(c_l.r, c_n.r);
    terms.total = terms.recon + lambda1 * terms.is_smooth + lambda2 * terms.iR_consistency;
    return terms;
}

EnhanceLossTerms enhance_loss(const LogImage& s_en, const LogImage& s_n, double lambda_p,
                              const PerceptualExtractor* extractor) {
    ag::Tape t(false);
    EnhanceLossVars v =
        enhance_loss_t(t, t.constant(s_en.data), t.constant(s_n.data), lambda_p, extractor);
    EnhanceLossTerms out;
    out.l1 = v.l1.val()[0];
    out.perceptual = v.perceptual.val()[0];
    out.total = v.total.val()[0];
    out.lambda_p = lambda_p;
    out.perceptual_skipped = v.perceptual_skipped;
    return out;
}

}  // namespace relight

#pragma once

#include <vector>

#include "relight/decomposer.hpp"
#include "relight/imaging.hpp"
#include "relight/nn.hpp"

namespace relight {

// Fixed (never trained) conv stack whose intermediate activations define the
// perceptual distance. Weights are generated from a pinned seed, so the
// metric is identical on every platform.
class PerceptualExtractor {
public:
    static PerceptualExtractor fixed_default();

    std::vector<ag::Var> features(ag::Tape& t, ag::Var x) const;
    int stages() const { return static_cast<int>(convs_.size()); }

private:
    std::vector<nn::Conv2d> convs_;
};

struct DecomLossTerms {
    double recon = 0.0;
    double is_smooth = 0.0;
    double iR_consistency = 0.0;
    double total = 0.0;
    double lambda1 = 0.0, lambda2 = 0.0, alpha_smooth = 0.0;
};

struct EnhanceLossTerms {
    double l1 = 0.0;
    double perceptual = 0.0;
    double total = 0.0;
    double lambda_p = 0.0;
    bool perceptual_skipped = false;  // extractor was unavailable
};

// ---- tape-level builders (training) ----

// Sum over both exposures of the mean-|.| reconstruction error in the
// strategy's domain.
ag::Var recon_loss_t(ag::Tape& t, const Decomposer& w, ag::Var r_l, ag::Var l_l, ag::Var r_n,
                     ag::Var l_n, ag::Var s_l, ag::Var s_n);

// Structure-aware smoothness of one image's components: the pixel-mean of
// |grad L| * exp(alpha * |grad Rbar|) is taken per forward-difference
// direction and the two directions are summed. Rbar is the channel mean of
// R; gradients replicate the border, so the final row/column contributes 0.
ag::Var smoothness_loss_t(ag::Tape& t, ag::Var r, ag::Var l, double alpha_smooth);

ag::Var reflectance_consistency_t(ag::Tape& t, ag::Var r_l, ag::Var r_n);

struct EnhanceLossVars {
    ag::Var l1, perceptual, total;
    bool perceptual_skipped = false;
};
EnhanceLossVars enhance_loss_t(ag::Tape& t, ag::Var s_en, ag::Var s_n, double lambda_p,
                               const PerceptualExtractor* extractor);

// ---- value-level wrappers ----

double recon_loss(const LatentComponents& c_l, const LatentComponents& c_n, const Tensor& s_l,
                  const Tensor& s_n, const Decomposer& w);
double smoothness_loss(const Tensor& r, const Tensor& l, double alpha_smooth);
double reflectance_consistency(const Tensor& r_l, const Tensor& r_n);

DecomLossTerms decomposition_loss(const LatentComponents& c_l, const LatentComponents& c_n,
                                  const Tensor& s_l, const Tensor& s_n, const Decomposer& w,
                                  double lambda1, double lambda2, double alpha_smooth);

EnhanceLossTerms enhance_loss(const LogImage& s_en, const LogImage& s_n, double lambda_p,
                              const PerceptualExtractor* extractor);

}  // namespace relight

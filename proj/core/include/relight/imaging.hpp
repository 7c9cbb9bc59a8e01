#pragma once

#include <string>

#include "relight/tensor.hpp"

namespace relight {

// (H,W,3) intensity image, every element in [0,1].
struct PixelImage {
    Tensor data;

    int height() const { return data.dim(0); }
    int width() const { return data.dim(1); }

    // Validates shape, finiteness and range. Values within `tol` of [0,1]
    // are clamped; anything further out is rejected.
    static PixelImage from_tensor(Tensor t, double tol = 1e-6);
};

// (H,W,3) offset-log image, S = ln(1 + I); elements in [0, ln 2] when
// derived from a valid PixelImage.
struct LogImage {
    Tensor data;

    int height() const { return data.dim(0); }
    int width() const { return data.dim(1); }
};

enum class GuidanceKind { prior_p, mean, max };

std::string to_string(GuidanceKind k);

// (H,W,1) per-pixel reduction of a log image.
struct GuidanceMap {
    Tensor data;
    GuidanceKind kind = GuidanceKind::prior_p;
};

// S(i,j,c) = ln(1 + I(i,j,c)). The +1 offset keeps the transform finite and
// monotone on dark pixels and bounds the output by ln 2.
LogImage log_forward(const PixelImage& img);

// I = clamp(exp(S) - 1, 0, 1).
PixelImage log_inverse(const LogImage& s);

// p(i,j) = max_c S(i,j,c); the decomposer's illumination prior.
GuidanceMap illumination_prior(const LogImage& s);

// Per-pixel channel mean; guides the reflectance branch.
GuidanceMap guidance_mean(const LogImage& s);

// Per-pixel channel max; guides the illumination branch.
GuidanceMap guidance_max(const LogImage& s);

}  // namespace relight

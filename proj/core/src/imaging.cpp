#include "relight/imaging.hpp"

#include <cmath>

#include "relight/errors.hpp"

namespace relight {

std::string to_string(GuidanceKind k) {
    switch (k) {
        case GuidanceKind::prior_p: return "prior_p";
        case GuidanceKind::mean: return "mean";
        case GuidanceKind::max: return "max";
    }
    return "prior_p";
}

PixelImage PixelImage::from_tensor(Tensor t, double tol) {
    if (t.rank() != 3 || t.dim(2) != 3)
        throw DataError("pixel image must be (H,W,3), got " + t.shape_str());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = t[i];
        if (!std::isfinite(v)) throw DataError("pixel image contains non-finite values");
        if (v < -tol || v > 1.0 + tol)
            throw DataError("pixel image value " + std::to_string(v) + " outside [0,1]");
        t[i] = std::clamp(v, 0.0, 1.0);
    }
    return PixelImage{std::move(t)};
}

LogImage log_forward(const PixelImage& img) {
    PixelImage checked = PixelImage::from_tensor(img.data);
    Tensor out = std::move(checked.data);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log1p(out[i]);
    return LogImage{std::move(out)};
}

PixelImage log_inverse(const LogImage& s) {
    if (s.data.rank() != 3 || s.data.dim(2) != 3)
        throw DataError("log image must be (H,W,3), got " + s.data.shape_str());
    if (!s.data.all_finite()) throw DataError("log image contains non-finite values");
    Tensor out = s.data;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(std::expm1(out[i]), 0.0, 1.0);
    return PixelImage{std::move(out)};
}

GuidanceMap illumination_prior(const LogImage& s) {
    return GuidanceMap{channel_max(s.data), GuidanceKind::prior_p};
}

GuidanceMap guidance_mean(const LogImage& s) {
    return GuidanceMap{channel_mean(s.data), GuidanceKind::mean};
}

GuidanceMap guidance_max(const LogImage& s) {
    return GuidanceMap{channel_max(s.data), GuidanceKind::max};
}

}  // namespace relight

#include "relight/evaluator.hpp"

#include <cmath>
#include <stdexcept>

#include "relight/errors.hpp"

namespace relight {

namespace {
constexpr double kPsnrCap = 99.0;
constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
}  // namespace

double psnr(const PixelImage& a, const PixelImage& b) {
    if (a.data.shape() != b.data.shape())
        throw DataError("psnr: shape mismatch " + a.data.shape_str() + " vs " +
                                    b.data.shape_str());
    const double mse = mean_sq_diff(a.data, b.data);
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const PixelImage& a, const PixelImage& b) {
    if (a.data.shape() != b.data.shape())
        throw DataError("ssim: shape mismatch " + a.data.shape_str() + " vs " +
                                    b.data.shape_str());
    const int h = a.height(), w = a.width();
    if (h < kSsimWindow || w < kSsimWindow)
        throw DataError("ssim needs images of at least 11x11, got " +
                                    a.data.shape_str());

    double window[kSsimWindow][kSsimWindow];
    double wsum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i)
        for (int j = 0; j < kSsimWindow; ++j) {
            const double di = i - (kSsimWindow - 1) / 2.0, dj = j - (kSsimWindow - 1) / 2.0;
            window[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * kSsimSigma * kSsimSigma));
            wsum += window[i][j];
        }
    for (auto& row : window)
        for (double& v : row) v /= wsum;

    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // K1, K2 on unit dynamic range
    double total = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        int count = 0;
        for (int y = 0; y + kSsimWindow <= h; ++y)
            for (int x = 0; x + kSsimWindow <= w; ++x) {
                double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
                for (int i = 0; i < kSsimWindow; ++i)
                    for (int j = 0; j < kSsimWindow; ++j) {
                        const double pa = a.data.at(y + i, x + j, ch);
                        const double pb = b.data.at(y + i, x + j, ch);
                        const double wt = window[i][j];
                        ma += wt * pa;
                        mb += wt * pb;
                        va += wt * pa * pa;
                        vb += wt * pb * pb;
                        cov += wt * pa * pb;
                    }
                va -= ma * ma;
                vb -= mb * mb;
                cov -= ma * mb;
                acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        total += acc / count;
    }
    return total / 3.0;
}

SwapResult swap_protocol(const ImagePair& pair, const Decomposer& w) {
    const Strategy strat = w.cfg.strategy;
    const Tensor s_l = domain_forward(pair.low, strat);
    const Tensor s_n = domain_forward(pair.normal, strat);
    const LatentComponents c_l = decompose(s_l, domain_prior(s_l), w);
    const LatentComponents c_n = decompose(s_n, domain_prior(s_n), w);

    const std::array<std::pair<const Tensor*, const Tensor*>, 4> combos = {{
        {&c_l.r, &c_l.l},
        {&c_l.r, &c_n.l},
        {&c_n.r, &c_l.l},
        {&c_n.r, &c_n.l},
    }};
    const std::array<const PixelImage*, 4> targets = {&pair.low, &pair.normal, &pair.low,
                                                      &pair.normal};

    SwapResult out;
    out.combo = {"R_l+L_l", "R_l+L_n", "R_n+L_l", "R_n+L_n"};
    out.target = {"low", "normal", "low", "normal"};
    for (int i = 0; i < 4; ++i) {
        LatentComponents c{*combos[i].first, *combos[i].second, strat};
        out.psnr_db[i] = psnr(reconstruct_pixels(c, w), *targets[i]);
    }
    return out;
}

MetricReport eval_dataset(const PairSet& pairs, const Decomposer& dw, const Refiner& rw) {
    if (pairs.empty()) throw DataError("eval_dataset called with an empty pair set");
    MetricReport rep;
    for (const auto& p : pairs) {
        PixelImage enhanced = enhance(p.low, dw, rw);
        MetricReport::Row row;
        row.scene_id = p.scene_id;
        row.psnr = psnr(enhanced, p.normal);
        row.ssim = ssim(enhanced, p.normal);
        rep.per_image.push_back(row);
    }
    const double n = static_cast<double>(rep.per_image.size());
    for (const auto& r : rep.per_image) {
        rep.mean_psnr += r.psnr / n;
        rep.mean_ssim += r.ssim / n;
    }
    for (const auto& r : rep.per_image) {
        rep.std_psnr += (r.psnr - rep.mean_psnr) * (r.psnr - rep.mean_psnr) / n;
        rep.std_ssim += (r.ssim - rep.mean_ssim) * (r.ssim - rep.mean_ssim) / n;
    }
    rep.std_psnr = std::sqrt(rep.std_psnr);
    rep.std_ssim = std::sqrt(rep.std_ssim);
    return rep;
}

}  // namespace relight

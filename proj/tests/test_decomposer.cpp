#include <cmath>

#include "doctest.h"
#include "relight/checkpoint.hpp"
#include "relight/decomposer.hpp"
#include "relight/errors.hpp"
#include "relight/rng.hpp"
#include "test_util.hpp"

using namespace relight;

namespace {

Decomposer make_init(Strategy s, int channels = 8, int heads = 2, int depth = 1,
                     std::uint64_t seed = 61) {
    DecomposerConfig cfg;
    cfg.strategy = s;
    cfg.channels = channels;
    cfg.heads = heads;
    cfg.block_depth = depth;
    Decomposer d = Decomposer::make(cfg);
    Rng rng(seed);
    d.init(rng);
    return d;
}

}  // namespace

TEST_CASE("strategy traits pin the design matrix") {
    StrategyTraits full = strategy_traits(Strategy::full);
    CHECK(full.combine == CombineRule::additive);
    CHECK(full.space == ComponentSpace::latent);
    CHECK(full.log_domain);
    CHECK_FALSE(full.clip_components);
    CHECK(full.recon_conv);

    StrategyTraits v0 = strategy_traits(Strategy::v0_pixel_mult);
    CHECK(v0.combine == CombineRule::multiplicative);
    CHECK(v0.space == ComponentSpace::pixel);
    CHECK_FALSE(v0.log_domain);
    CHECK(v0.clip_components);
    CHECK_FALSE(v0.recon_conv);
    CHECK(v0.r_channels(8) == 3);
    CHECK(v0.l_channels(8) == 1);

    StrategyTraits v1 = strategy_traits(Strategy::v1_latent_mult);
    CHECK(v1.combine == CombineRule::multiplicative);
    CHECK(v1.space == ComponentSpace::latent);
    CHECK_FALSE(v1.log_domain);
    CHECK(v1.recon_conv);
    CHECK(v1.r_channels(8) == 8);
    CHECK(v1.l_channels(8) == 8);

    StrategyTraits v2 = strategy_traits(Strategy::v2_latent_add_nolog);
    CHECK(v2.combine == CombineRule::additive);
    CHECK(v2.space == ComponentSpace::latent);
    CHECK_FALSE(v2.log_domain);

    StrategyTraits v3 = strategy_traits(Strategy::v3_rgb_add_log);
    CHECK(v3.combine == CombineRule::additive);
    CHECK(v3.space == ComponentSpace::pixel);
    CHECK(v3.log_domain);
    CHECK_FALSE(v3.recon_conv);
    CHECK(v3.r_channels(8) == 3);
    CHECK(v3.l_channels(8) == 3);

    for (Strategy s : all_strategies()) CHECK(strategy_from_string(to_string(s)) == s);
    CHECK_THROWS_AS((void)strategy_from_string("bogus"), ConfigError);
}

TEST_CASE("decomposer shape contracts per strategy") {
    Rng rng(62);
    Tensor img = testutil::random_image(8, 10, rng);
    for (Strategy s : all_strategies()) {
        CAPTURE(to_string(s));
        Decomposer d = make_init(s);
        Tensor dom = domain_forward(PixelImage::from_tensor(img), s);
        GuidanceMap p = domain_prior(dom);
        LatentComponents c = decompose(dom, p, d);

        const StrategyTraits tr = strategy_traits(s);
        CHECK(c.r.shape() == std::vector<int>{8, 10, tr.r_channels(8)});
        CHECK(c.l.shape() == std::vector<int>{8, 10, tr.l_channels(8)});
        CHECK(c.strategy == s);

        Tensor rec = reconstruct(c, d);
        CHECK(rec.shape() == std::vector<int>{8, 10, 3});
        PixelImage out = reconstruct_pixels(c, d);
        CHECK(out.data.min() >= 0.0);
        CHECK(out.data.max() <= 1.0);
    }
}

TEST_CASE("domain transforms follow the strategy's log flag") {
    Rng rng(63);
    PixelImage img = PixelImage::from_tensor(testutil::random_image(4, 4, rng));
    Tensor latent = domain_forward(img, Strategy::full);
    CHECK(latent.max() <= std::log(2.0) + 1e-12);
    CHECK(max_abs_diff(domain_inverse(latent, Strategy::full).data, img.data) < 1e-12);

    Tensor raw = domain_forward(img, Strategy::v0_pixel_mult);
    CHECK(max_abs_diff(raw, img.data) == 0.0);

    // domain_inverse clamps non-log reconstructions.
    Tensor wild = Tensor::from_data({1, 1, 3}, {-0.5, 0.5, 1.5});
    PixelImage clamped = domain_inverse(wild, Strategy::v2_latent_add_nolog);
    CHECK(clamped.data.at(0, 0, 0) == 0.0);
    CHECK(clamped.data.at(0, 0, 2) == 1.0);

    GuidanceMap p = domain_prior(latent);
    CHECK(p.kind == GuidanceKind::prior_p);
    CHECK(p.data.shape() == std::vector<int>{4, 4, 1});
    CHECK(p.data.at(1, 1, 0) ==
          doctest::Approx(std::max({latent.at(1, 1, 0), latent.at(1, 1, 1), latent.at(1, 1, 2)})));
}

TEST_CASE("v0 components are clipped to the unit range") {
    Rng rng(64);
    Decomposer d = make_init(Strategy::v0_pixel_mult);
    // Exaggerate the head weights so unclipped outputs would leave [0,1].
    for (auto& v : d.head_r.w.value.values()) v *= 100.0;
    for (auto& v : d.head_l.w.value.values()) v *= 100.0;
    Tensor img = testutil::random_image(6, 6, rng);
    Tensor dom = domain_forward(PixelImage::from_tensor(img), Strategy::v0_pixel_mult);
    LatentComponents c = decompose(dom, domain_prior(dom), d);
    CHECK(c.r.min() >= 0.0);
    CHECK(c.r.max() <= 1.0);
    CHECK(c.l.min() >= 0.0);
    CHECK(c.l.max() <= 1.0);
    // With huge weights some values must actually hit the clamp.
    CHECK((c.r.min() == 0.0 || c.r.max() == 1.0));
}

TEST_CASE("reconstruction combine rules are exactly as declared") {
    Rng rng(65);

    // full: L = 0 makes reconstruction the conv of R alone; subtracting the
    // conv of (R+L') for any L' equals conv linearity check.
    Decomposer full = make_init(Strategy::full);
    Tensor r = testutil::random_tensor({5, 5, 8}, rng);
    Tensor zero = Tensor::zeros({5, 5, 8});
    Tensor l = testutil::random_tensor({5, 5, 8}, rng);
    Tensor rec_r = reconstruct({r, zero, Strategy::full}, full);
    Tensor rec_l = reconstruct({zero, l, Strategy::full}, full);
    Tensor rec_rl = reconstruct({r, l, Strategy::full}, full);
    // Additive combine + linear conv: rec(R,L) - rec(R,0) - rec(0,L) = -bias_conv(0).
    Tensor rec_00 = reconstruct({zero, zero, Strategy::full}, full);
    for (std::size_t i = 0; i < rec_rl.size(); ++i)
        CHECK(rec_rl[i] - rec_r[i] - rec_l[i] + rec_00[i] == doctest::Approx(0.0).epsilon(1e-9));

    // v0: L = 1 returns R exactly (broadcast product, no conv).
    Decomposer v0 = make_init(Strategy::v0_pixel_mult);
    Tensor r3 = testutil::random_tensor({4, 4, 3}, rng, 0.0, 1.0);
    Tensor ones = Tensor::full({4, 4, 1}, 1.0);
    CHECK(max_abs_diff(reconstruct({r3, ones, Strategy::v0_pixel_mult}, v0), r3) == 0.0);

    // v0 broadcast product against an explicit loop.
    Tensor l1 = testutil::random_tensor({4, 4, 1}, rng, 0.0, 1.0);
    Tensor got = reconstruct({r3, l1, Strategy::v0_pixel_mult}, v0);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int c = 0; c < 3; ++c)
                CHECK(got.at(i, j, c) == doctest::Approx(r3.at(i, j, c) * l1.at(i, j, 0)));

    // v3: direct sum, no conv.
    Decomposer v3 = make_init(Strategy::v3_rgb_add_log);
    Tensor a3 = testutil::random_tensor({4, 4, 3}, rng);
    Tensor b3 = testutil::random_tensor({4, 4, 3}, rng);
    CHECK(max_abs_diff(reconstruct({a3, b3, Strategy::v3_rgb_add_log}, v3), add(a3, b3)) == 0.0);

    // Strategy mismatch between components and decomposer is rejected.
    CHECK_THROWS_AS((void)reconstruct({r3, ones, Strategy::v0_pixel_mult}, full), DataError);
    // Shape mismatch against the strategy is rejected.
    CHECK_THROWS_AS((void)reconstruct({r3, l1, Strategy::full}, full), DataError);
}

TEST_CASE("jacobian diagnostic: additive is exactly one, multiplicative matches FD") {
    Rng rng(66);
    for (Strategy s : {Strategy::full, Strategy::v2_latent_add_nolog, Strategy::v3_rgb_add_log}) {
        CAPTURE(to_string(s));
        const StrategyTraits tr = strategy_traits(s);
        LatentComponents pt;
        pt.r = testutil::random_tensor({8, 8, tr.r_channels(4)}, rng, 0.1, 0.9);
        pt.l = testutil::random_tensor({8, 8, tr.l_channels(4)}, rng, 0.1, 0.9);
        pt.strategy = s;
        JacobianReport rep = jacobian_diagnostic(s, pt);
        for (std::size_t i = 0; i < rep.analytic_dr.size(); ++i) {
            CHECK(rep.analytic_dr[i] == 1.0);
            CHECK(rep.analytic_dl[i] == 1.0);
        }
        CHECK(rep.max_rel_discrepancy <= 1e-3);
    }

    for (Strategy s : {Strategy::v0_pixel_mult, Strategy::v1_latent_mult}) {
        CAPTURE(to_string(s));
        const StrategyTraits tr = strategy_traits(s);
        LatentComponents pt;
        pt.r = testutil::random_tensor({8, 8, tr.r_channels(4)}, rng, 0.1, 0.9);
        pt.l = testutil::random_tensor({8, 8, tr.l_channels(4)}, rng, 0.1, 0.9);
        pt.strategy = s;
        JacobianReport rep = jacobian_diagnostic(s, pt);
        CHECK(rep.max_rel_discrepancy <= 1e-3);
        // dC/dR = L at the point (broadcast-aware), dC/dL = R.
        const bool bcast = pt.l.dim(2) == 1;
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j)
                for (int c = 0; c < pt.r.dim(2); ++c) {
                    CHECK(rep.analytic_dr.at(i, j, c) ==
                          doctest::Approx(pt.l.at(i, j, bcast ? 0 : c)));
                    CHECK(rep.analytic_dl.at(i, j, c) == doctest::Approx(pt.r.at(i, j, c)));
                }
    }
}

TEST_CASE("decompose_t validates inputs") {
    Decomposer d = make_init(Strategy::full);
    ag::Tape t;
    CHECK_THROWS_AS((void)d.decompose_t(t, t.constant(Tensor::zeros({4, 4, 4})),
                                        t.constant(Tensor::zeros({4, 4, 1}))),
                    DataError);
    CHECK_THROWS_AS((void)d.decompose_t(t, t.constant(Tensor::zeros({4, 4, 3})),
                                        t.constant(Tensor::zeros({2, 4, 1}))),
                    DataError);
    CHECK_THROWS_AS((void)Decomposer::make(DecomposerConfig{Strategy::full, 7, 2, 1, 2}),
                    ConfigError);
}

TEST_CASE("non-finite activations surface as NumericError naming the branch") {
    Decomposer d = make_init(Strategy::full);
    for (auto& v : d.input_proj.w.value.values()) v = 1e200;
    Tensor s = Tensor::full({4, 4, 3}, 0.5);
    ag::Tape t;
    try {
        (void)d.decompose_t(t, t.constant(s), t.constant(channel_max(s)));
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("layer") != std::string::npos);
    }
}

TEST_CASE("decomposer checkpoints round-trip bit-exactly") {
    testutil::TempDir dir;
    for (Strategy s : {Strategy::full, Strategy::v0_pixel_mult}) {
        CAPTURE(to_string(s));
        Decomposer d = make_init(s, 8, 2, 2, /*seed=*/101);
        const std::string path = dir.str("decomp_" + to_string(s) + ".ckpt");
        to_checkpoint(d).save(path);

        Decomposer loaded = decomposer_from_checkpoint(Checkpoint::load(path));
        CHECK(loaded.cfg.strategy == s);
        CHECK(loaded.cfg.channels == 8);
        CHECK(loaded.cfg.block_depth == 2);

        nn::ParamRegistry ra, rb;
        d.register_params(ra);
        loaded.register_params(rb);
        REQUIRE(ra.entries().size() == rb.entries().size());
        for (std::size_t i = 0; i < ra.entries().size(); ++i) {
            CHECK(ra.entries()[i].first == rb.entries()[i].first);
            CHECK(max_abs_diff(ra.entries()[i].second->value, rb.entries()[i].second->value) ==
                  0.0);
        }
        CHECK(param_checksum(ra) == param_checksum(rb));

        // Identical outputs after reload.
        Rng rng(7);
        Tensor img = testutil::random_image(6, 6, rng);
        Tensor dom = domain_forward(PixelImage::from_tensor(img), s);
        LatentComponents ca = decompose(dom, domain_prior(dom), d);
        LatentComponents cb = decompose(dom, domain_prior(dom), loaded);
        CHECK(max_abs_diff(ca.r, cb.r) == 0.0);
        CHECK(max_abs_diff(ca.l, cb.l) == 0.0);
    }
}

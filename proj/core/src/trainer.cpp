#include "relight/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "relight/checkpoint.hpp"
#include "relight/errors.hpp"
#include "relight/evaluator.hpp"

namespace relight {

namespace {

std::uint64_t effective_seed(const TrainConfig& cfg) {
    if (cfg.deterministic) return cfg.seed;
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string describe_terms(const std::vector<std::string>& names,
                           const std::vector<double>& values) {
    std::ostringstream os;
    for (std::size_t i = 0; i < names.size(); ++i)
        os << (i ? " " : "") << names[i] << "=" << values[i];
    return os.str();
}

struct TrainPatch {
    Tensor low, normal;
};

TrainPatch draw_patch(const PairSet& pairs, int patch_size, Rng& rng) {
    const ImagePair& pair = pairs[rng.uniform_int(pairs.size())];
    PatchPair p = sample_patch(pair, patch_size, rng);
    augment(p, rng);
    return TrainPatch{std::move(p.low), std::move(p.normal)};
}

}  // namespace

double lr_schedule(int step, const TrainConfig& cfg) {
    if (step < 0) throw std::invalid_argument("lr_schedule: negative step");
    if (cfg.iterations <= 0) return cfg.lr_final;
    if (step >= cfg.iterations) return cfg.lr_final;
    const double t = static_cast<double>(step) / static_cast<double>(cfg.iterations);
    return cfg.lr_final +
           0.5 * (cfg.lr_initial - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * t));
}

AdamOptimizer::AdamOptimizer(const nn::ParamRegistry& reg, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, p] : reg.entries()) {
        m_.push_back(Tensor::zeros(p->value.shape()));
        v_.push_back(Tensor::zeros(p->value.shape()));
    }
}

void AdamOptimizer::step(const nn::ParamRegistry& reg, double lr) {
    if (reg.entries().size() != m_.size())
        throw std::logic_error("optimizer bound to a different registry");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t k = 0; k < m_.size(); ++k) {
        nn::Param* p = reg.entries()[k].second;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g;
            v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g * g;
            p->value[i] -= lr * (m_[k][i] / bc1) / (std::sqrt(v_[k][i] / bc2) + eps_);
        }
    }
}

double global_grad_norm(const nn::ParamRegistry& reg) {
    double sq = 0.0;
    for (const auto& [name, p] : reg.entries())
        for (std::size_t i = 0; i < p->grad.size(); ++i) sq += p->grad[i] * p->grad[i];
    return std::sqrt(sq);
}

bool clip_global_norm(const nn::ParamRegistry& reg, double max_norm) {
    const double norm = global_grad_norm(reg);
    if (!(norm > max_norm)) return false;
    const double s = max_norm / norm;
    for (const auto& [name, p] : reg.entries())
        for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= s;
    return true;
}

std::pair<Decomposer, TrainRunRecord> train_decomposition(const TrainConfig& cfg,
                                                          const PairSet& pairs) {
    if (cfg.stage != TrainStage::decomposition)
        throw ConfigError("train_decomposition requires stage=decomposition");
    if (pairs.empty()) throw DataError("no training pairs supplied");
    if (cfg.batch_size < 1 || cfg.iterations < 1 || cfg.patch_size < 1)
        throw ConfigError("iterations, batch_size and patch_size must be positive");
    const auto t0 = std::chrono::steady_clock::now();

    const std::uint64_t seed = effective_seed(cfg);
    Rng root(seed);
    Rng init_rng = root.fork(1);
    Rng data_rng = root.fork(2);

    Decomposer model = Decomposer::make(
        DecomposerConfig{cfg.strategy, cfg.channels, cfg.heads, cfg.block_depth,
                         cfg.ffn_expansion});
    model.init(init_rng);
    nn::ParamRegistry reg;
    model.register_params(reg);
    AdamOptimizer opt(reg, cfg.beta1, cfg.beta2);
    const bool clip = cfg.grad_clip > 0.0 &&
                      strategy_traits(cfg.strategy).combine == CombineRule::multiplicative;

    TrainRunRecord rec;
    rec.term_names = {"recon", "smooth", "refl"};
    rec.seed = seed;

    for (int step = 0; step < cfg.iterations; ++step) {
        try {
            ag::Tape t;
            ag::Var total;
            double recon_v = 0.0, smooth_v = 0.0, refl_v = 0.0;
            for (int b = 0; b < cfg.batch_size; ++b) {
                TrainPatch patch = draw_patch(pairs, cfg.patch_size, data_rng);
                const Tensor s_l = domain_forward(PixelImage{std::move(patch.low)}, cfg.strategy);
                const Tensor s_n =
                    domain_forward(PixelImage{std::move(patch.normal)}, cfg.strategy);
                ag::Var vs_l = t.constant(s_l), vs_n = t.constant(s_n);
                ag::Var vp_l = t.constant(channel_max(s_l)), vp_n = t.constant(channel_max(s_n));
                auto [r_l, l_l] = model.decompose_t(t, vs_l, vp_l);
                auto [r_n, l_n] = model.decompose_t(t, vs_n, vp_n);

                ag::Var recon = recon_loss_t(t, model, r_l, l_l, r_n, l_n, vs_l, vs_n);
                ag::Var smooth = smoothness_loss_t(t, r_l, l_l, cfg.alpha_smooth) +
                                 smoothness_loss_t(t, r_n, l_n, cfg.alpha_smooth);
                ag::Var refl = reflectance_consistency_t(t, r_l, r_n);
                ag::Var elem =
                    recon + ag::scale(smooth, cfg.lambda1) + ag::scale(refl, cfg.lambda2);
                total = b == 0 ? elem : total + elem;
                recon_v += recon.val()[0];
                smooth_v += smooth.val()[0];
                refl_v += refl.val()[0];
            }
            const double inv_b = 1.0 / cfg.batch_size;
            total = ag::scale(total, inv_b);
            recon_v *= inv_b;
            smooth_v *= inv_b;
            refl_v *= inv_b;

            const double loss = total.val()[0];
            if (!std::isfinite(loss))
                throw NumericError("non-finite loss: " +
                                   describe_terms(rec.term_names, {recon_v, smooth_v, refl_v}));

            reg.zero_grads();
            t.backward(total);
            if (clip && clip_global_norm(reg, cfg.grad_clip)) ++rec.clip_events;
            const double lr = lr_schedule(step, cfg);
            opt.step(reg, lr);

            if (cfg.log_every <= 1 || step % cfg.log_every == 0 || step == cfg.iterations - 1)
                rec.steps.push_back(StepLog{step, lr, loss, {recon_v, smooth_v, refl_v}});
        } catch (const NumericError& e) {
            throw NumericError("training aborted at step " + std::to_string(step) + ": " +
                               e.what());
        }
    }
    rec.wall_seconds = seconds_since(t0);
    return {std::move(model), std::move(rec)};
}

std::pair<Refiner, TrainRunRecord> train_enhancement(const TrainConfig& cfg, const PairSet& pairs,
                                                     const Decomposer& frozen_dw) {
    if (cfg.stage != TrainStage::enhancement)
        throw ConfigError("train_enhancement requires stage=enhancement");
    if (frozen_dw.cfg.strategy != Strategy::full)
        throw DataError("enhancement training needs a full-strategy decomposer, got " +
                        to_string(frozen_dw.cfg.strategy));
    if (pairs.empty()) throw DataError("no training pairs supplied");
    if (cfg.patch_size % 4 != 0)
        throw ConfigError("patch_size must be divisible by 4 for the three-scale refiner");
    const auto t0 = std::chrono::steady_clock::now();

    // Registration only names parameters; the checksum proves the weights
    // themselves never move.
    nn::ParamRegistry dreg;
    const_cast<Decomposer&>(frozen_dw).register_params(dreg);
    const std::uint64_t checksum_before = param_checksum(dreg);

    const std::uint64_t seed = effective_seed(cfg);
    Rng root(seed);
    Rng init_rng = root.fork(1);
    Rng data_rng = root.fork(2);

    RefinerConfig rc;
    rc.channels = frozen_dw.cfg.channels;
    rc.heads = cfg.heads;
    rc.ffn_expansion = cfg.ffn_expansion;
    rc.blocks_per_scale = cfg.blocks_per_scale;
    rc.fusion = cfg.fusion;
    Refiner model = Refiner::make(rc);
    model.init(init_rng);
    nn::ParamRegistry reg;
    model.r_branch.register_params(reg);
    model.l_branch.register_params(reg);
    AdamOptimizer opt(reg, cfg.beta1, cfg.beta2);

    PerceptualExtractor extractor;
    const PerceptualExtractor* ext = nullptr;
    if (cfg.use_perceptual) {
        extractor = PerceptualExtractor::fixed_default();
        ext = &extractor;
    }

    TrainRunRecord rec;
    rec.term_names = {"l1", "perceptual"};
    rec.seed = seed;

    for (int step = 0; step < cfg.iterations; ++step) {
        try {
            ag::Tape t;
            ag::Var total;
            double l1_v = 0.0, perc_v = 0.0;
            for (int b = 0; b < cfg.batch_size; ++b) {
                TrainPatch patch = draw_patch(pairs, cfg.patch_size, data_rng);
                const Tensor s_l = log_forward(PixelImage{std::move(patch.low)}).data;
                const Tensor s_n = log_forward(PixelImage{std::move(patch.normal)}).data;
                ag::Var vs_l = t.constant(s_l), vs_n = t.constant(s_n);

                ag::Var r, l;
                {
                    ag::FreezeScope freeze(t);
                    std::tie(r, l) = frozen_dw.decompose_t(t, vs_l, t.constant(channel_max(s_l)));
                }
                ag::Var r_ref = model.r_branch.forward(t, r, channel_mean(s_l));
                ag::Var l_ref = model.l_branch.forward(t, l, channel_max(s_l));
                ag::Var s_en;
                {
                    ag::FreezeScope freeze(t);
                    s_en = frozen_dw.reconstruct_t(t, r_ref, l_ref);
                }

                EnhanceLossVars loss = enhance_loss_t(t, s_en, vs_n, cfg.lambda_p, ext);
                total = b == 0 ? loss.total : total + loss.total;
                l1_v += loss.l1.val()[0];
                perc_v += loss.perceptual.val()[0];
            }
            const double inv_b = 1.0 / cfg.batch_size;
            total = ag::scale(total, inv_b);
            l1_v *= inv_b;
            perc_v *= inv_b;

            const double loss = total.val()[0];
            if (!std::isfinite(loss))
                throw NumericError("non-finite loss: " +
                                   describe_terms(rec.term_names, {l1_v, perc_v}));

            reg.zero_grads();
            t.backward(total);
            const double lr = lr_schedule(step, cfg);
            opt.step(reg, lr);

            if (cfg.log_every <= 1 || step % cfg.log_every == 0 || step == cfg.iterations - 1)
                rec.steps.push_back(StepLog{step, lr, loss, {l1_v, perc_v}});
        } catch (const NumericError& e) {
            throw NumericError("training aborted at step " + std::to_string(step) + ": " +
                               e.what());
        }
    }

    if (param_checksum(dreg) != checksum_before)
        throw std::logic_error("frozen decomposer weights changed during stage-2 training");
    rec.wall_seconds = seconds_since(t0);
    return {std::move(model), std::move(rec)};
}

double recon_psnr(const Decomposer& w, const PairSet& pairs) {
    if (pairs.empty()) throw DataError("recon_psnr called with an empty pair set");
    double acc = 0.0;
    for (const auto& pair : pairs) {
        for (const PixelImage* img : {&pair.low, &pair.normal}) {
            const Tensor s = domain_forward(*img, w.cfg.strategy);
            const LatentComponents c = decompose(s, domain_prior(s), w);
            acc += psnr(reconstruct_pixels(c, w), *img);
        }
    }
    return acc / (2.0 * static_cast<double>(pairs.size()));
}

StabilityReport stability_study(const TrainConfig& cfg, const PairSet& pairs, int n_runs,
                                const std::vector<Strategy>& strategies) {
    if (n_runs < 1) throw ConfigError("stability_study needs n_runs >= 1");
    if (strategies.empty()) throw ConfigError("stability_study needs at least one strategy");
    if (cfg.epoch_steps < 1) throw ConfigError("epoch_steps must be positive");

    StabilityReport rep;
    rep.n_runs = n_runs;
    rep.epoch_steps = cfg.epoch_steps;
    const int n_epochs = (cfg.iterations + cfg.epoch_steps - 1) / cfg.epoch_steps;

    for (Strategy strat : strategies) {
        StabilityReport::PerStrategy row;
        row.strategy = strat;
        std::vector<double> finals;

        for (int run = 0; run < n_runs; ++run) {
            TrainConfig rcfg = cfg;
            rcfg.stage = TrainStage::decomposition;
            rcfg.strategy = strat;
            rcfg.log_every = 1;
            rcfg.seed = cfg.seed + 7919u * static_cast<std::uint64_t>(run + 1);
            auto [model, record] = train_decomposition(rcfg, pairs);

            std::vector<double> epochs(static_cast<std::size_t>(n_epochs), 0.0);
            std::vector<int> counts(static_cast<std::size_t>(n_epochs), 0);
            for (const auto& s : record.steps) {
                const int e = s.step / cfg.epoch_steps;
                epochs[static_cast<std::size_t>(e)] += s.total;
                ++counts[static_cast<std::size_t>(e)];
            }
            for (int e = 0; e < n_epochs; ++e)
                epochs[static_cast<std::size_t>(e)] /= std::max(1, counts[static_cast<std::size_t>(e)]);
            row.per_run_epoch_loss.push_back(std::move(epochs));
            finals.push_back(recon_psnr(model, pairs));
        }

        row.epoch_mean_loss.assign(static_cast<std::size_t>(n_epochs), 0.0);
        row.epoch_var_loss.assign(static_cast<std::size_t>(n_epochs), 0.0);
        for (int e = 0; e < n_epochs; ++e) {
            double mean = 0.0;
            for (const auto& r : row.per_run_epoch_loss) mean += r[static_cast<std::size_t>(e)];
            mean /= n_runs;
            double var = 0.0;
            for (const auto& r : row.per_run_epoch_loss) {
                const double d = r[static_cast<std::size_t>(e)] - mean;
                var += d * d;
            }
            var /= n_runs;
            row.epoch_mean_loss[static_cast<std::size_t>(e)] = mean;
            row.epoch_var_loss[static_cast<std::size_t>(e)] = var;
        }
        for (double f : finals) row.final_metric_mean += f / n_runs;
        for (double f : finals) {
            const double d = f - row.final_metric_mean;
            row.final_metric_var += d * d / n_runs;
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

}  // namespace relight

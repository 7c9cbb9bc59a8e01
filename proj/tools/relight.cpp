// relight: command line front end for the decomposition/enhancement library.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical abort,
// 5 I/O error, 1 anything else. Errors are a single line on stderr of the
// form "relight: <category>: <message>".

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "relight/checkpoint.hpp"
#include "relight/config.hpp"
#include "relight/dataset.hpp"
#include "relight/errors.hpp"
#include "relight/evaluator.hpp"
#include "relight/image_io.hpp"
#include "relight/refiner.hpp"
#include "relight/report.hpp"
#include "relight/synthetic.hpp"
#include "relight/trainer.hpp"

#ifndef RELIGHT_VERSION
#define RELIGHT_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace relight;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out;
    std::string data;
    int synthetic = 0;
    int synthetic_size = 32;
};

void add_config_opts(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "key=value config file; defaults are used without it")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", o.overrides, "override a config key, e.g. --set seed=7 (repeatable)");
    cmd->add_option("--out", o.out, "output directory for artifacts and the manifest")->required();
}

void add_data_opts(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--data", o.data, "dataset root containing low/ and high/ directories");
    cmd->add_option("--synthetic", o.synthetic,
                    "generate this many synthetic pairs instead of reading --data");
    cmd->add_option("--synthetic-size", o.synthetic_size, "edge length of synthetic pairs")
        ->capture_default_str();
}

KeyValueConfig resolve_config(const CommonOpts& o) {
    KeyValueConfig cfg = o.config_path.empty() ? KeyValueConfig::defaults()
                                               : KeyValueConfig::load(o.config_path);
    for (const auto& ov : o.overrides) cfg.apply_override(ov);
    return cfg;
}

// Relative --out paths land under $RELIGHT_OUT_ROOT when it is set.
fs::path resolve_out_dir(const std::string& out) {
    fs::path p(out);
    if (p.is_relative())
        if (const char* root = std::getenv("RELIGHT_OUT_ROOT")) p = fs::path(root) / p;
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create output directory '" + p.string() + "'");
    return p;
}

void write_run_manifest(const fs::path& out_dir, const std::string& command,
                        const CommonOpts& o, const KeyValueConfig& cfg) {
    std::map<std::string, std::string> extra{
        {"command", command},
        {"version", RELIGHT_VERSION},
    };
    if (o.synthetic > 0)
        extra["data"] = "synthetic:" + std::to_string(o.synthetic) + "x" +
                        std::to_string(o.synthetic_size);
    else if (!o.data.empty())
        extra["data"] = o.data;
    write_manifest((out_dir / "manifest.txt").string(), cfg, extra);
}

PairSet load_dataset(const CommonOpts& o, const KeyValueConfig& cfg) {
    if (o.synthetic > 0) {
        SyntheticConfig sc;
        sc.count = o.synthetic;
        sc.size = o.synthetic_size;
        sc.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
        return make_synthetic_pairs(sc);
    }
    if (o.data.empty())
        throw ConfigError("either --data or --synthetic is required for this command");
    PairIndex index = scan_pairs(o.data, static_cast<std::size_t>(cfg.get_int("max_pairs")));
    for (const auto& w : index.warnings) std::cerr << "relight: warning: " << w << "\n";
    return load_pairs(index);
}

std::vector<Strategy> parse_strategies(const std::string& csv) {
    std::vector<Strategy> out;
    std::string item;
    for (std::size_t i = 0; i <= csv.size(); ++i) {
        if (i == csv.size() || csv[i] == ',') {
            if (!item.empty()) out.push_back(strategy_from_string(item));
            item.clear();
        } else {
            item += csv[i];
        }
    }
    if (out.empty()) throw ConfigError("empty strategy list");
    return out;
}

SwapRow mean_swap_over_pairs(const std::string& id, const PairSet& pairs, const Decomposer& dw) {
    SwapRow row;
    row.id = id;
    for (const auto& p : pairs) {
        SwapResult r = swap_protocol(p, dw);
        row.result.combo = r.combo;
        row.result.target = r.target;
        for (std::size_t i = 0; i < 4; ++i) row.result.psnr_db[i] += r.psnr_db[i];
    }
    for (auto& v : row.result.psnr_db) v /= static_cast<double>(pairs.size());
    return row;
}

int cmd_train_decomp(const CommonOpts& o) {
    KeyValueConfig cfg = resolve_config(o);
    fs::path out = resolve_out_dir(o.out);
    write_run_manifest(out, "train-decomp", o, cfg);
    PairSet pairs = load_dataset(o, cfg);

    TrainConfig tc = make_train_config(cfg, TrainStage::decomposition);
    auto [dw, rec] = train_decomposition(tc, pairs);
    to_checkpoint(dw).save((out / "decomposer.ckpt").string());
    emit_plot_data(rec, (out / "train_log.csv").string());

    std::cout << "trained " << to_string(tc.strategy) << " decomposer on " << pairs.size()
              << " pairs in " << rec.wall_seconds << " s\n"
              << "reconstruction psnr: " << recon_psnr(dw, pairs) << " dB\n"
              << "wrote " << (out / "decomposer.ckpt").string() << "\n";
    return 0;
}

int cmd_train_enhance(const CommonOpts& o, const std::string& decomp_path) {
    KeyValueConfig cfg = resolve_config(o);
    fs::path out = resolve_out_dir(o.out);
    write_run_manifest(out, "train-enhance", o, cfg);
    PairSet pairs = load_dataset(o, cfg);

    Decomposer dw = decomposer_from_checkpoint(Checkpoint::load(decomp_path));
    TrainConfig tc = make_train_config(cfg, TrainStage::enhancement);
    tc.strategy = dw.cfg.strategy;
    auto [rw, rec] = train_enhancement(tc, pairs, dw);
    save_refiner(rw, (out / "refiner_r.ckpt").string(), (out / "refiner_l.ckpt").string());
    emit_plot_data(rec, (out / "train_log.csv").string());

    std::cout << "trained refiner on " << pairs.size() << " pairs in " << rec.wall_seconds
              << " s\nwrote " << (out / "refiner_r.ckpt").string() << " and "
              << (out / "refiner_l.ckpt").string() << "\n";
    return 0;
}

int cmd_enhance(const CommonOpts& o, const std::string& input_dir, const std::string& decomp_path,
                const std::string& refiner_r, const std::string& refiner_l) {
    KeyValueConfig cfg = resolve_config(o);
    fs::path out = resolve_out_dir(o.out);
    write_run_manifest(out, "enhance", o, cfg);

    Decomposer dw = decomposer_from_checkpoint(Checkpoint::load(decomp_path));
    Refiner rw = load_refiner(refiner_r, refiner_l);

    if (!fs::is_directory(input_dir))
        throw DataError("input '" + input_dir + "' is not a directory");
    std::vector<fs::path> inputs;
    for (const auto& e : fs::directory_iterator(input_dir))
        if (e.is_regular_file() && looks_like_image_file(e.path().filename().string()))
            inputs.push_back(e.path());
    if (inputs.empty()) throw DataError("no image files in '" + input_dir + "'");
    std::sort(inputs.begin(), inputs.end());

    for (const auto& in : inputs) {
        PixelImage enhanced = enhance(read_image(in.string()), dw, rw);
        write_png((out / (in.stem().string() + ".png")).string(), enhanced);
    }
    std::cout << "enhanced " << inputs.size() << " image(s) into " << out.string() << "\n";
    return 0;
}

int cmd_swap(const CommonOpts& o, const std::string& decomp_path) {
    KeyValueConfig cfg = resolve_config(o);
    fs::path out = resolve_out_dir(o.out);
    write_run_manifest(out, "swap", o, cfg);
    PairSet pairs = load_dataset(o, cfg);

    Decomposer dw = decomposer_from_checkpoint(Checkpoint::load(decomp_path));
    std::vector<SwapRow> rows;
    for (const auto& p : pairs) rows.push_back(SwapRow{p.scene_id, swap_protocol(p, dw)});
    rows.push_back(mean_swap_over_pairs("mean", pairs, dw));
    write_swap_csv(rows, (out / "swap.csv").string());

    const SwapResult& m = rows.back().result;
    std::cout << "swap psnr over " << pairs.size() << " pairs: mean " << m.mean_psnr()
              << " dB (ll " << m.psnr_ll() << ", ln " << m.psnr_ln() << ", nl " << m.psnr_nl()
              << ", nn " << m.psnr_nn() << ")\nwrote " << (out / "swap.csv").string() << "\n";
    return 0;
}

int cmd_ablate(const CommonOpts& o, const std::string& strategies_csv) {
    KeyValueConfig cfg = resolve_config(o);
    fs::path out = resolve_out_dir(o.out);
    write_run_manifest(out, "ablate", o, cfg);
    PairSet pairs = load_dataset(o, cfg);
    const std::vector<Strategy> strategies = parse_strategies(strategies_csv);

    std::vector<SwapRow> rows;
    for (Strategy s : strategies) {
        KeyValueConfig run_cfg = cfg;
        run_cfg.set("strategy", to_string(s));
        TrainConfig tc = make_train_config(run_cfg, TrainStage::decomposition);
        auto [dw, rec] = train_decomposition(tc, pairs);
        to_checkpoint(dw).save((out / ("decomposer_" + to_string(s) + ".ckpt")).string());
        emit_plot_data(rec, (out / ("train_log_" + to_string(s) + ".csv")).string());
        rows.push_back(mean_swap_over_pairs(to_string(s), pairs, dw));
        std::cout << to_string(s) << ": mean swap psnr " << rows.back().result.mean_psnr()
                  << " dB\n";
    }
    write_swap_csv(rows, (out / "ablation.csv").string());
    std::cout << "wrote " << (out / "ablation.csv").string() << "\n";
    return 0;
}

int cmd_stability(const CommonOpts& o, int runs, const std::string& strategies_csv) {
    KeyValueConfig cfg = resolve_config(o);
    fs::path out = resolve_out_dir(o.out);
    write_run_manifest(out, "stability", o, cfg);
    PairSet pairs = load_dataset(o, cfg);

    TrainConfig tc = make_train_config(cfg, TrainStage::decomposition);
    StabilityReport rep = stability_study(tc, pairs, runs, parse_strategies(strategies_csv));
    for (const auto& path : write_stability_csv(rep, out.string()))
        std::cout << "wrote " << path << "\n";
    emit_plot_data(rep, out.string());

    for (const auto& row : rep.rows)
        std::cout << to_string(row.strategy) << ": final psnr " << row.final_metric_mean
                  << " dB (variance " << row.final_metric_var << " over " << rep.n_runs
                  << " runs)\n";
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& decomp_path, const std::string& refiner_r,
             const std::string& refiner_l) {
    KeyValueConfig cfg = resolve_config(o);
    fs::path out = resolve_out_dir(o.out);
    write_run_manifest(out, "eval", o, cfg);
    PairSet pairs = load_dataset(o, cfg);

    Decomposer dw = decomposer_from_checkpoint(Checkpoint::load(decomp_path));
    Refiner rw = load_refiner(refiner_r, refiner_l);
    MetricReport rep = eval_dataset(pairs, dw, rw);
    write_metric_csv(rep, (out / "metrics.csv").string());
    write_metric_text(rep, (out / "metrics.txt").string());

    std::cout << "psnr " << rep.mean_psnr << " +/- " << rep.std_psnr << " dB, ssim "
              << rep.mean_ssim << " +/- " << rep.std_ssim << " over " << pairs.size()
              << " pairs\nwrote " << (out / "metrics.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retinex-guided low-light image enhancement toolkit"};
    app.set_version_flag("--version", RELIGHT_VERSION);
    app.require_subcommand(1);

    CommonOpts o;
    std::string decomp_path, refiner_r, refiner_l, input_dir;
    std::string strategies = "full,v0_pixel_mult,v1_latent_mult";
    int runs = 3;

    CLI::App* train_decomp = app.add_subcommand(
        "train-decomp", "Stage 1: fit a decomposer on a paired dataset");
    add_config_opts(train_decomp, o);
    add_data_opts(train_decomp, o);

    CLI::App* train_enhance = app.add_subcommand(
        "train-enhance", "Stage 2: fit the refiner branches behind a frozen decomposer");
    add_config_opts(train_enhance, o);
    add_data_opts(train_enhance, o);
    train_enhance->add_option("--decomposer", decomp_path, "stage-1 checkpoint")->required();

    CLI::App* enhance_cmd =
        app.add_subcommand("enhance", "Enhance every image in a directory with trained weights");
    add_config_opts(enhance_cmd, o);
    enhance_cmd->add_option("--input", input_dir, "directory of low-light images")->required();
    enhance_cmd->add_option("--decomposer", decomp_path, "stage-1 checkpoint")->required();
    enhance_cmd->add_option("--refiner-r", refiner_r, "reflectance branch checkpoint")->required();
    enhance_cmd->add_option("--refiner-l", refiner_l, "illumination branch checkpoint")->required();

    CLI::App* swap_cmd = app.add_subcommand(
        "swap", "Score the four cross-synthesis combinations of a trained decomposer");
    add_config_opts(swap_cmd, o);
    add_data_opts(swap_cmd, o);
    swap_cmd->add_option("--decomposer", decomp_path, "stage-1 checkpoint")->required();

    CLI::App* ablate_cmd = app.add_subcommand(
        "ablate", "Train each strategy and tabulate the swap-protocol PSNRs");
    add_config_opts(ablate_cmd, o);
    add_data_opts(ablate_cmd, o);
    ablate_cmd->add_option("--strategies", strategies, "comma-separated strategy list")
        ->capture_default_str();

    CLI::App* stability_cmd = app.add_subcommand(
        "stability", "Repeat stage-1 training across seeds and report loss statistics");
    add_config_opts(stability_cmd, o);
    add_data_opts(stability_cmd, o);
    stability_cmd->add_option("--runs", runs, "independent runs per strategy")
        ->capture_default_str();
    stability_cmd->add_option("--strategies", strategies, "comma-separated strategy list")
        ->capture_default_str();

    CLI::App* eval_cmd = app.add_subcommand(
        "eval", "Run the full enhancement pipeline over a dataset and report PSNR/SSIM");
    add_config_opts(eval_cmd, o);
    add_data_opts(eval_cmd, o);
    eval_cmd->add_option("--decomposer", decomp_path, "stage-1 checkpoint")->required();
    eval_cmd->add_option("--refiner-r", refiner_r, "reflectance branch checkpoint")->required();
    eval_cmd->add_option("--refiner-l", refiner_l, "illumination branch checkpoint")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train_decomp) return cmd_train_decomp(o);
        if (*train_enhance) return cmd_train_enhance(o, decomp_path);
        if (*enhance_cmd) return cmd_enhance(o, input_dir, decomp_path, refiner_r, refiner_l);
        if (*swap_cmd) return cmd_swap(o, decomp_path);
        if (*ablate_cmd) return cmd_ablate(o, strategies);
        if (*stability_cmd) return cmd_stability(o, runs, strategies);
        if (*eval_cmd) return cmd_eval(o, decomp_path, refiner_r, refiner_l);
    } catch (const ConfigError& e) {
        std::cerr << "relight: config: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "relight: data: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "relight: numeric: " << e.what() << "\n";
        return 4;
    } catch (const IoError& e) {
        std::cerr << "relight: io: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "relight: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

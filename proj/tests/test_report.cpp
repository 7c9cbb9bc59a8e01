#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "relight/errors.hpp"
#include "relight/image_io.hpp"
#include "relight/report.hpp"
#include "test_util.hpp"

using namespace relight;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(bool(f));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    return lines;
}

}  // namespace

TEST_CASE("train log csv has one row per logged step") {
    testutil::TempDir dir;
    TrainRunRecord rec;
    rec.term_names = {"recon", "smooth", "refl"};
    rec.steps.push_back(StepLog{0, 2e-4, 1.5, {1.0, 0.3, 0.2}});
    rec.steps.push_back(StepLog{1, 1.9e-4, 1.2, {0.8, 0.25, 0.15}});

    const std::string path = dir.str("log.csv");
    write_train_log_csv(rec, path);
    auto lines = read_lines(path);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "step,lr,total,recon,smooth,refl");
    CHECK(lines[1].rfind("0,", 0) == 0);
    CHECK(lines[2].rfind("1,", 0) == 0);

    // Empty record: header only.
    TrainRunRecord empty;
    empty.term_names = {"l1", "perceptual"};
    write_train_log_csv(empty, dir.str("empty.csv"));
    auto empty_lines = read_lines(dir.str("empty.csv"));
    REQUIRE(empty_lines.size() == 1);
    CHECK(empty_lines[0] == "step,lr,total,l1,perceptual");

    CHECK_THROWS_AS(write_train_log_csv(rec, "/dev/null/unwritable/log.csv"), IoError);
}

TEST_CASE("stability csvs: one per strategy plus the final-metric summary") {
    testutil::TempDir dir;
    StabilityReport rep;
    rep.n_runs = 3;
    rep.epoch_steps = 50;
    StabilityReport::PerStrategy a;
    a.strategy = Strategy::full;
    a.epoch_mean_loss = {1.0, 0.8, 0.6};
    a.epoch_var_loss = {0.01, 0.02, 0.005};
    a.final_metric_mean = 31.5;
    a.final_metric_var = 0.25;
    StabilityReport::PerStrategy b = a;
    b.strategy = Strategy::v1_latent_mult;
    rep.rows = {a, b};

    auto written = write_stability_csv(rep, dir.str());
    REQUIRE(written.size() == 3);
    CHECK(fs::exists(dir.str("stability_full.csv")));
    CHECK(fs::exists(dir.str("stability_v1_latent_mult.csv")));
    CHECK(fs::exists(dir.str("stability_final_metric.csv")));

    auto lines = read_lines(dir.str("stability_full.csv"));
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "epoch,mean_loss,var_loss");
    CHECK(lines[1].rfind("0,1,", 0) == 0);

    auto final_lines = read_lines(dir.str("stability_final_metric.csv"));
    REQUIRE(final_lines.size() == 3);
    CHECK(final_lines[0] == "strategy,final_psnr_mean,final_psnr_var,runs,epoch_steps");
    CHECK(final_lines[1].rfind("full,31.5,0.25,3,50", 0) == 0);
}

TEST_CASE("swap csv mirrors the four psnr columns") {
    testutil::TempDir dir;
    SwapRow row;
    row.id = "full";
    row.result.psnr_db = {10.0, 20.0, 30.0, 40.0};
    write_swap_csv({row}, dir.str("swap.csv"));
    auto lines = read_lines(dir.str("swap.csv"));
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "id,psnr_ll,psnr_ln,psnr_nl,psnr_nn,mean");
    CHECK(lines[1] == "full,10,20,30,40,25");
}

TEST_CASE("metric csv and text summary") {
    testutil::TempDir dir;
    MetricReport rep;
    rep.per_image.push_back({"scene0", 30.0, 0.9});
    rep.per_image.push_back({"scene1", 32.0, 0.95});
    rep.mean_psnr = 31.0;
    rep.std_psnr = 1.0;
    rep.mean_ssim = 0.925;
    rep.std_ssim = 0.025;

    write_metric_csv(rep, dir.str("m.csv"));
    auto lines = read_lines(dir.str("m.csv"));
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "image_id,psnr,ssim");
    CHECK(lines[1] == "scene0,30,0.9");

    write_metric_text(rep, dir.str("m.txt"));
    std::ifstream f(dir.str("m.txt"));
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string text = ss.str();
    CHECK(text.find("scene0") != std::string::npos);
    CHECK(text.find("mean=31.0000") != std::string::npos);
    CHECK(text.find("images: 2") != std::string::npos);
}

TEST_CASE("line plot renders a decodable png even for edge cases") {
    testutil::TempDir dir;
    PlotSeries s1{"a", {1.0, 0.5, 0.25, 0.125, 0.1}};
    PlotSeries s2{"b", {0.9, 0.7, 0.65, 0.6, 0.58}};
    write_line_plot_png({s1, s2}, dir.str("plot.png"));
    PixelImage img = read_image(dir.str("plot.png"));
    CHECK(img.height() == 400);
    CHECK(img.width() == 640);
    // Something was drawn: not all pixels are the white background.
    CHECK(img.data.min() < 1.0);

    // Constant series (degenerate vertical range) and empty series survive.
    write_line_plot_png({PlotSeries{"c", {2.0, 2.0, 2.0}}}, dir.str("flat.png"));
    CHECK_NOTHROW((void)read_image(dir.str("flat.png")));
    write_line_plot_png({}, dir.str("none.png"));
    CHECK_NOTHROW((void)read_image(dir.str("none.png")));
}

TEST_CASE("emit_plot_data writes the csv and a sibling png") {
    testutil::TempDir dir;
    TrainRunRecord rec;
    rec.term_names = {"recon", "smooth", "refl"};
    for (int i = 0; i < 5; ++i)
        rec.steps.push_back(StepLog{i, 1e-4, 1.0 / (i + 1), {0.5, 0.2, 0.1}});
    emit_plot_data(rec, dir.str("train.csv"));
    CHECK(fs::exists(dir.str("train.csv")));
    CHECK(fs::exists(dir.str("train.png")));

    StabilityReport rep;
    rep.n_runs = 1;
    rep.epoch_steps = 10;
    StabilityReport::PerStrategy row;
    row.strategy = Strategy::full;
    row.epoch_mean_loss = {1.0, 0.5};
    row.epoch_var_loss = {0.0, 0.0};
    rep.rows = {row};
    emit_plot_data(rep, dir.str());
    CHECK(fs::exists(dir.str("stability_full.csv")));
    CHECK(fs::exists(dir.str("stability_mean_loss.png")));
}

#include "relight/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "relight/errors.hpp"
#include "relight/image_io.hpp"

namespace relight {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << std::setprecision(12);
    return f;
}

void finish(std::ofstream& f, const std::string& path) {
    f.flush();
    if (!f) throw IoError("short write on '" + path + "'");
}

constexpr double kPalette[6][3] = {
    {0.85, 0.20, 0.20}, {0.15, 0.35, 0.80}, {0.10, 0.60, 0.25},
    {0.85, 0.55, 0.10}, {0.55, 0.20, 0.70}, {0.15, 0.65, 0.65},
};

void draw_line(Tensor& canvas, int x0, int y0, int x1, int y1, const double* rgb) {
    const int h = canvas.dim(0), w = canvas.dim(1);
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy, x = x0, y = y0;
    while (true) {
        if (y >= 0 && y < h && x >= 0 && x < w)
            for (int c = 0; c < 3; ++c) canvas.at(y, x, c) = rgb[c];
        if (x == x1 && y == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y += sy;
        }
    }
}

}  // namespace

void write_train_log_csv(const TrainRunRecord& rec, const std::string& path) {
    auto f = open_out(path);
    f << "step,lr,total";
    for (const auto& name : rec.term_names) f << "," << name;
    f << "\n";
    for (const auto& s : rec.steps) {
        f << s.step << "," << s.lr << "," << s.total;
        for (double v : s.terms) f << "," << v;
        f << "\n";
    }
    finish(f, path);
}

std::vector<std::string> write_stability_csv(const StabilityReport& rep, const std::string& dir) {
    std::vector<std::string> written;
    for (const auto& row : rep.rows) {
        const std::string path = dir + "/stability_" + to_string(row.strategy) + ".csv";
        auto f = open_out(path);
        f << "epoch,mean_loss,var_loss\n";
        for (std::size_t e = 0; e < row.epoch_mean_loss.size(); ++e)
            f << e << "," << row.epoch_mean_loss[e] << "," << row.epoch_var_loss[e] << "\n";
        finish(f, path);
        written.push_back(path);
    }
    const std::string summary = dir + "/stability_final_metric.csv";
    auto f = open_out(summary);
    f << "strategy,final_psnr_mean,final_psnr_var,runs,epoch_steps\n";
    for (const auto& row : rep.rows)
        f << to_string(row.strategy) << "," << row.final_metric_mean << ","
          << row.final_metric_var << "," << rep.n_runs << "," << rep.epoch_steps << "\n";
    finish(f, summary);
    written.push_back(summary);
    return written;
}

void write_swap_csv(const std::vector<SwapRow>& rows, const std::string& path) {
    auto f = open_out(path);
    f << "id,psnr_ll,psnr_ln,psnr_nl,psnr_nn,mean\n";
    for (const auto& r : rows) {
        f << r.id;
        for (double v : r.result.psnr_db) f << "," << v;
        f << "," << r.result.mean_psnr() << "\n";
    }
    finish(f, path);
}

void write_metric_csv(const MetricReport& rep, const std::string& path) {
    auto f = open_out(path);
    f << "image_id,psnr,ssim\n";
    for (const auto& r : rep.per_image) f << r.scene_id << "," << r.psnr << "," << r.ssim << "\n";
    finish(f, path);
}

void write_metric_text(const MetricReport& rep, const std::string& path) {
    auto f = open_out(path);
    f << std::fixed << std::setprecision(4);
    for (const auto& r : rep.per_image)
        f << "image " << r.scene_id << ": psnr=" << r.psnr << " dB, ssim=" << r.ssim << "\n";
    f << "---\n"
      << "images: " << rep.per_image.size() << "\n"
      << "psnr: mean=" << rep.mean_psnr << " std=" << rep.std_psnr << "\n"
      << "ssim: mean=" << rep.mean_ssim << " std=" << rep.std_ssim << "\n"
      << "metric domain: RGB floats in [0,1], no 8-bit requantization\n";
    finish(f, path);
}

void write_line_plot_png(const std::vector<PlotSeries>& series, const std::string& path) {
    const int width = 640, height = 400, margin = 24;
    Tensor canvas = Tensor::full({height, width, 3}, 1.0);

    double lo = 0.0, hi = 1.0;
    bool have = false;
    std::size_t max_len = 0;
    for (const auto& s : series)
        for (double v : s.values) {
            if (!std::isfinite(v)) continue;
            if (!have) {
                lo = hi = v;
                have = true;
            }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    for (const auto& s : series) max_len = std::max(max_len, s.values.size());
    if (hi <= lo) hi = lo + 1.0;

    const double black[3] = {0.0, 0.0, 0.0};
    draw_line(canvas, margin, height - margin, width - margin, height - margin, black);
    draw_line(canvas, margin, margin, margin, height - margin, black);

    if (max_len >= 2) {
        for (std::size_t si = 0; si < series.size(); ++si) {
            const double* rgb = kPalette[si % 6];
            const auto& vals = series[si].values;
            if (vals.size() < 2) continue;
            auto to_xy = [&](std::size_t i, double v) {
                const double fx = static_cast<double>(i) / static_cast<double>(max_len - 1);
                const double fy = (v - lo) / (hi - lo);
                const int x = margin + static_cast<int>(fx * (width - 2 * margin));
                const int y = height - margin - static_cast<int>(fy * (height - 2 * margin));
                return std::pair<int, int>{x, y};
            };
            for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
                if (!std::isfinite(vals[i]) || !std::isfinite(vals[i + 1])) continue;
                auto [x0, y0] = to_xy(i, vals[i]);
                auto [x1, y1] = to_xy(i + 1, vals[i + 1]);
                draw_line(canvas, x0, y0, x1, y1, rgb);
            }
        }
    }
    write_png(path, PixelImage{std::move(canvas)});
}

namespace {

std::string plot_path_for(const std::string& csv_path) {
    const auto dot = csv_path.find_last_of('.');
    return (dot == std::string::npos ? csv_path : csv_path.substr(0, dot)) + ".png";
}

void try_plot(const std::vector<PlotSeries>& series, const std::string& path) {
    try {
        write_line_plot_png(series, path);
    } catch (const std::exception&) {
        // The plot is a convenience artifact; the CSV is the contract.
    }
}

}  // namespace

void emit_plot_data(const TrainRunRecord& rec, const std::string& csv_path) {
    write_train_log_csv(rec, csv_path);
    PlotSeries total{"total", {}};
    for (const auto& s : rec.steps) total.values.push_back(s.total);
    try_plot({total}, plot_path_for(csv_path));
}

void emit_plot_data(const StabilityReport& rep, const std::string& dir) {
    write_stability_csv(rep, dir);
    std::vector<PlotSeries> series;
    for (const auto& row : rep.rows)
        series.push_back(PlotSeries{to_string(row.strategy), row.epoch_mean_loss});
    try_plot(series, dir + "/stability_mean_loss.png");
}

}  // namespace relight

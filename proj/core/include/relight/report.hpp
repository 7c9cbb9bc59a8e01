#pragma once

#include <string>
#include <vector>

#include "relight/evaluator.hpp"
#include "relight/trainer.hpp"

namespace relight {

// CSV artifacts. All writers emit a stable header row and throw IoError on
// unwritable paths.
void write_train_log_csv(const TrainRunRecord& rec, const std::string& path);

// One file per strategy: <dir>/stability_<strategy>.csv with columns
// epoch,mean_loss,var_loss; plus <dir>/stability_final_metric.csv. Returns
// the paths written.
std::vector<std::string> write_stability_csv(const StabilityReport& rep, const std::string& dir);

struct SwapRow {
    std::string id;  // scene or strategy label
    SwapResult result;
};
void write_swap_csv(const std::vector<SwapRow>& rows, const std::string& path);

void write_metric_csv(const MetricReport& rep, const std::string& path);
void write_metric_text(const MetricReport& rep, const std::string& path);

// Minimal rasterized line plot (no text): each series is scaled into a
// shared axis box and drawn in its palette color.
struct PlotSeries {
    std::string name;
    std::vector<double> values;
};
void write_line_plot_png(const std::vector<PlotSeries>& series, const std::string& path);

// CSV (always) + best-effort PNG plot next to it (never fails the run).
void emit_plot_data(const TrainRunRecord& rec, const std::string& csv_path);
void emit_plot_data(const StabilityReport& rep, const std::string& dir);

}  // namespace relight

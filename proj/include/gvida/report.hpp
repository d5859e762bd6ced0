#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gvida/trainer.hpp"

namespace gvida::report {

// One finished training run, as recovered from its run directory.
struct RunRecord {
    std::string variant;
    std::string task;
    std::uint64_t seed = 0;
    double accuracy = 0.0;  // final target accuracy from the metrics log
};

// Per (variant, task) aggregate over the seeds actually present.
struct VariantSummary {
    std::string variant;
    std::string task;
    std::vector<std::uint64_t> seeds;
    std::vector<double> accuracies;
    double mean = 0.0;
    double stddev = 0.0;  // population form, so one seed reports 0
};

std::vector<VariantSummary> summarize(const std::vector<RunRecord>& runs);

// Scans root for run directories holding resolved_config.json + metrics.csv.
// Directories missing either file are skipped silently.
std::vector<RunRecord> collect_runs(const std::string& root);

// CSV columns: variant,task,seed,accuracy,mean,std where mean/std repeat the
// group aggregate on every row of the group.
void write_summary_csv(const std::vector<RunRecord>& runs, const std::string& path);

std::string render_table(const std::vector<VariantSummary>& rows);

using Series = std::pair<std::string, std::vector<double>>;

// Self-contained SVG line chart, one polyline per series over x = 0..n-1.
void write_curves_svg(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

void write_loss_curves_svg(const std::vector<train::EpochMetrics>& rows, const std::string& path);
void write_accuracy_curve_svg(const std::vector<train::EpochMetrics>& rows,
                              const std::string& path);

}  // namespace gvida::report

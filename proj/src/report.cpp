#include "gvida/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "gvida/errors.hpp"

namespace gvida::report {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<VariantSummary> summarize(const std::vector<RunRecord>& runs) {
    std::map<std::pair<std::string, std::string>, VariantSummary> groups;
    for (const auto& r : runs) {
        auto& g = groups[{r.variant, r.task}];
        g.variant = r.variant;
        g.task = r.task;
        g.seeds.push_back(r.seed);
        g.accuracies.push_back(r.accuracy);
    }
    std::vector<VariantSummary> out;
    for (auto& [key, g] : groups) {
        const double n = static_cast<double>(g.accuracies.size());
        double mean = 0.0;
        for (double a : g.accuracies) mean += a;
        mean /= n;
        double var = 0.0;
        for (double a : g.accuracies) var += (a - mean) * (a - mean);
        g.mean = mean;
        g.stddev = std::sqrt(var / n);
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<RunRecord> collect_runs(const std::string& root) {
    if (!fs::is_directory(root)) throw ConfigError("'" + root + "' is not a directory");
    std::vector<RunRecord> out;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        const fs::path cfg_path = dir / "resolved_config.json";
        const fs::path metrics_path = dir / "metrics.csv";
        if (!fs::is_regular_file(cfg_path) || !fs::is_regular_file(metrics_path)) continue;
        std::ifstream in(cfg_path);
        json cfg;
        try {
            in >> cfg;
        } catch (const json::exception& e) {
            throw FormatError(cfg_path.string() + ": " + e.what());
        }
        RunRecord r;
        r.variant = cfg.at("variant").at("name").get<std::string>();
        r.task = cfg.at("data").value("name", "task");
        r.seed = cfg.at("variant").at("seed").get<std::uint64_t>();
        const auto rows = train::read_metrics_csv(metrics_path.string());
        if (rows.empty()) throw FormatError(metrics_path.string() + ": no metric rows");
        r.accuracy = rows.back().acc_target;
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

std::string fmt(double v, const char* spec = "%.17g") {
    char buf[40];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace

void write_summary_csv(const std::vector<RunRecord>& runs, const std::string& path) {
    const auto groups = summarize(runs);
    std::map<std::pair<std::string, std::string>, const VariantSummary*> lookup;
    for (const auto& g : groups) lookup[{g.variant, g.task}] = &g;

    std::vector<RunRecord> sorted = runs;
    std::sort(sorted.begin(), sorted.end(), [](const RunRecord& a, const RunRecord& b) {
        return std::tie(a.variant, a.task, a.seed) < std::tie(b.variant, b.task, b.seed);
    });

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out << "variant,task,seed,accuracy,mean,std\n";
    for (const auto& r : sorted) {
        const VariantSummary* g = lookup.at({r.variant, r.task});
        out << r.variant << ',' << r.task << ',' << r.seed << ',' << fmt(r.accuracy) << ','
            << fmt(g->mean) << ',' << fmt(g->stddev) << '\n';
    }
    if (!out) throw FormatError("short write to '" + path + "'");
}

std::string render_table(const std::vector<VariantSummary>& rows) {
    std::vector<std::array<std::string, 5>> cells;
    cells.push_back({"variant", "task", "seeds", "mean_acc", "std"});
    for (const auto& g : rows) {
        std::string seeds;
        for (size_t i = 0; i < g.seeds.size(); ++i) {
            if (i) seeds += ' ';
            seeds += std::to_string(g.seeds[i]);
        }
        cells.push_back({g.variant, g.task, seeds, fmt(g.mean, "%.4f"), fmt(g.stddev, "%.4f")});
    }
    std::array<size_t, 5> width{};
    for (const auto& row : cells)
        for (size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
    std::string out;
    for (size_t i = 0; i < cells.size(); ++i) {
        for (size_t j = 0; j < 5; ++j) {
            out += cells[i][j];
            if (j + 1 < 5) out.append(width[j] - cells[i][j].size() + 2, ' ');
        }
        out += '\n';
        if (i == 0) {
            for (size_t j = 0; j < 5; ++j) {
                out.append(width[j], '-');
                if (j + 1 < 5) out.append(2, ' ');
            }
            out += '\n';
        }
    }
    return out;
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string px(double v) { return fmt(v, "%.2f"); }

}  // namespace

void write_curves_svg(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
    if (series.empty()) throw ParameterError("write_curves_svg: no series");
    size_t n = 0;
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const auto& [name, ys] : series) {
        n = std::max(n, ys.size());
        for (double y : ys) {
            if (!std::isfinite(y)) throw ParameterError("write_curves_svg: non-finite value");
            lo = first ? y : std::min(lo, y);
            hi = first ? y : std::max(hi, y);
            first = false;
        }
    }
    if (n < 1) throw ParameterError("write_curves_svg: empty series");
    if (hi - lo < 1e-12) {
        hi += 0.5;
        lo -= 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    const double W = 720, H = 440;
    const double ml = 70, mr = 170, mt = 45, mb = 55;
    const double pw = W - ml - mr, ph = H - mt - mb;
    const double xmax = n > 1 ? static_cast<double>(n - 1) : 1.0;
    const auto X = [&](double e) { return ml + pw * (e / xmax); };
    const auto Y = [&](double v) { return mt + ph * (1.0 - (v - lo) / (hi - lo)); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"25\" text-anchor=\"middle\" font-family=\"sans-serif\""
        << " font-size=\"15\">" << title << "</text>\n";

    svg << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
        << mt + ph << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\"/>\n";

    const int ticks = 5;
    for (int i = 0; i <= ticks; ++i) {
        const double fx = static_cast<double>(i) / ticks;
        const double ex = fx * xmax;
        const double gx = X(ex);
        svg << "<line x1=\"" << px(gx) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(gx)
            << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << px(gx) << "\" y=\"" << mt + ph + 20
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << fmt(ex, "%.4g") << "</text>\n";
        const double vy = lo + fx * (hi - lo);
        const double gy = Y(vy);
        svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << px(gy) << "\" x2=\"" << ml << "\" y2=\""
            << px(gy) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << ml - 9 << "\" y=\"" << px(gy + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << fmt(vy, "%.4g") << "</text>\n";
    }
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
        << "</text>\n";
    svg << "<text x=\"18\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\""
        << " transform=\"rotate(-90 18 " << mt + ph / 2 << ")\">" << y_label << "</text>\n";

    for (size_t s = 0; s < series.size(); ++s) {
        const auto& [name, ys] = series[s];
        const char* color = kPalette[s % kPaletteSize];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < ys.size(); ++i) {
            if (i) svg << ' ';
            svg << px(X(static_cast<double>(i))) << ',' << px(Y(ys[i]));
        }
        svg << "\"/>\n";
        const double ly = mt + 14 + 18 * static_cast<double>(s);
        svg << "<line x1=\"" << ml + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << ml + pw + 34
            << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << ml + pw + 40 << "\" y=\"" << ly
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << name << "</text>\n";
    }
    svg << "</svg>\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out << svg.str();
    if (!out) throw FormatError("short write to '" + path + "'");
}

void write_loss_curves_svg(const std::vector<train::EpochMetrics>& rows, const std::string& path) {
    if (rows.empty()) throw ParameterError("no metric rows to plot");
    std::vector<Series> series(6);
    series[0].first = "l1";
    series[1].first = "l2";
    series[2].first = "l3";
    series[3].first = "l4";
    series[4].first = "l5";
    series[5].first = "total";
    for (const auto& r : rows) {
        series[0].second.push_back(r.l1);
        series[1].second.push_back(r.l2);
        series[2].second.push_back(r.l3);
        series[3].second.push_back(r.l4);
        series[4].second.push_back(r.l5);
        series[5].second.push_back(r.total);
    }
    write_curves_svg(path, "loss terms per epoch", "epoch", "loss", series);
}

void write_accuracy_curve_svg(const std::vector<train::EpochMetrics>& rows,
                              const std::string& path) {
    if (rows.empty()) throw ParameterError("no metric rows to plot");
    Series acc{"target accuracy", {}};
    for (const auto& r : rows) acc.second.push_back(r.acc_target);
    write_curves_svg(path, "target accuracy per epoch", "epoch", "accuracy", {acc});
}

}  // namespace gvida::report

#include "gvida/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "gvida/errors.hpp"

namespace gvida::data {

namespace {

constexpr double kCircleRadius = 3.0;
constexpr double kClusterStd = 0.4;

Mat class_means(int class_count, int dims) {
    Mat means = Mat::Zero(class_count, dims);
    for (int c = 0; c < class_count; ++c) {
        const double angle = 2.0 * std::numbers::pi * c / class_count;
        means(c, 0) = kCircleRadius * std::cos(angle);
        means(c, 1) = kCircleRadius * std::sin(angle);
    }
    return means;
}

Mat apply_shift(const Mat& base, const std::vector<int>& labels, const Mat& means,
                const ShiftSpec& shift) {
    Mat out = base;
    const auto n = base.rows();
    switch (shift.kind) {
        case ShiftKind::rotation: {
            const double c = std::cos(shift.magnitude);
            const double s = std::sin(shift.magnitude);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double x = base(i, 0), y = base(i, 1);
                out(i, 0) = c * x - s * y;
                out(i, 1) = s * x + c * y;
            }
            break;
        }
        case ShiftKind::affine: {
            // Shear plus translation in the leading two dims.
            const double m = shift.magnitude;
            for (Eigen::Index i = 0; i < n; ++i) {
                out(i, 0) = base(i, 0) + m * base(i, 1) + m;
                out(i, 1) = base(i, 1) + m;
            }
            break;
        }
        case ShiftKind::class_conditional_offset: {
            // Each class slides radially, away from the cluster circle's center.
            for (Eigen::Index i = 0; i < n; ++i) {
                Eigen::RowVectorXd dir = means.row(labels[static_cast<size_t>(i)]);
                const double norm = dir.norm();
                if (norm > 0.0) dir /= norm;
                out.row(i) += shift.magnitude * dir;
            }
            break;
        }
    }
    return out;
}

void format_double(std::string& out, double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
    out.append(buf, static_cast<size_t>(len));
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

double parse_cell(const std::string& cell, int row, const char* what) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = first + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw FormatError("row " + std::to_string(row) + ": non-numeric " + what + " '" + cell + "'");
    return v;
}

}  // namespace

void DomainDataset::validate() const {
    if (rows() < 1) throw ParameterError("dataset '" + domain_tag + "' is empty");
    if (class_count < 1) throw ParameterError("dataset class_count must be >= 1");
    if (static_cast<int>(labels.size()) != rows())
        throw ParameterError("dataset has " + std::to_string(rows()) + " rows but " +
                             std::to_string(labels.size()) + " labels");
    if (!features.allFinite()) throw NumericError("dataset '" + domain_tag + "' has non-finite features");
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= class_count)
            throw ParameterError("row " + std::to_string(i + 1) + ": label " +
                                 std::to_string(labels[i]) + " outside [0, " +
                                 std::to_string(class_count) + ")");
    }
}

ShiftKind shift_kind_from_string(const std::string& name) {
    if (name == "rotation") return ShiftKind::rotation;
    if (name == "affine") return ShiftKind::affine;
    if (name == "class_conditional_offset") return ShiftKind::class_conditional_offset;
    throw ConfigError("unknown shift kind '" + name + "'");
}

std::string to_string(ShiftKind kind) {
    switch (kind) {
        case ShiftKind::rotation: return "rotation";
        case ShiftKind::affine: return "affine";
        case ShiftKind::class_conditional_offset: return "class_conditional_offset";
    }
    return "rotation";
}

std::pair<DomainDataset, DomainDataset> generate_pair(int class_count, int n_per_class, int dims,
                                                      const ShiftSpec& shift, std::uint64_t seed) {
    if (class_count < 2) throw ParameterError("generate_pair needs class_count >= 2");
    if (n_per_class < 1) throw ParameterError("generate_pair needs n_per_class >= 1");
    if (dims < 2) throw ParameterError("generate_pair needs dims >= 2");
    if (shift.noise_std < 0.0) throw ParameterError("noise_std must be >= 0");

    const int n = class_count * n_per_class;
    const Mat means = class_means(class_count, dims);

    Mat base(n, dims);
    std::vector<int> labels(static_cast<size_t>(n));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    int row = 0;
    for (int c = 0; c < class_count; ++c) {
        for (int k = 0; k < n_per_class; ++k, ++row) {
            labels[static_cast<size_t>(row)] = c;
            for (int j = 0; j < dims; ++j) base(row, j) = means(c, j) + kClusterStd * unit(rng);
        }
    }

    DomainDataset source{base, labels, "source", class_count};
    Mat shifted = apply_shift(base, labels, means, shift);
    if (shift.noise_std > 0.0) {
        std::mt19937_64 noise_rng(shift.seed);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < dims; ++j) shifted(i, j) += shift.noise_std * unit(noise_rng);
    }
    DomainDataset target{std::move(shifted), labels, "target", class_count};
    return {std::move(source), std::move(target)};
}

void save_dataset(const DomainDataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");

    std::string text;
    text.reserve(static_cast<size_t>(ds.rows()) * static_cast<size_t>(ds.dims()) * 24);
    for (int j = 0; j < ds.dims(); ++j) {
        text += 'f';
        text += std::to_string(j);
        text += ',';
    }
    text += "label,domain\n";
    for (int i = 0; i < ds.rows(); ++i) {
        for (int j = 0; j < ds.dims(); ++j) {
            format_double(text, ds.features(i, j));
            text += ',';
        }
        text += std::to_string(ds.labels[static_cast<size_t>(i)]);
        text += ',';
        text += ds.domain_tag;
        text += '\n';
    }
    out << text;
    if (!out) throw FormatError("short write to '" + path + "'");
}

DomainDataset load_dataset(const std::string& path, int expected_class_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw FormatError("'" + path + "' is empty");
    const auto header = split_line(line);
    const int d = static_cast<int>(header.size()) - 2;
    if (d < 1) throw FormatError("malformed header in '" + path + "'");
    for (int j = 0; j < d; ++j)
        if (header[static_cast<size_t>(j)] != "f" + std::to_string(j))
            throw FormatError("malformed header in '" + path + "': expected f" + std::to_string(j) +
                              ", got '" + header[static_cast<size_t>(j)] + "'");
    if (header[static_cast<size_t>(d)] != "label" || header[static_cast<size_t>(d + 1)] != "domain")
        throw FormatError("malformed header in '" + path + "': expected trailing label,domain");

    std::vector<double> values;
    std::vector<int> labels;
    std::string domain;
    int row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row;
        const auto cells = split_line(line);
        if (static_cast<int>(cells.size()) != d + 2)
            throw FormatError("row " + std::to_string(row) + ": expected " + std::to_string(d + 2) +
                              " cells, got " + std::to_string(cells.size()));
        for (int j = 0; j < d; ++j) values.push_back(parse_cell(cells[static_cast<size_t>(j)], row, "feature"));
        const double label_val = parse_cell(cells[static_cast<size_t>(d)], row, "label");
        const int label = static_cast<int>(label_val);
        if (label != label_val || label < 0)
            throw FormatError("row " + std::to_string(row) + ": label must be a non-negative integer");
        if (expected_class_count > 0 && label >= expected_class_count)
            throw FormatError("row " + std::to_string(row) + ": label " + std::to_string(label) +
                              " outside [0, " + std::to_string(expected_class_count) + ")");
        labels.push_back(label);
        const std::string& dom = cells[static_cast<size_t>(d + 1)];
        if (row == 1) domain = dom;
        else if (dom != domain)
            throw FormatError("row " + std::to_string(row) + ": mixed domain tags '" + domain +
                              "' and '" + dom + "'");
    }
    if (row == 0) throw FormatError("'" + path + "' has no data rows");

    DomainDataset ds;
    ds.features = Eigen::Map<Mat>(values.data(), d, row).transpose();
    ds.labels = std::move(labels);
    ds.domain_tag = domain;
    ds.class_count = expected_class_count > 0
                         ? expected_class_count
                         : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    ds.validate();
    return ds;
}

std::vector<Batch> batches(const DomainDataset& ds, int batch_size, std::uint64_t seed, bool shuffle) {
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    ds.validate();

    std::vector<int> order(static_cast<size_t>(ds.rows()));
    std::iota(order.begin(), order.end(), 0);
    if (shuffle) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }

    std::vector<Batch> out;
    const int n = ds.rows();
    for (int start = 0; start < n; start += batch_size) {
        const int b = std::min(batch_size, n - start);
        Batch batch;
        batch.features.resize(b, ds.dims());
        batch.labels.resize(static_cast<size_t>(b));
        batch.indices.resize(static_cast<size_t>(b));
        for (int i = 0; i < b; ++i) {
            const int src = order[static_cast<size_t>(start + i)];
            batch.features.row(i) = ds.features.row(src);
            batch.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(src)];
            batch.indices[static_cast<size_t>(i)] = src;
        }
        out.push_back(std::move(batch));
    }
    return out;
}

}  // namespace gvida::data

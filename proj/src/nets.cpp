#include "gvida/nets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "gvida/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace gvida::nets {

using json = nlohmann::json;

void NetworkSpec::validate() const {
    if (layers.empty()) throw ParameterError("network has no layers");
    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        if (l.in < 1 || l.out < 1) throw ParameterError("layer dims must be >= 1");
        if (l.dropout < 0.0 || l.dropout >= 1.0) throw ParameterError("dropout must lie in [0, 1)");
        if (i > 0 && layers[i - 1].out != l.in)
            throw ParameterError("layer " + std::to_string(i) + " input dim " + std::to_string(l.in) +
                                 " does not chain from previous output " +
                                 std::to_string(layers[i - 1].out));
        if (l.act == Activation::softmax && i + 1 != layers.size())
            throw ParameterError("softmax is only allowed on the final layer");
    }
}

Mat& ParamStore::at(const std::string& name) {
    for (auto& t : tensors)
        if (t.name == name) return t.value;
    throw ParameterError("no parameter tensor named '" + name + "'");
}

const Mat& ParamStore::at(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t.value;
    throw ParameterError("no parameter tensor named '" + name + "'");
}

bool ParamStore::has(const std::string& name) const {
    return std::any_of(tensors.begin(), tensors.end(),
                       [&](const NamedTensor& t) { return t.name == name; });
}

int ParamStore::scalar_count() const {
    return std::accumulate(tensors.begin(), tensors.end(), 0,
                           [](int acc, const NamedTensor& t) { return acc + static_cast<int>(t.value.size()); });
}

double ParamStore::get_flat(int i) const {
    for (const auto& t : tensors) {
        if (i < t.value.size()) return t.value(i / t.value.cols(), i % t.value.cols());
        i -= static_cast<int>(t.value.size());
    }
    throw ParameterError("flat index out of range");
}

void ParamStore::set_flat(int i, double v) {
    for (auto& t : tensors) {
        if (i < t.value.size()) {
            t.value(i / t.value.cols(), i % t.value.cols()) = v;
            return;
        }
        i -= static_cast<int>(t.value.size());
    }
    throw ParameterError("flat index out of range");
}

ParamStore ParamStore::zeros_like() const {
    ParamStore out;
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors)
        out.tensors.push_back({t.name, Mat::Zero(t.value.rows(), t.value.cols())});
    return out;
}

void add_tensor(ParamStore& store, const std::string& name, int rows, int cols, double init_bound,
                std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-init_bound, init_bound);
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
    store.tensors.push_back({name, std::move(m)});
}

void add_network_params(ParamStore& store, const std::string& prefix, const NetworkSpec& spec,
                        std::mt19937_64& rng) {
    spec.validate();
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
        add_tensor(store, prefix + ".w" + std::to_string(i), l.in, l.out, bound, rng);
        add_tensor(store, prefix + ".b" + std::to_string(i), 1, l.out, bound, rng);
    }
}

Mat dropout_mask(int rows, int cols, double rate, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep = 1.0 - rate;
    Mat mask(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) mask(i, j) = u(rng) < keep ? 1.0 / keep : 0.0;
    return mask;
}

namespace {

Mat apply_activation(const Mat& z, Activation act) {
    switch (act) {
        case Activation::identity: return z;
        case Activation::rectifier: return z.cwiseMax(0.0);
        case Activation::sigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
        case Activation::softmax: {
            Mat shifted = z.colwise() - z.rowwise().maxCoeff();
            Mat e = shifted.array().exp().matrix();
            return e.array().colwise() / e.rowwise().sum().array();
        }
    }
    return z;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string to_string(Activation act) {
    switch (act) {
        case Activation::identity: return "identity";
        case Activation::rectifier: return "rectifier";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softmax: return "softmax";
    }
    return "identity";
}

Activation activation_from_string(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "rectifier") return Activation::rectifier;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "softmax") return Activation::softmax;
    throw ParameterError("unknown activation '" + name + "'");
}

Mat forward(const NetworkSpec& spec, const ParamStore& params, const std::string& prefix,
            const Mat& x, Mode mode, std::uint64_t dropout_seed) {
    spec.validate();
    if (x.cols() != spec.in_dim())
        throw ParameterError("forward: input has " + std::to_string(x.cols()) + " dims, network '" +
                             prefix + "' expects " + std::to_string(spec.in_dim()));
    Mat h = x;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const Mat& w = params.at(prefix + ".w" + std::to_string(i));
        const Mat& b = params.at(prefix + ".b" + std::to_string(i));
        h = ((h * w).rowwise() + b.row(0)).eval();
        h = apply_activation(h, l.act);
        if (mode == Mode::train && l.dropout > 0.0)
            h = h.cwiseProduct(dropout_mask(static_cast<int>(h.rows()), static_cast<int>(h.cols()),
                                            l.dropout, mix_seed(dropout_seed, i)));
    }
    return h;
}

ad::Var BoundParams::at(const std::string& name) const {
    if (!store) throw ParameterError("BoundParams not bound to a store");
    for (size_t i = 0; i < store->tensors.size(); ++i)
        if (store->tensors[i].name == name) return vars[i];
    throw ParameterError("no bound parameter named '" + name + "'");
}

BoundParams bind(ad::Tape& t, const ParamStore& store) {
    BoundParams bp;
    bp.store = &store;
    bp.vars.reserve(store.tensors.size());
    for (const auto& tensor : store.tensors) bp.vars.push_back(t.leaf(tensor.value));
    return bp;
}

ad::Var forward_on_tape(ad::Tape& t, const NetworkSpec& spec, const BoundParams& params,
                        const std::string& prefix, ad::Var x, Mode mode,
                        std::uint64_t dropout_seed) {
    spec.validate();
    ad::Var h = x;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        ad::Var w = params.at(prefix + ".w" + std::to_string(i));
        ad::Var b = params.at(prefix + ".b" + std::to_string(i));
        h = t.add_row(t.matmul(h, w), b);
        switch (l.act) {
            case Activation::identity: break;
            case Activation::rectifier: h = t.relu(h); break;
            case Activation::sigmoid: h = t.sigmoid(h); break;
            case Activation::softmax: h = t.softmax_rows(h); break;
        }
        if (mode == Mode::train && l.dropout > 0.0) {
            const auto& shape = t.val(h);
            h = t.mul(h, t.constant(dropout_mask(static_cast<int>(shape.rows()),
                                                 static_cast<int>(shape.cols()), l.dropout,
                                                 mix_seed(dropout_seed, i))));
        }
    }
    return h;
}

double check_gradients(const LossFn& loss, const ParamStore& params, const GradCheckOptions& opts) {
    if (opts.epsilon < 1e-6 || opts.epsilon > 1e-3)
        throw ParameterError("gradient check epsilon must lie in [1e-6, 1e-3]");

    ParamStore work = params;
    ParamStore grads = params.zeros_like();
    if (!std::isfinite(loss(work, &grads)))
        throw NumericError("gradient check: loss is not finite at the probe point");

    const int total = work.scalar_count();
    std::vector<int> coords(static_cast<size_t>(total));
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_probes > 0 && opts.max_probes < total) {
        std::mt19937_64 rng(opts.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(static_cast<size_t>(opts.max_probes));
    }

    double max_rel = 0.0;
    for (int c : coords) {
        const double saved = work.get_flat(c);
        work.set_flat(c, saved + opts.epsilon);
        const double hi = loss(work, nullptr);
        work.set_flat(c, saved - opts.epsilon);
        const double lo = loss(work, nullptr);
        work.set_flat(c, saved);
        if (!std::isfinite(hi) || !std::isfinite(lo))
            throw NumericError("gradient check: loss is not finite near the probe point");
        const double fd = (hi - lo) / (2.0 * opts.epsilon);
        const double an = grads.get_flat(c);
        const double rel = std::abs(an - fd) / (std::abs(an) + std::abs(fd) + 1e-12);
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

SgdOptimizer::SgdOptimizer(const ParamStore& params, SgdConfig cfg) : cfg_(cfg) {
    velocity_.reserve(params.tensors.size());
    for (const auto& t : params.tensors) velocity_.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
}

void SgdOptimizer::step(ParamStore& params, const ParamStore& grads, double lr) {
    if (params.tensors.size() != velocity_.size() || grads.tensors.size() != velocity_.size())
        throw ParameterError("optimizer step: tensor count mismatch");
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& t : grads.tensors) sq += t.value.squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
    }
    for (size_t i = 0; i < params.tensors.size(); ++i) {
        Mat& theta = params.tensors[i].value;
        const Mat& g = grads.tensors[i].value;
        velocity_[i] = cfg_.momentum * velocity_[i] - lr * (scale * g + cfg_.weight_decay * theta);
        theta += velocity_[i];
    }
}

double lr_schedule(double base_lr, double progress) {
    return base_lr / std::pow(1.0 + 10.0 * progress, 0.75);
}

double grl_lambda_schedule(double progress) {
    return 2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0;
}

void save_checkpoint(const ParamStore& params, const std::string& path, const std::string& meta_json) {
    json manifest;
    manifest["meta"] = json::parse(meta_json);
    manifest["tensors"] = json::array();
    for (const auto& t : params.tensors)
        manifest["tensors"].push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out << manifest.dump() << '\n';
    for (const auto& t : params.tensors) {
        for (Eigen::Index i = 0; i < t.value.rows(); ++i)
            for (Eigen::Index j = 0; j < t.value.cols(); ++j) {
                const double v = t.value(i, j);
                out.write(reinterpret_cast<const char*>(&v), sizeof(double));
            }
    }
    if (!out) throw FormatError("short write to '" + path + "'");
}

ParamStore load_checkpoint(const std::string& path, std::string* meta_json) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw FormatError("'" + path + "' has no manifest line");

    json manifest;
    try {
        manifest = json::parse(line);
    } catch (const json::exception& e) {
        throw FormatError("bad checkpoint manifest in '" + path + "': " + e.what());
    }
    if (!manifest.contains("tensors") || !manifest["tensors"].is_array())
        throw FormatError("checkpoint manifest lacks a tensors array");
    if (meta_json) *meta_json = manifest.value("meta", json::object()).dump();

    ParamStore store;
    for (const auto& entry : manifest["tensors"]) {
        const std::string name = entry.at("name").get<std::string>();
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        if (rows < 1 || cols < 1) throw FormatError("checkpoint tensor '" + name + "' has bad shape");
        Mat m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) {
                double v = 0.0;
                if (!in.read(reinterpret_cast<char*>(&v), sizeof(double)))
                    throw FormatError("checkpoint '" + path + "' truncated inside tensor '" + name + "'");
                m(i, j) = v;
            }
        store.tensors.push_back({name, std::move(m)});
    }
    char extra = 0;
    if (in.read(&extra, 1)) throw FormatError("checkpoint '" + path + "' has trailing bytes");
    return store;
}

}  // namespace gvida::nets

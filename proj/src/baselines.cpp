#include "gvida/baselines.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

#include "gvida/errors.hpp"

namespace gvida::baselines {

void AnchorSet::validate() const {
    if (rows.rows() < 2 || block_width < 1) throw ParameterError("anchor set needs >= 2 classes and block_width >= 1");
    if (rows.cols() != static_cast<Eigen::Index>(rows.rows()) * block_width)
        throw ParameterError("anchor width must be class_count * block_width");
    for (Eigen::Index c = 0; c < rows.rows(); ++c)
        for (Eigen::Index j = 0; j < rows.cols(); ++j) {
            const bool in_block = j >= c * block_width && j < (c + 1) * block_width;
            if (rows(c, j) != (in_block ? 1.0 : 0.0))
                throw ParameterError("anchor row " + std::to_string(c) + " is not block binary");
        }
}

AnchorSet build_anchors(int class_count, int block_width, double noise_std) {
    if (class_count < 2) throw ParameterError("anchors need class_count >= 2");
    if (block_width < 1) throw ParameterError("anchors need block_width >= 1");
    if (noise_std < 0.0) throw ParameterError("anchor noise_std must be >= 0");
    AnchorSet a;
    a.block_width = block_width;
    a.noise_std = noise_std;
    a.rows = Mat::Zero(class_count, static_cast<Eigen::Index>(class_count) * block_width);
    for (int c = 0; c < class_count; ++c)
        a.rows.block(c, c * block_width, 1, block_width).setOnes();
    return a;
}

Mat sample_anchor_rows(const AnchorSet& anchors, std::uint64_t seed) {
    anchors.validate();
    if (anchors.noise_std == 0.0) return anchors.rows;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, anchors.noise_std);
    Mat out = anchors.rows;
    for (Eigen::Index c = 0; c < out.rows(); ++c)
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(c, j) += noise(rng);
    return out;
}

int default_block_width(int class_count, int latent_dim) {
    if (class_count < 2 || latent_dim < 1) throw ParameterError("bad class_count/latent_dim");
    return (latent_dim + class_count - 1) / class_count;
}

double npa_loss(const Mat& encoded, const std::vector<int>& labels, const AnchorSet& anchors) {
    anchors.validate();
    if (encoded.rows() != static_cast<Eigen::Index>(labels.size()))
        throw ParameterError("npa_loss: rows and labels disagree");
    if (encoded.cols() > anchors.rows.cols())
        throw ParameterError("npa_loss: encoded width exceeds the anchor width");
    const int C = anchors.class_count();
    for (int label : labels)
        if (label >= C) throw ConfigError("npa_loss: label " + std::to_string(label) + " has no anchor");
    double acc = 0.0;
    for (int c = 0; c < C; ++c) {
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(encoded.cols());
        int count = 0;
        for (Eigen::Index i = 0; i < encoded.rows(); ++i) {
            if (labels[static_cast<size_t>(i)] != c) continue;
            mean += encoded.row(i);
            ++count;
        }
        if (count == 0) continue;  // absent classes contribute 0, so empty input gives 0
        mean /= count;
        acc += (mean - anchors.rows.row(c).head(encoded.cols())).squaredNorm();
    }
    return acc / C;
}

std::vector<priors::ClassPrior> vida_fixed_priors(int class_count, int latent_dim,
                                                  double variance) {
    if (class_count < 2 || latent_dim < 1) throw ParameterError("bad class_count/latent_dim");
    if (variance <= 0.0) throw ParameterError("fixed prior variance must be > 0");
    // Up to 10 classes walk the reference ladder 1.5, 1.2, ..., -1.2; more
    // classes subdivide the same [-1.2, 1.5] span so the means stay pairwise
    // distinct without wandering off to unreachable magnitudes.
    const double step = class_count <= 10 ? 0.3 : 2.7 / (class_count - 1);
    std::vector<priors::ClassPrior> out;
    out.reserve(static_cast<size_t>(class_count));
    for (int c = 0; c < class_count; ++c) {
        priors::ClassPrior p;
        p.class_id = c;
        p.mean = priors::RowVec::Constant(latent_dim, 1.5 - step * c);
        p.variance = variance;
        out.push_back(std::move(p));
    }
    return out;
}

double vida_loss(const std::vector<priors::ClassStats>& stats,
                 const std::vector<priors::ClassPrior>& fixed) {
    for (const auto& s : stats) {
        const bool covered = std::any_of(fixed.begin(), fixed.end(),
                                         [&](const auto& p) { return p.class_id == s.class_id; });
        if (!covered)
            throw ConfigError("vida_loss: class " + std::to_string(s.class_id) +
                              " has no fixed prior");
    }
    return priors::global_alignment_loss(stats, fixed);
}

namespace {

double parse_positive(const std::string& text, const std::string& what, bool allow_zero) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end || !std::isfinite(value))
        throw ConfigError("cannot parse " + what + " from '" + text + "'");
    if (value < 0.0 || (!allow_zero && value == 0.0))
        throw ConfigError(what + " must be " + (allow_zero ? ">= 0" : "> 0"));
    return value;
}

}  // namespace

VariantSpec parse_variant(const std::string& name) {
    VariantSpec v;
    v.name = name;
    if (name == "source_only") {
        v.kind = VariantSpec::Kind::source_only;
        return v;
    }
    if (name == "cdan") {
        v.kind = VariantSpec::Kind::cdan;
        return v;
    }
    if (name == "gvida") {
        v.kind = VariantSpec::Kind::gvida;
        return v;
    }
    if (name.rfind("npa+", 0) == 0) {
        v.kind = VariantSpec::Kind::npa;
        v.npa_noise = parse_positive(name.substr(4), "npa noise", true);
        return v;
    }
    if (name.rfind("vida(", 0) == 0 && name.back() == ')') {
        v.kind = VariantSpec::Kind::vida;
        v.vida_variance = parse_positive(name.substr(5, name.size() - 6), "vida variance", false);
        return v;
    }
    throw ConfigError("unknown variant '" + name +
                      "' (expected source_only, cdan, npa+X, vida(V), or gvida)");
}

train::TrainConfig configure_variant(const VariantSpec& v, train::TrainConfig base,
                                     const train::ModelSpec& spec, int class_count,
                                     train::AlignmentAux* aux) {
    using Kind = VariantSpec::Kind;
    switch (v.kind) {
        case Kind::source_only:
            base.adversarial = false;
            base.align = train::AlignKind::none;
            base.use_codebook = false;
            base.reconstruction = false;
            base.augment = false;
            base.lambdas.l2 = base.lambdas.l3 = base.lambdas.l4 = base.lambdas.l5 = 0.0;
            break;
        case Kind::cdan:
            base.align = train::AlignKind::none;
            base.use_codebook = false;
            base.reconstruction = false;
            base.augment = false;
            base.lambdas.l3 = base.lambdas.l4 = base.lambdas.l5 = 0.0;
            break;
        case Kind::npa:
            base.align = train::AlignKind::anchors;
            base.use_codebook = false;
            base.reconstruction = false;
            base.augment = false;
            base.lambdas.l4 = base.lambdas.l5 = 0.0;
            base.anchor_noise = v.npa_noise;
            if (aux)
                aux->anchors = build_anchors(class_count,
                                             default_block_width(class_count, spec.latent_dim),
                                             v.npa_noise)
                                   .rows;
            break;
        case Kind::vida:
            base.align = train::AlignKind::fixed_priors;
            base.use_codebook = false;
            base.reconstruction = true;
            base.augment = false;
            base.lambdas.l4 = 0.0;
            if (aux)
                aux->fixed_priors =
                    vida_fixed_priors(class_count, spec.latent_dim, v.vida_variance);
            break;
        case Kind::gvida:
            base.align = train::AlignKind::global_priors;
            base.use_codebook = true;
            base.reconstruction = true;
            base.augment = true;
            break;
    }
    return base;
}

train::FitResult run_variant(const std::string& name, train::Model model,
                             const data::DomainDataset& source,
                             const data::DomainDataset& target, const train::TrainConfig& base,
                             const std::string& metrics_csv_path) {
    const VariantSpec v = parse_variant(name);
    train::AlignmentAux aux;
    const train::TrainConfig cfg =
        configure_variant(v, base, model.spec, model.class_count, &aux);
    return train::fit(std::move(model), source, target, cfg, aux, metrics_csv_path);
}

}  // namespace gvida::baselines

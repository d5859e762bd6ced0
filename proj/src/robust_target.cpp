#include "gvida/robust_target.hpp"

#include <cmath>
#include <random>

#include "gvida/errors.hpp"

namespace gvida::target {

int PseudoLabelSet::accepted_count() const {
    int n = 0;
    for (int y : labels)
        if (y >= 0) ++n;
    return n;
}

double PseudoLabelSet::accepted_fraction() const {
    return labels.empty() ? 0.0 : static_cast<double>(accepted_count()) / static_cast<double>(labels.size());
}

std::vector<int> PseudoLabelSet::accepted_rows() const {
    std::vector<int> rows;
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0) rows.push_back(static_cast<int>(i));
    return rows;
}

PseudoLabelSet pseudo_label(const Mat& probs, double entropy_threshold) {
    if (entropy_threshold < 0.0) throw ParameterError("entropy threshold must be >= 0");
    if (probs.rows() < 1 || probs.cols() < 1) throw ParameterError("pseudo_label: empty probability matrix");

    PseudoLabelSet out;
    out.labels.resize(static_cast<size_t>(probs.rows()));
    out.entropies.resize(static_cast<size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        if ((probs.row(i).array() < 0.0).any() || std::abs(probs.row(i).sum() - 1.0) > 1e-6)
            throw ParameterError("row " + std::to_string(i + 1) + ": not a probability distribution");
        double h = 0.0;
        int best = 0;
        for (Eigen::Index k = 0; k < probs.cols(); ++k) {
            const double p = probs(i, k);
            if (p > 0.0) h -= p * std::log(p);
            if (p > probs(i, best)) best = static_cast<int>(k);
        }
        out.entropies[static_cast<size_t>(i)] = h;
        out.labels[static_cast<size_t>(i)] = h <= entropy_threshold ? best : -1;
    }
    return out;
}

double default_entropy_threshold(int class_count) {
    if (class_count < 2) throw ParameterError("entropy threshold needs class_count >= 2");
    return 0.5 * std::log(static_cast<double>(class_count));
}

AugmentedBatch perturb(const Mat& accepted_feats, const std::vector<int>& labels, double sigma,
                       std::uint64_t seed) {
    if (static_cast<Eigen::Index>(labels.size()) != accepted_feats.rows())
        throw ParameterError("perturb: features and labels disagree");
    if (sigma < 0.0) throw ParameterError("perturb: sigma must be >= 0");

    AugmentedBatch out;
    out.provenance = Provenance::perturbed;
    out.labels = labels;
    out.features = accepted_feats;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index i = 0; i < out.features.rows(); ++i)
        for (Eigen::Index j = 0; j < out.features.cols(); ++j) out.features(i, j) += sigma * unit(rng);
    return out;
}

AugmentedBatch regenerate(const Mat& feats, const std::vector<int>& labels, const FeatureMap& encode,
                          const FeatureMap& decode, const codebook::Codebook& cb, double tau,
                          std::uint64_t seed) {
    if (static_cast<Eigen::Index>(labels.size()) != feats.rows())
        throw ParameterError("regenerate: features and labels disagree");

    AugmentedBatch out;
    out.provenance = Provenance::regenerated;
    out.labels = labels;
    if (feats.rows() == 0) {
        out.features.resize(0, feats.cols());
        return out;
    }
    const Mat z = encode(feats);
    const Mat q = codebook::codebook_forward(z, cb, nets::Mode::train, tau, seed);
    out.features = decode(q);
    return out;
}

}  // namespace gvida::target

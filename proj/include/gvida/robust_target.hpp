#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "gvida/codebook.hpp"

namespace gvida::target {

using ad::Mat;

// Entropy-filtered hard labels for target rows; rejected rows keep -1 and are
// excluded from every class-conditional loss downstream.
struct PseudoLabelSet {
    std::vector<int> labels;        // -1 where rejected
    std::vector<double> entropies;  // nats

    int accepted_count() const;
    double accepted_fraction() const;
    std::vector<int> accepted_rows() const;
};

// Accept iff entropy(row) <= threshold; the label is the argmax (lowest index
// on ties). Rows must be distributions; a bad row is named in the error.
PseudoLabelSet pseudo_label(const Mat& probs, double entropy_threshold);

double default_entropy_threshold(int class_count);  // 0.5 * log(class_count)

enum class Provenance { perturbed, regenerated };

struct AugmentedBatch {
    Mat features;
    std::vector<int> labels;
    Provenance provenance = Provenance::perturbed;

    int rows() const { return static_cast<int>(features.rows()); }
};

// Adds seeded N(0, sigma^2) noise per cell; labels are copied through.
AugmentedBatch perturb(const Mat& accepted_feats, const std::vector<int>& labels, double sigma,
                       std::uint64_t seed);

using FeatureMap = std::function<Mat(const Mat&)>;

// decode(codebook_forward(encode(feats), train, tau, seed)): the sampled
// quantization injects the diversity, the decoder maps back to feature space.
AugmentedBatch regenerate(const Mat& feats, const std::vector<int>& labels, const FeatureMap& encode,
                          const FeatureMap& decode, const codebook::Codebook& cb, double tau,
                          std::uint64_t seed);

}  // namespace gvida::target

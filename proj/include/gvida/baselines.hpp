#pragma once

#include <string>
#include <vector>

#include "gvida/trainer.hpp"

namespace gvida::baselines {

using train::Mat;

// Block-wise binary anchors: row c carries ones exactly in columns
// [c*block_width, (c+1)*block_width), so rows are pairwise orthogonal.
// noise_std is the scale of the Gaussian jitter applied at use time.
struct AnchorSet {
    Mat rows;
    int block_width = 0;
    double noise_std = 0.0;

    int class_count() const { return static_cast<int>(rows.rows()); }
    void validate() const;  // throws ParameterError
};

AnchorSet build_anchors(int class_count, int block_width, double noise_std = 0.0);

// Fresh perturbed copy of the anchor rows: rows + noise_std * N(0, 1),
// seeded so a given draw is reproducible. noise_std == 0 returns rows as is.
Mat sample_anchor_rows(const AnchorSet& anchors, std::uint64_t seed);

// Narrow latent spaces shrink the slot width so the anchor matrix still
// covers every class: ceil(latent_dim / class_count), at least 1.
int default_block_width(int class_count, int latent_dim);

// Mean squared distance between per-class batch means and the leading
// encoded-width columns of the anchor rows, averaged over all classes.
// Classes absent from the batch contribute zero, so an empty batch gives 0.
double npa_loss(const Mat& encoded, const std::vector<int>& labels, const AnchorSet& anchors);

// Fixed continuous priors with pairwise distinct means: class c sits at
// (1.5 - 0.3*c) broadcast across all latent dims, shared variance.
std::vector<priors::ClassPrior> vida_fixed_priors(int class_count, int latent_dim,
                                                  double variance);

// Sum of per-class KL from batch stats to the fixed prior set.
double vida_loss(const std::vector<priors::ClassStats>& stats,
                 const std::vector<priors::ClassPrior>& fixed);

struct VariantSpec {
    enum class Kind { source_only, cdan, npa, vida, gvida };
    Kind kind = Kind::gvida;
    std::string name;           // canonical spelling, e.g. "npa+0.5"
    double npa_noise = 0.0;     // anchor jitter scale for npa+X
    double vida_variance = 0.0; // fixed prior variance for vida(var)
};

// Accepted spellings: source_only, cdan, npa+X (X >= 0), vida(V) (V > 0),
// gvida. Anything else is a ConfigError.
VariantSpec parse_variant(const std::string& name);

// Applies the variant's loss toggles on top of a shared base config and fills
// the alignment aux inputs (anchors or fixed priors) where the variant needs
// them. The base config's weights are kept for whichever losses stay active.
train::TrainConfig configure_variant(const VariantSpec& v, train::TrainConfig base,
                                     const train::ModelSpec& spec, int class_count,
                                     train::AlignmentAux* aux);

// Initializes nothing itself: the caller passes the model so every variant of
// a comparison shares one initialization per seed.
train::FitResult run_variant(const std::string& name, train::Model model,
                             const data::DomainDataset& source,
                             const data::DomainDataset& target, const train::TrainConfig& base,
                             const std::string& metrics_csv_path = "");

}  // namespace gvida::baselines

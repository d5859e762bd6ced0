#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gvida/adversarial.hpp"
#include "gvida/codebook.hpp"
#include "gvida/dataset.hpp"
#include "gvida/nets.hpp"
#include "gvida/priors.hpp"
#include "gvida/robust_target.hpp"

namespace gvida::train {

using ad::Mat;

struct Lambdas {
    double l1 = 1.0;   // supervised cross-entropy on source
    double l2 = 1.0;   // conditional adversarial domain loss
    double l3 = 0.1;   // latent alignment (priors or anchors)
    double l4 = 0.01;  // negated assignment entropy
    double l5 = 0.1;   // reconstruction through the latent bottleneck
};

enum class AlignKind { none, global_priors, fixed_priors, anchors };

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double base_lr = 0.01;
    nets::SgdConfig sgd;  // momentum 0.9, weight decay 5e-4
    Lambdas lambdas;

    double entropy_threshold = -1.0;  // < 0 means 0.5 * log(class_count)
    int warmup_epochs = 2;            // epochs before pseudo-labels are trusted
    double perturb_sigma_scale = 0.1;
    double commitment_beta = 0.25;
    double tau_start = 1.0;
    double tau_end = 0.5;

    bool adversarial = true;
    AlignKind align = AlignKind::global_priors;
    bool use_codebook = true;
    bool reconstruction = true;
    bool augment = true;
    double anchor_noise = 0.0;  // fresh anchor jitter per step when > 0

    std::uint64_t seed = 1;

    void validate() const;  // throws ConfigError
};

struct ModelSpec {
    nets::NetworkSpec generator, encoder, decoder, classifier, discriminator;
    int latent_dim = 16;
    int codebook_size = 32;

    // feature_dim == 512 selects the wide encoder/decoder stack sized for
    // pre-extracted real features; anything else gets the compact stack.
    static ModelSpec defaults_for(int feature_dim, int class_count, int latent_dim = 16,
                                  int codebook_size = 32);
    void validate(int feature_dim, int class_count) const;
};

// Parameter groups live in one store under prefixes g/e/dec/clf/disc plus the
// codebook entries as cb.entries, so one optimizer step covers all of them.
struct Model {
    ModelSpec spec;
    nets::ParamStore params;
    int feature_dim = 0;
    int class_count = 0;

    static Model init(const ModelSpec& spec, int feature_dim, int class_count, std::uint64_t seed);
    codebook::Codebook cb() const;
};

struct LossBreakdown {
    double l1_srm = 0.0;
    double l2_adv = 0.0;
    double l3_align = 0.0;
    double l4_entropy = 0.0;  // negated assignment entropy, minimized
    double l5_recon = 0.0;    // reconstruction plus the commitment penalty
    double elbo_constant = 0.0;
    double total = 0.0;  // weighted sum of the five parts; the constant is excluded
    int epoch = 0;
    int step = 0;
};

struct EpochMetrics {
    int epoch = 0;
    int step = 0;  // global step count at the end of the epoch
    double l1 = 0.0, l2 = 0.0, l3 = 0.0, l4 = 0.0, l5 = 0.0, total = 0.0;  // epoch means
    double acc_target = 0.0;
    double perplexity = 0.0;      // 0 when the variant has no codebook
    double mean_class_var = 0.0;  // eval-mode source encodings, per-class, averaged
    double accepted_frac = 0.0;
};

// Inputs for one optimizer step. Target labels must already be pseudo-labels
// (-1 where rejected); aug rows live in generator-output space and only feed
// the alignment and adversarial terms.
struct StepInputs {
    data::Batch source;
    data::Batch target;  // rows() == 0 for source-only training
    Mat aug_features;
    std::vector<int> aug_labels;
    std::vector<priors::ClassPrior> priors;  // global or fixed set, whichever is active
    Mat anchor_rows;                         // effective anchors for this step
    double tau = 1.0;
    double grl_lambda = 1.0;
    std::uint64_t noise_seed = 0;
    bool reversal = true;  // disabled only while finite-differencing the objective
};

struct AlignmentAux {
    std::vector<priors::ClassPrior> fixed_priors;
    Mat anchors;  // class_count rows; leading latent_dim columns are compared
};

struct FitResult {
    std::vector<EpochMetrics> metrics;
    std::vector<priors::ClassPrior> final_priors;
    double final_target_accuracy = 0.0;
    Model model;
};

double srm_loss(const Mat& probs, const std::vector<int>& labels);
double reconstruction_loss(const Mat& x, const Mat& xhat);

LossBreakdown train_step(Model& model, nets::SgdOptimizer& opt, const StepInputs& in,
                         const TrainConfig& cfg, double lr, Mat* source_encodings = nullptr,
                         Mat* assign_probs = nullptr);

// The step objective as a pure function of the parameters, for gradient
// checking. Reversal is forced off so the analytic gradient is the true
// derivative of the returned value.
nets::LossFn make_step_loss_fn(const ModelSpec& spec, int feature_dim, int class_count,
                               StepInputs in, TrainConfig cfg);

double evaluate(const Model& model, const data::DomainDataset& ds);

FitResult fit(Model model, const data::DomainDataset& source, const data::DomainDataset& target,
              const TrainConfig& cfg, const AlignmentAux& aux = {},
              const std::string& metrics_csv_path = "");

void write_metrics_csv(const std::vector<EpochMetrics>& rows, const std::string& path);
std::vector<EpochMetrics> read_metrics_csv(const std::string& path);

void save_model(const Model& model, const std::string& path,
                const std::string& extra_meta_json = "{}");
Model load_model(const std::string& path);

std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& text);

}  // namespace gvida::train

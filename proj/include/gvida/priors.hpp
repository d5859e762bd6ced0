#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "gvida/tape.hpp"

namespace gvida::priors {

using ad::Mat;
using RowVec = Eigen::RowVectorXd;

// Class-conditional latent prior N(mean, variance * I). Priors estimated from
// an epoch of encodings carry variance 1/class_count; fixed prior sets may use
// any positive variance.
struct ClassPrior {
    int class_id = 0;
    RowVec mean;
    double variance = 0.0;
};

// Diagonal-Gaussian batch statistics for one class.
struct ClassStats {
    int class_id = 0;
    RowVec mean;
    RowVec variance;  // per-dim, floored at 1e-6
    int count = 0;
};

inline constexpr double kVarianceFloor = 1e-6;

// Per-class means over an epoch of encodings; every class must appear at
// least once or a PriorEstimationError names the missing class.
std::vector<ClassPrior> estimate_epoch_priors(const Mat& encoded, const std::vector<int>& labels,
                                              int class_count);

// Stats for classes present in the batch; rows labeled -1 are skipped.
std::vector<ClassStats> batch_class_stats(const Mat& encoded, const std::vector<int>& labels,
                                          int class_count);

// KL(q || p) for diagonal Gaussians q = N(mean_q, diag(var_q)),
// p = N(mean_p, diag(var_p)), summed over dims:
//   sum_j [ 0.5*log(var_p_j/var_q_j) + (var_q_j + (mean_q_j - mean_p_j)^2) / (2*var_p_j) - 0.5 ]
double gaussian_kl(const RowVec& mean_q, const RowVec& var_q, const RowVec& mean_p,
                   const RowVec& var_p);
double gaussian_kl(const RowVec& mean_q, const RowVec& var_q, const RowVec& mean_p, double var_p);

// Sum of per-class KL between batch stats and the matching prior, over classes
// present in the stats. Missing prior for a present class is a ParameterError.
double global_alignment_loss(const std::vector<ClassStats>& stats,
                             const std::vector<ClassPrior>& priors);

// Mean of the per-dim variances across all classes present; the collapse
// diagnostic tracks this over epochs.
double mean_class_variance(const std::vector<ClassStats>& stats);

// Total-variation divergences for a pair of joint label x feature-bin
// distributions (each class_count x bins, entries >= 0, summing to 1):
//   first  = max over classes of TV between the class-conditional rows
//   second = TV between the feature marginals (column sums)
// Matching conditionals plus matching label marginals force the second to 0.
std::pair<double, double> lemma1_check(const Mat& joint_s, const Mat& joint_t);

// Differentiable alignment loss: same maths as global_alignment_loss with the
// batch statistics built on the tape, so gradients reach the encodings.
ad::Var alignment_loss_on_tape(ad::Tape& t, ad::Var encoded, const std::vector<int>& labels,
                               const std::vector<ClassPrior>& priors);

std::string priors_to_json(const std::vector<ClassPrior>& priors);
std::vector<ClassPrior> priors_from_json(const std::string& text);

}  // namespace gvida::priors

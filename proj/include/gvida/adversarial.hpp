#pragma once

#include <Eigen/Core>

#include "gvida/tape.hpp"

namespace gvida::adv {

using ad::Mat;

inline constexpr double kProbClip = 1e-7;  // discriminator outputs clipped to [clip, 1-clip]

// Row i becomes vec(features_i x probs_i^T): the multilinear conditioning of a
// feature row on its class posterior. Norm identity: |h_i| = |f_i| * |p_i|.
Mat multilinear_condition(const Mat& features, const Mat& probs);

// Mean binary cross-entropy over both domains with source labeled 1 and
// target labeled 0; inputs are discriminator sigmoid outputs, one per row.
double adversarial_loss(const Mat& d_source, const Mat& d_target);

// Same loss composed on a tape. Either side may be absent (invalid Var).
ad::Var adversarial_loss_on_tape(ad::Tape& t, ad::Var d_source, ad::Var d_target);

}  // namespace gvida::adv

#include "gvida/adversarial.hpp"

#include <cmath>

#include "gvida/errors.hpp"

namespace gvida::adv {

Mat multilinear_condition(const Mat& features, const Mat& probs) {
    if (features.rows() != probs.rows())
        throw ParameterError("multilinear_condition: row counts differ");
    if (features.cols() < 1 || probs.cols() < 1)
        throw ParameterError("multilinear_condition: empty operand");
    const auto df = features.cols(), dp = probs.cols();
    Mat h(features.rows(), df * dp);
    for (Eigen::Index i = 0; i < features.rows(); ++i)
        for (Eigen::Index j = 0; j < df; ++j)
            for (Eigen::Index k = 0; k < dp; ++k) h(i, j * dp + k) = features(i, j) * probs(i, k);
    return h;
}

namespace {

double clipped(double v) {
    if (v < kProbClip) return kProbClip;
    if (v > 1.0 - kProbClip) return 1.0 - kProbClip;
    return v;
}

}  // namespace

double adversarial_loss(const Mat& d_source, const Mat& d_target) {
    const auto ns = d_source.rows(), nt = d_target.rows();
    if (ns + nt == 0) throw ParameterError("adversarial_loss: no rows on either side");
    if ((ns > 0 && d_source.cols() != 1) || (nt > 0 && d_target.cols() != 1))
        throw ParameterError("adversarial_loss: discriminator outputs must be n x 1");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < ns; ++i) acc -= std::log(clipped(d_source(i, 0)));
    for (Eigen::Index i = 0; i < nt; ++i) acc -= std::log(1.0 - clipped(d_target(i, 0)));
    return acc / static_cast<double>(ns + nt);
}

ad::Var adversarial_loss_on_tape(ad::Tape& t, ad::Var d_source, ad::Var d_target) {
    if (!d_source.valid() && !d_target.valid())
        throw ParameterError("adversarial_loss_on_tape: no rows on either side");
    Eigen::Index ns = d_source.valid() ? t.val(d_source).rows() : 0;
    Eigen::Index nt = d_target.valid() ? t.val(d_target).rows() : 0;

    ad::Var acc = t.constant(Mat::Zero(1, 1));
    if (ns > 0) {
        ad::Var dc = t.clamp(d_source, kProbClip, 1.0 - kProbClip);
        acc = t.add(acc, t.sum(t.log(dc)));
    }
    if (nt > 0) {
        ad::Var dc = t.clamp(d_target, kProbClip, 1.0 - kProbClip);
        ad::Var one_minus = t.add_scalar(t.scale(dc, -1.0), 1.0);
        acc = t.add(acc, t.sum(t.log(one_minus)));
    }
    return t.scale(acc, -1.0 / static_cast<double>(ns + nt));
}

}  // namespace gvida::adv

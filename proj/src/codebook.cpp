#include "gvida/codebook.hpp"

#include <cmath>
#include <random>

#include "gvida/errors.hpp"

namespace gvida::codebook {

void Codebook::validate() const {
    if (size() < 1 || dim() < 1) throw ParameterError("codebook needs at least one entry and one dim");
    if (!entries.allFinite()) throw NumericError("codebook entries contain non-finite values");
}

Codebook init_codebook(int size, int dim, std::uint64_t seed) {
    if (size < 1 || dim < 1) throw ParameterError("codebook needs at least one entry and one dim");
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Codebook cb;
    cb.entries.resize(size, dim);
    for (int k = 0; k < size; ++k)
        for (int j = 0; j < dim; ++j) cb.entries(k, j) = dist(rng);
    return cb;
}

namespace {

Mat squared_distances(const Mat& z, const Codebook& cb) {
    cb.validate();
    if (z.cols() != cb.dim()) throw ParameterError("encoding dim does not match codebook dim");
    Eigen::VectorXd zn = z.rowwise().squaredNorm();
    Eigen::VectorXd en = cb.entries.rowwise().squaredNorm();
    Mat d = (-2.0 * z * cb.entries.transpose()).colwise() + zn;
    d.rowwise() += en.transpose();
    return d;
}

void check_distribution_rows(const Mat& probs) {
    if (probs.rows() < 1 || probs.cols() < 1) throw ParameterError("empty distribution matrix");
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        if ((probs.row(i).array() < 0.0).any())
            throw ParameterError("row " + std::to_string(i + 1) + ": negative probability");
        if (std::abs(probs.row(i).sum() - 1.0) > 1e-6)
            throw ParameterError("row " + std::to_string(i + 1) + ": probabilities sum to " +
                                 std::to_string(probs.row(i).sum()) + ", not 1");
    }
}

}  // namespace

std::vector<int> quantize(const Mat& z, const Codebook& cb) {
    const Mat d = squared_distances(z, cb);
    std::vector<int> out(static_cast<size_t>(z.rows()));
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        int best = 0;
        for (int k = 1; k < cb.size(); ++k)
            if (d(i, k) < d(i, best)) best = k;
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

Mat soft_assign(const Mat& z, const Codebook& cb) {
    Mat logits = -squared_distances(z, cb);
    Mat shifted = logits.colwise() - logits.rowwise().maxCoeff();
    Mat e = shifted.array().exp().matrix();
    return e.array().colwise() / e.rowwise().sum().array();
}

double assignment_entropy(const Mat& probs) {
    check_distribution_rows(probs);
    double total = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
        for (Eigen::Index k = 0; k < probs.cols(); ++k) {
            const double p = probs(i, k);
            if (p > 0.0) total -= p * std::log(p);
        }
    return total / static_cast<double>(probs.rows());
}

Mat gumbel_noise(int rows, int cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(std::numeric_limits<double>::min(), 1.0);
    Mat g(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) g(i, j) = -std::log(-std::log(u(rng)));
    return g;
}

Mat gumbel_sample(const Mat& probs, double tau, std::uint64_t seed) {
    check_distribution_rows(probs);
    if (tau <= 0.0) throw ParameterError("gumbel_sample needs tau > 0");
    const Mat g = gumbel_noise(static_cast<int>(probs.rows()), static_cast<int>(probs.cols()), seed);
    Mat logits = (probs.array().max(1e-300).log().matrix() + g) / tau;
    Mat shifted = logits.colwise() - logits.rowwise().maxCoeff();
    Mat e = shifted.array().exp().matrix();
    return e.array().colwise() / e.rowwise().sum().array();
}

Mat codebook_forward(const Mat& z, const Codebook& cb, nets::Mode mode, double tau,
                     std::uint64_t seed) {
    if (mode == nets::Mode::eval) {
        const auto idx = quantize(z, cb);
        Mat out(z.rows(), cb.dim());
        for (Eigen::Index i = 0; i < z.rows(); ++i) out.row(i) = cb.entries.row(idx[static_cast<size_t>(i)]);
        return out;
    }
    return gumbel_sample(soft_assign(z, cb), tau, seed) * cb.entries;
}

double usage_perplexity(const Mat& probs) {
    check_distribution_rows(probs);
    Eigen::RowVectorXd usage = probs.colwise().mean();
    double h = 0.0;
    for (Eigen::Index k = 0; k < usage.size(); ++k)
        if (usage(k) > 0.0) h -= usage(k) * std::log(usage(k));
    return std::exp(h);
}

double tau_schedule(double progress) {
    if (progress < 0.0) progress = 0.0;
    if (progress > 1.0) progress = 1.0;
    return 1.0 - 0.5 * progress;
}

double elbo_constant(int dim, int size) {
    if (dim < 1 || size < 1) throw ParameterError("elbo_constant needs dim >= 1 and size >= 1");
    return static_cast<double>(dim) * std::log(static_cast<double>(size));
}

TapeQuantization forward_on_tape(ad::Tape& t, ad::Var z, ad::Var entries, double tau,
                                 const Mat& gumbel) {
    if (tau <= 0.0) throw ParameterError("forward_on_tape needs tau > 0");
    const auto& zv = t.val(z);
    if (gumbel.rows() != zv.rows() || gumbel.cols() != t.val(entries).rows())
        throw ParameterError("gumbel noise shape must be rows(z) x size(codebook)");

    TapeQuantization out;
    out.assign_probs = t.softmax_rows(t.scale(t.sqdist(z, entries), -1.0));
    ad::Var perturbed = t.scale(t.add(t.log(out.assign_probs), t.constant(gumbel)), 1.0 / tau);
    out.sampled_probs = t.softmax_rows(perturbed);
    out.quantized = t.matmul(out.sampled_probs, entries);
    return out;
}

}  // namespace gvida::codebook

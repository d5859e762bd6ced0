#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "gvida/nets.hpp"
#include "gvida/tape.hpp"

namespace gvida::codebook {

using ad::Mat;

struct Codebook {
    Mat entries;  // K x dim

    int size() const { return static_cast<int>(entries.rows()); }
    int dim() const { return static_cast<int>(entries.cols()); }
    void validate() const;
};

Codebook init_codebook(int size, int dim, std::uint64_t seed);

// Nearest entry by squared Euclidean distance; ties resolve to the lowest index.
std::vector<int> quantize(const Mat& z, const Codebook& cb);

// Row-wise softmax over negated squared distances, max-subtracted for stability.
Mat soft_assign(const Mat& z, const Codebook& cb);

// Mean Shannon entropy (nats) of the assignment rows; each row must be a
// distribution. Always in [0, log K]. The training objective minimizes the
// negation, pushing assignments toward uniform coverage.
double assignment_entropy(const Mat& probs);

// g[i,k] = -log(-log u) with u uniform on (0,1), the standard Gumbel draw.
Mat gumbel_noise(int rows, int cols, std::uint64_t seed);

// softmax((log probs + g)/tau) row-wise; tau -> 0 concentrates on
// argmax(log probs + g), which follows the categorical given by probs.
Mat gumbel_sample(const Mat& probs, double tau, std::uint64_t seed);

// Train mode returns the Gumbel-weighted convex combination of entries; eval
// mode returns the hard nearest-by-assignment entry per row.
Mat codebook_forward(const Mat& z, const Codebook& cb, nets::Mode mode, double tau,
                     std::uint64_t seed);

// exp(entropy of the mean assignment distribution); lies in [1, K].
double usage_perplexity(const Mat& probs);

// Linear anneal from 1.0 at progress 0 to 0.5 at progress 1.
double tau_schedule(double progress);

// dim * log(size): the constant the quantized-prior term contributes to the
// evidence bound. It carries no gradient and is logged, never optimized.
double elbo_constant(int dim, int size);

// Differentiable train-mode path. The Gumbel noise is a fixed input, so the
// whole map (z, entries) -> quantized is smooth and the assignment chain
// carries exact gradients to both arguments.
struct TapeQuantization {
    ad::Var assign_probs;   // softmax(-distances)
    ad::Var sampled_probs;  // softmax((log assign + gumbel)/tau)
    ad::Var quantized;      // sampled_probs * entries
};

TapeQuantization forward_on_tape(ad::Tape& t, ad::Var z, ad::Var entries, double tau,
                                 const Mat& gumbel);

}  // namespace gvida::codebook

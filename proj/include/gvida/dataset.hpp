#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace gvida::data {

using Mat = Eigen::MatrixXd;

enum class ShiftKind { rotation, affine, class_conditional_offset };

// Transform applied to the target copy of a generated pair.
// magnitude is radians for rotation, unitless for the other kinds.
struct ShiftSpec {
    ShiftKind kind = ShiftKind::rotation;
    double magnitude = 0.0;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
};

struct DomainDataset {
    Mat features;              // n x d
    std::vector<int> labels;   // each in [0, class_count)
    std::string domain_tag;    // "source" or "target"
    int class_count = 0;

    int rows() const { return static_cast<int>(features.rows()); }
    int dims() const { return static_cast<int>(features.cols()); }

    // Throws ParameterError / NumericError when an invariant is broken.
    void validate() const;
};

struct Batch {
    Mat features;
    std::vector<int> labels;   // -1 marks rows without a usable label
    std::vector<int> indices;  // row ids in the originating dataset

    int rows() const { return static_cast<int>(features.rows()); }
};

ShiftKind shift_kind_from_string(const std::string& name);
std::string to_string(ShiftKind kind);

// Draws class_count Gaussian clusters (means on a circle of radius 3 in the
// leading two dims, isotropic std 0.4) and returns (source, target) where the
// target reuses the source draws, shifted and optionally noised. Row i of the
// target always corresponds to row i of the source.
std::pair<DomainDataset, DomainDataset> generate_pair(int class_count, int n_per_class, int dims,
                                                      const ShiftSpec& shift, std::uint64_t seed);

// CSV with header f0,...,f{d-1},label,domain; floats carry 17 significant
// digits so a save/load round trip reproduces every double exactly.
void save_dataset(const DomainDataset& ds, const std::string& path);

// expected_class_count == 0 infers the count as max(label) + 1.
DomainDataset load_dataset(const std::string& path, int expected_class_count = 0);

// Deterministic partition: same (dataset, batch_size, seed, shuffle) gives the
// same batches; the union of all batches is the dataset; only the final batch
// may be short.
std::vector<Batch> batches(const DomainDataset& ds, int batch_size, std::uint64_t seed,
                           bool shuffle = true);

}  // namespace gvida::data

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gvida/tape.hpp"

namespace gvida::nets {

using ad::Mat;

enum class Activation { identity, rectifier, sigmoid, softmax };

struct LayerSpec {
    int in = 0;
    int out = 0;
    Activation act = Activation::identity;
    double dropout = 0.0;  // applied after the activation, train mode only
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;

    int in_dim() const { return layers.front().in; }
    int out_dim() const { return layers.back().out; }

    // Dims must chain, softmax may only close the network, dropout in [0, 1).
    void validate() const;
};

struct NamedTensor {
    std::string name;
    Mat value;
};

// Flat list of named matrices; the order is the serialization order and the
// order leaves are pushed onto a tape.
struct ParamStore {
    std::vector<NamedTensor> tensors;

    Mat& at(const std::string& name);
    const Mat& at(const std::string& name) const;
    bool has(const std::string& name) const;

    int scalar_count() const;
    double get_flat(int i) const;
    void set_flat(int i, double v);

    ParamStore zeros_like() const;
};

// Appends <prefix>.w<i> and <prefix>.b<i> for each layer, every entry drawn
// uniformly from +-1/sqrt(fan_in).
void add_network_params(ParamStore& store, const std::string& prefix, const NetworkSpec& spec,
                        std::mt19937_64& rng);
void add_tensor(ParamStore& store, const std::string& name, int rows, int cols, double init_bound,
                std::mt19937_64& rng);

enum class Mode { train, eval };

// splitmix64 mixing step; derives decorrelated seed streams from one master
// seed and a salt, so every random draw in a run is attributable.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

// Shared by the plain and tape forwards so both see identical dropout noise.
Mat dropout_mask(int rows, int cols, double rate, std::uint64_t seed);

Mat forward(const NetworkSpec& spec, const ParamStore& params, const std::string& prefix,
            const Mat& x, Mode mode, std::uint64_t dropout_seed = 0);

// Parameters mirrored onto a tape as leaves, aligned with store.tensors.
struct BoundParams {
    const ParamStore* store = nullptr;
    std::vector<ad::Var> vars;

    ad::Var at(const std::string& name) const;
};

BoundParams bind(ad::Tape& t, const ParamStore& store);

ad::Var forward_on_tape(ad::Tape& t, const NetworkSpec& spec, const BoundParams& params,
                        const std::string& prefix, ad::Var x, Mode mode,
                        std::uint64_t dropout_seed = 0);

// loss(params, grads): returns the loss at params; when grads is non-null it
// must be filled with d(loss)/d(params) in matching shapes.
using LossFn = std::function<double(const ParamStore&, ParamStore*)>;

struct GradCheckOptions {
    double epsilon = 1e-5;  // legal range [1e-6, 1e-3]
    int max_probes = 120;
    std::uint64_t seed = 1;
};

// Central differences against the analytic gradient over a seeded sample of
// parameter coordinates; returns max |a - f| / (|a| + |f| + 1e-12).
double check_gradients(const LossFn& loss, const ParamStore& params,
                       const GradCheckOptions& opts = {});

struct SgdConfig {
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double clip_norm = 5.0;  // global gradient-norm cap; 0 disables
};

class SgdOptimizer {
public:
    SgdOptimizer(const ParamStore& params, SgdConfig cfg);

    // Gradients are rescaled to clip_norm when their global norm exceeds it,
    // then v = momentum*v - lr*(g + weight_decay*theta); theta += v.
    void step(ParamStore& params, const ParamStore& grads, double lr);

private:
    SgdConfig cfg_;
    std::vector<Mat> velocity_;
};

double lr_schedule(double base_lr, double progress);  // base / (1 + 10p)^0.75
double grl_lambda_schedule(double progress);          // 2/(1+exp(-10p)) - 1

// Single file: one JSON manifest line (tensor names/shapes plus caller meta),
// then the tensor data row-major as little-endian 64-bit floats.
void save_checkpoint(const ParamStore& params, const std::string& path,
                     const std::string& meta_json = "{}");
ParamStore load_checkpoint(const std::string& path, std::string* meta_json = nullptr);

}  // namespace gvida::nets

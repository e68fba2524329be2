#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pbu/dataset.hpp"
#include "pbu/tape.hpp"

namespace pbu {

/// Flat view of all model parameters, layer-major, weights before bias.
using ParamVector = std::vector<double>;

/// MLP softmax classifier: d -> hidden... -> C, ReLU activations, log-probs
/// out.
struct ModelSpec {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden_dims;
    int num_classes = 2;

    std::size_t num_layers() const { return hidden_dims.size() + 1; }
    std::size_t layer_in(std::size_t l) const;
    std::size_t layer_out(std::size_t l) const;
    /// m = sum over layers of (fan_in + 1) * fan_out.
    std::size_t param_count() const;
    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

void check_theta(const ModelSpec& spec, const ParamVector& theta);

/// He initialization: weights ~ N(0, 2/fan_in) drawn in layer-major row-major
/// order from SplitMix64+Box-Muller, biases exactly zero.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

/// Log P(y = c | x, theta) for every c. Plain forward pass, no tape.
std::vector<double> forward_logprobs(const ModelSpec& spec, const ParamVector& theta,
                                     std::span<const double> x);

/// Argmax class; ties broken by lowest class index.
int predict(const ModelSpec& spec, const ParamVector& theta, std::span<const double> x);

/// Sum over examples of log P(y_i | x_i, theta). Contract error on empty
/// data.
double log_likelihood(const ModelSpec& spec, const ParamVector& theta, const Dataset& data);

/// Fraction of examples whose predicted class equals the label.
double accuracy(const ModelSpec& spec, const ParamVector& theta, const Dataset& data);

/// One example's forward pass recorded on a tape, for gradient work.
/// param_leaves holds W0,b0,W1,b1,... in flatten order.
struct TapedForward {
    GradTape tape;
    std::vector<GradTape::Id> param_leaves;
    GradTape::Id logprobs = -1;
};

TapedForward build_forward_tape(const ModelSpec& spec, const ParamVector& theta,
                                std::span<const double> x);

/// Flatten the adjoints of param_leaves (after tape.backward) into a
/// gradient vector of length param_count().
ParamVector collect_param_grads(const ModelSpec& spec, const TapedForward& tf);

/// Reusable taped forward pass for batch kernels: one tape per worker thread,
/// input leaf overwritten per example, plus a pick node per class so any
/// log P(y=c|x) can be the backward root without growing the tape.
struct ForwardTemplate {
    GradTape tape;
    std::vector<GradTape::Id> param_leaves;
    GradTape::Id x_leaf = -1;
    GradTape::Id logprobs = -1;
    std::vector<GradTape::Id> class_ll;

    void run(std::span<const double> x) {
        tape.set_leaf(x_leaf, x);
        tape.recompute();
    }
};

ForwardTemplate build_forward_template(const ModelSpec& spec, const ParamVector& theta);

/// collect_param_grads writing into an existing buffer (resized as needed).
void collect_param_grads_into(const ModelSpec& spec, const GradTape& tape,
                              const std::vector<GradTape::Id>& param_leaves, ParamVector& out);

/// Split a flat parameter vector into per-layer W/b tensors (flatten order).
std::vector<Tensor> unflatten(const ModelSpec& spec, const ParamVector& theta);
ParamVector flatten(const ModelSpec& spec, const std::vector<Tensor>& layers);

}  // namespace pbu

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pbu/dataset.hpp"
#include "pbu/model.hpp"

namespace pbu {

enum class FisherMode { Empirical, Model };
enum class FisherForm { Diagonal, Full };

namespace kernels {

struct ValueGrad {
    double value = 0.0;
    ParamVector grad;
};

// Batch kernels, parallel over examples. Determinism contract: per-example
// contributions are computed independently into slots and reduced serially in
// example-index order, so results are bitwise identical for any thread count.

/// Sum over examples of log P(y_i | x_i, theta).
double loglik_value(const ModelSpec& spec, const ParamVector& theta, const Dataset& data);

/// Same sum plus its gradient w.r.t. theta.
ValueGrad loglik_grad(const ModelSpec& spec, const ParamVector& theta, const Dataset& data);

/// Restricted to the given example indices (mini-batch path).
ValueGrad loglik_grad_subset(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
                             std::span<const std::size_t> indices);

/// Per-example cross-entropy losses -log P(y_i | x_i, theta).
std::vector<double> example_losses(const ModelSpec& spec, const ParamVector& theta,
                                   const Dataset& data);

/// Number of examples whose argmax prediction equals the label.
std::size_t correct_count(const ModelSpec& spec, const ParamVector& theta, const Dataset& data);

/// Fisher diagonal, SUM convention. Empirical: sum_i score(x_i, y_i)^2.
/// Model: sum_i sum_c p(c|x_i) score(x_i, c)^2.
std::vector<double> fisher_diag_accum(const ModelSpec& spec, const ParamVector& theta,
                                      const Dataset& data, FisherMode mode);

/// Full m x m Fisher (row-major), same weighting.
std::vector<double> fisher_full_accum(const ModelSpec& spec, const ParamVector& theta,
                                      const Dataset& data, FisherMode mode);

}  // namespace kernels

/// Serial reference implementations: hand-derived backprop, straightforward
/// index-ordered accumulation. Kept for testing the parallel kernels and as
/// the baseline in the benchmark.
namespace reference {

double loglik_value(const ModelSpec& spec, const ParamVector& theta, const Dataset& data);
kernels::ValueGrad loglik_grad(const ModelSpec& spec, const ParamVector& theta,
                               const Dataset& data);
std::vector<double> example_losses(const ModelSpec& spec, const ParamVector& theta,
                                   const Dataset& data);
std::size_t correct_count(const ModelSpec& spec, const ParamVector& theta, const Dataset& data);
std::vector<double> fisher_diag_accum(const ModelSpec& spec, const ParamVector& theta,
                                      const Dataset& data, FisherMode mode);
std::vector<double> fisher_full_accum(const ModelSpec& spec, const ParamVector& theta,
                                      const Dataset& data, FisherMode mode);

/// Gradient of log P(y = c | x, theta) by hand-written backprop.
ParamVector score(const ModelSpec& spec, const ParamVector& theta, std::span<const double> x,
                  int c);

}  // namespace reference
}  // namespace pbu

#pragma once

#include <cstdint>

#include "pbu/checkpoint.hpp"
#include "pbu/dataset.hpp"
#include "pbu/model.hpp"

namespace pbu {

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
    Optimizer optimizer = Optimizer::Adam;
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    int epochs = 1;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

/// Adam moment state shared by training and the Adam unlearning variant.
struct AdamState {
    std::vector<double> m, v;
    long t = 0;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
    void apply(ParamVector& theta, const ParamVector& grad, double lr, double beta1, double beta2,
               double eps);
};

/// Minimize mean cross-entropy from a fresh He init. Deterministic given
/// (spec, data, cfg): shuffles come from a seeded Fisher-Yates stream.
/// Throws DivergenceError naming epoch and batch if the loss goes non-finite.
Checkpoint train(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg);

/// Same loop starting from an existing parameter vector (fine-tuning).
Checkpoint train_from(const ModelSpec& spec, ParamVector theta0, const Dataset& data,
                      const TrainConfig& cfg);

}  // namespace pbu

#include "pbu/train.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "pbu/errors.hpp"
#include "pbu/kernels.hpp"
#include "pbu/rng.hpp"

namespace pbu {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ContractError("train config: learning_rate must be > 0");
    if (epochs < 1) throw ContractError("train config: epochs must be >= 1");
    if (batch_size < 1) throw ContractError("train config: batch_size must be >= 1");
}

void AdamState::apply(ParamVector& theta, const ParamVector& grad, double lr, double beta1,
                      double beta2, double eps) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t j = 0; j < theta.size(); ++j) {
        m[j] = beta1 * m[j] + (1.0 - beta1) * grad[j];
        v[j] = beta2 * v[j] + (1.0 - beta2) * grad[j] * grad[j];
        theta[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
    }
}

Checkpoint train_from(const ModelSpec& spec, ParamVector theta0, const Dataset& data,
                      const TrainConfig& cfg) {
    spec.validate();
    cfg.validate();
    check_theta(spec, theta0);
    if (data.empty()) throw ContractError("train: empty dataset");
    if (data.dim() != spec.input_dim || data.num_classes() != spec.num_classes)
        throw ContractError("train: dataset does not match model spec");

    ParamVector theta = std::move(theta0);
    AdamState adam(theta.size());
    // Shuffle stream decorrelated from the init stream.
    Rng shuffle_rng(Rng(cfg.seed).next_u64());

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        const std::size_t n = order.size();
        for (std::size_t start = 0, batch = 0; start < n; start += cfg.batch_size, ++batch) {
            const std::size_t bn = std::min(cfg.batch_size, n - start);
            const std::span<const std::size_t> idx(order.data() + start, bn);
            kernels::ValueGrad vg = kernels::loglik_grad_subset(spec, theta, data, idx);

            // mean cross-entropy over the batch
            const double loss = -vg.value / static_cast<double>(bn);
            if (!std::isfinite(loss)) {
                std::ostringstream os;
                os << "train: non-finite loss at epoch " << epoch << ", batch " << batch;
                throw DivergenceError(os.str());
            }
            const double gscale = -1.0 / static_cast<double>(bn);
            for (double& g : vg.grad) g *= gscale;

            if (cfg.optimizer == Optimizer::Sgd) {
                for (std::size_t j = 0; j < theta.size(); ++j)
                    theta[j] -= cfg.learning_rate * vg.grad[j];
            } else {
                adam.apply(theta, vg.grad, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                           cfg.adam_eps);
            }
        }
    }

    const double final_loss =
        -kernels::loglik_value(spec, theta, data) / static_cast<double>(data.size());
    if (!std::isfinite(final_loss)) throw DivergenceError("train: non-finite final loss");

    Checkpoint ckpt;
    ckpt.spec = spec;
    ckpt.theta = std::move(theta);
    ckpt.meta = {cfg.seed, cfg.epochs, final_loss};
    return ckpt;
}

Checkpoint train(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    return train_from(spec, init_params(spec, cfg.seed), data, cfg);
}

}  // namespace pbu

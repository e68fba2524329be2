#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pbu/checkpoint.hpp"
#include "pbu/dataset.hpp"
#include "pbu/fisher.hpp"
#include "pbu/train.hpp"

namespace pbu {

enum class UnlearnOptimizer { PlainGd, Adam };

/// Hyperparameters of the PBU loss
///   L = alpha * log P(S_n|theta)
///     + beta * (theta-theta*)^T I_{theta*}(S_n) (theta-theta*)
///     + gamma * ||theta-theta*||^2
/// and of the descent loop that minimizes it.
struct PBUConfig {
    double alpha = 1.0;
    double beta = 0.0;
    double gamma = 0.0;
    double eta = 0.05;  // step size
    int steps = 100;    // T_ul
    FisherMode fisher_mode = FisherMode::Empirical;
    FisherForm fisher_form = FisherForm::Diagonal;
    UnlearnOptimizer optimizer = UnlearnOptimizer::PlainGd;
    std::size_t batch_size = 0;  // 0 = full batch over S_n
    std::uint64_t seed = 0;

    void validate() const;
};

/// Observable consumption of the pipeline: how many retain-class examples
/// were read (must be zero by construction), how many Fisher estimates and
/// optimization phases ran (one each for a single-step method).
struct PipelineCounters {
    std::size_t retain_examples_touched = 0;
    std::size_t fisher_computations = 0;
    std::size_t optimization_phases = 0;
};

struct UnlearnResult {
    ParamVector theta_u;
    std::vector<double> loss_trace;  // loss at theta_t before each update
    double wall_time_seconds = 0.0;
    int steps_run = 0;
    double epochs = 0.0;  // one epoch = one full pass over S_n
    PipelineCounters counters;
    std::optional<FisherEstimate> fisher;  // computed once at theta*
};

/// The three-term loss; s_n must be nonempty and single-class, and the
/// estimate must have been taken on s_n at theta_star (dimensions checked).
double pbu_loss(const ModelSpec& spec, const ParamVector& theta, const ParamVector& theta_star,
                const FisherEstimate& fisher, const Dataset& s_n, const PBUConfig& cfg);
ParamVector pbu_loss_grad(const ModelSpec& spec, const ParamVector& theta,
                          const ParamVector& theta_star, const FisherEstimate& fisher,
                          const Dataset& s_n, const PBUConfig& cfg);

/// One optimizer update. PlainGd applies theta -= eta * grad; Adam keeps
/// moment state across calls.
class PbuOptimizer {
public:
    PbuOptimizer(const PBUConfig& cfg, std::size_t m);
    void step(ParamVector& theta, const ParamVector& grad);

private:
    PBUConfig cfg_;
    AdamState adam_;
};

/// Algorithm: start at theta*, estimate the Fisher once on S_n, then run
/// T_ul descent steps on the loss. Consumes only (theta*, S_n); there is no
/// retain-set input.
UnlearnResult run_pbu(const ModelSpec& spec, const Checkpoint& initial, const Dataset& s_n,
                      const PBUConfig& cfg);

/// Fresh training on the retain set only. Errors if any forget-class example
/// is present.
Checkpoint retrain_baseline(const ModelSpec& spec, const Dataset& s_p, int forget_class,
                            const TrainConfig& cfg);

/// Continued training from the initial checkpoint on the retain set only.
Checkpoint finetune_baseline(const Checkpoint& initial, const Dataset& s_p, int forget_class,
                             const TrainConfig& cfg);

}  // namespace pbu

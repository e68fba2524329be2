#include "pbu/unlearn.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pbu/errors.hpp"
#include "pbu/kernels.hpp"
#include "pbu/rng.hpp"

namespace pbu {

namespace {

constexpr double kLossGuard = 1e12;

void check_forget_set(const Dataset& s_n) {
    if (s_n.empty()) throw ContractError("pbu: forget set S_n is empty");
    if (!s_n.single_class())
        throw ContractError("pbu: forget set spans multiple classes; S_n must be {(x,y): y = s}");
}

void check_weights(const PBUConfig& cfg) {
    if (!(std::isfinite(cfg.alpha) && cfg.alpha >= 0.0))
        throw ContractError("pbu config: alpha must be finite and >= 0");
    if (!(std::isfinite(cfg.beta) && cfg.beta >= 0.0))
        throw ContractError("pbu config: beta must be finite and >= 0");
    if (!(std::isfinite(cfg.gamma) && cfg.gamma >= 0.0))
        throw ContractError("pbu config: gamma must be finite and >= 0");
}

double squared_norm_diff(const ParamVector& a, const ParamVector& b) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        acc += d * d;
    }
    return acc;
}

}  // namespace

void PBUConfig::validate() const {
    check_weights(*this);
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ContractError("pbu config: eta must be > 0");
    if (steps < 1) throw ContractError("pbu config: T_ul must be >= 1");
}

double pbu_loss(const ModelSpec& spec, const ParamVector& theta, const ParamVector& theta_star,
                const FisherEstimate& fisher, const Dataset& s_n, const PBUConfig& cfg) {
    check_weights(cfg);
    check_theta(spec, theta);
    check_theta(spec, theta_star);
    check_forget_set(s_n);
    if (fisher.dim() != theta.size()) throw ShapeError("pbu_loss: fisher dimension mismatch");

    const double ll = kernels::loglik_value(spec, theta, s_n);
    return cfg.alpha * ll + cfg.beta * mahalanobis_sq(theta, theta_star, fisher) +
           cfg.gamma * squared_norm_diff(theta, theta_star);
}

ParamVector pbu_loss_grad(const ModelSpec& spec, const ParamVector& theta,
                          const ParamVector& theta_star, const FisherEstimate& fisher,
                          const Dataset& s_n, const PBUConfig& cfg) {
    check_weights(cfg);
    check_theta(spec, theta);
    check_theta(spec, theta_star);
    check_forget_set(s_n);
    if (fisher.dim() != theta.size()) throw ShapeError("pbu_loss_grad: fisher dimension mismatch");

    kernels::ValueGrad vg = kernels::loglik_grad(spec, theta, s_n);
    std::vector<double> d(theta.size());
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = theta[j] - theta_star[j];
    const std::vector<double> mg = fisher.quad_grad(d);

    ParamVector g(theta.size());
    for (std::size_t j = 0; j < g.size(); ++j)
        g[j] = cfg.alpha * vg.grad[j] + cfg.beta * mg[j] + cfg.gamma * 2.0 * d[j];
    return g;
}

PbuOptimizer::PbuOptimizer(const PBUConfig& cfg, std::size_t m) : cfg_(cfg), adam_(m) {
    cfg.validate();
}

void PbuOptimizer::step(ParamVector& theta, const ParamVector& grad) {
    for (double g : grad)
        if (!std::isfinite(g)) throw DivergenceError("pbu step: non-finite gradient");
    if (cfg_.optimizer == UnlearnOptimizer::PlainGd) {
        for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= cfg_.eta * grad[j];
    } else {
        adam_.apply(theta, grad, cfg_.eta, 0.9, 0.999, 1e-8);
    }
}

UnlearnResult run_pbu(const ModelSpec& spec, const Checkpoint& initial, const Dataset& s_n,
                      const PBUConfig& cfg) {
    cfg.validate();
    spec.validate();
    if (!(initial.spec == spec)) throw ContractError("run_pbu: checkpoint spec mismatch");
    check_theta(spec, initial.theta);
    check_forget_set(s_n);
    if (s_n.dim() != spec.input_dim || s_n.num_classes() != spec.num_classes)
        throw ContractError("run_pbu: forget set does not match model spec");

    const auto t0 = std::chrono::steady_clock::now();
    const int target = s_n[0].y;
    const std::size_t n = s_n.size();
    const std::size_t m = spec.param_count();
    const ParamVector& theta_star = initial.theta;

    UnlearnResult res;
    res.counters.optimization_phases = 1;

    // Every pass over the forget-set handle is audited for off-class reads.
    auto audit_examples = [&](std::size_t first, std::size_t count) {
        for (std::size_t i = first; i < first + count; ++i)
            if (s_n[i].y != target) ++res.counters.retain_examples_touched;
    };

    // Fisher once, at theta* on S_n, before the loop.
    res.counters.fisher_computations = 1;
    audit_examples(0, n);
    res.fisher = cfg.fisher_form == FisherForm::Diagonal
                     ? fisher_diagonal(spec, theta_star, s_n, cfg.fisher_mode)
                     : fisher_full(spec, theta_star, s_n, cfg.fisher_mode);
    const FisherEstimate& fisher = *res.fisher;

    const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(Rng(cfg.seed).next_u64());
    std::size_t cursor = 0;

    ParamVector theta = theta_star;
    PbuOptimizer opt(cfg, m);
    std::vector<double> d(m);
    std::size_t examples_consumed = 0;

    for (int t = 0; t < cfg.steps; ++t) {
        double ll = 0.0;
        ParamVector ll_grad;
        if (full_batch) {
            audit_examples(0, n);
            kernels::ValueGrad vg = kernels::loglik_grad(spec, theta, s_n);
            ll = vg.value;
            ll_grad = std::move(vg.grad);
            examples_consumed += n;
        } else {
            if (cursor == 0) shuffle_rng.shuffle(order);
            const std::size_t bn = std::min(cfg.batch_size, n - cursor);
            const std::span<const std::size_t> idx(order.data() + cursor, bn);
            for (std::size_t i : idx)
                if (s_n[i].y != target) ++res.counters.retain_examples_touched;
            kernels::ValueGrad vg = kernels::loglik_grad_subset(spec, theta, s_n, idx);
            const double scale = static_cast<double>(n) / static_cast<double>(bn);
            ll = t == 0 ? kernels::loglik_value(spec, theta, s_n)  // trace[0] is the full loss
                        : vg.value * scale;
            if (t == 0) audit_examples(0, n);
            ll_grad = std::move(vg.grad);
            for (double& g : ll_grad) g *= scale;
            cursor = (cursor + bn) % n;
            examples_consumed += bn;
        }

        for (std::size_t j = 0; j < m; ++j) d[j] = theta[j] - theta_star[j];
        const double quad = fisher.quad(d);
        double sq = 0.0;
        for (double v : d) sq += v * v;
        const double loss = cfg.alpha * ll + cfg.beta * quad + cfg.gamma * sq;

        if (!std::isfinite(loss) || std::abs(loss) > kLossGuard) {
            std::ostringstream os;
            os << "pbu: loss diverged at step " << t << " (loss = " << loss << ")";
            throw DivergenceError(os.str());
        }
        res.loss_trace.push_back(loss);

        const std::vector<double> mg = fisher.quad_grad(d);
        ParamVector grad(m);
        for (std::size_t j = 0; j < m; ++j)
            grad[j] = cfg.alpha * ll_grad[j] + cfg.beta * mg[j] + cfg.gamma * 2.0 * d[j];
        try {
            opt.step(theta, grad);
        } catch (const DivergenceError&) {
            std::ostringstream os;
            os << "pbu: non-finite gradient at step " << t;
            throw DivergenceError(os.str());
        }
    }

    for (double v : theta)
        if (!std::isfinite(v))
            throw DivergenceError("pbu: non-finite parameters after the final step");
    res.theta_u = std::move(theta);
    res.steps_run = cfg.steps;
    res.epochs = static_cast<double>(examples_consumed) / static_cast<double>(n);
    res.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

namespace {

void check_retain_set(const Dataset& s_p, int forget_class) {
    if (s_p.empty()) throw ContractError("baseline: retain set S_p is empty");
    for (std::size_t i = 0; i < s_p.size(); ++i)
        if (s_p[i].y == forget_class) {
            std::ostringstream os;
            os << "baseline: contamination, retain set contains forget-class example at index "
               << i;
            throw ContractError(os.str());
        }
}

}  // namespace

Checkpoint retrain_baseline(const ModelSpec& spec, const Dataset& s_p, int forget_class,
                            const TrainConfig& cfg) {
    check_retain_set(s_p, forget_class);
    return train(spec, s_p, cfg);
}

Checkpoint finetune_baseline(const Checkpoint& initial, const Dataset& s_p, int forget_class,
                             const TrainConfig& cfg) {
    check_retain_set(s_p, forget_class);
    check_theta(initial.spec, initial.theta);
    return train_from(initial.spec, initial.theta, s_p, cfg);
}

}  // namespace pbu

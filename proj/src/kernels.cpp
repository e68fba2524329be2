#include "pbu/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "pbu/errors.hpp"
#include "pbu/parallel.hpp"

namespace pbu::kernels {

namespace {

// Examples per slot block; bounds slot-buffer memory while keeping the
// reduction in global index order.
constexpr std::size_t kBlock = 256;

// One reusable taped forward pass per worker thread. theta is fixed for the
// whole batch call, so the parameter leaves never change.
struct TemplatePool {
    TemplatePool(const ModelSpec& spec, const ParamVector& theta)
        : spec_(&spec), theta_(&theta), slots_(static_cast<std::size_t>(par::max_threads())) {}

    ForwardTemplate& mine() {
        auto& slot = slots_[static_cast<std::size_t>(par::thread_index())];
        if (!slot) slot.emplace(build_forward_template(*spec_, *theta_));
        return *slot;
    }

private:
    const ModelSpec* spec_;
    const ParamVector* theta_;
    std::vector<std::optional<ForwardTemplate>> slots_;
};

void add_into(ParamVector& acc, const ParamVector& v) {
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += v[j];
}

}  // namespace

ValueGrad loglik_grad_subset(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
                             std::span<const std::size_t> indices) {
    check_theta(spec, theta);
    const std::size_t m = spec.param_count();
    ValueGrad out;
    out.grad.assign(m, 0.0);

    TemplatePool pool(spec, theta);
    struct Slot {
        double ll = 0.0;
        ParamVector grad;
    };
    std::vector<Slot> slots(std::min(kBlock, indices.size()));
    for (std::size_t start = 0; start < indices.size(); start += kBlock) {
        const std::size_t bn = std::min(kBlock, indices.size() - start);
        par::for_index(bn, [&](std::size_t k) {
            const LabeledExample& e = data[indices[start + k]];
            ForwardTemplate& ft = pool.mine();
            ft.run(e.x);
            const GradTape::Id root = ft.class_ll[static_cast<std::size_t>(e.y)];
            ft.tape.backward(root);
            slots[k].ll = ft.tape.value(root)[0];
            collect_param_grads_into(spec, ft.tape, ft.param_leaves, slots[k].grad);
        });
        for (std::size_t k = 0; k < bn; ++k) {  // index-ordered reduction
            out.value += slots[k].ll;
            add_into(out.grad, slots[k].grad);
        }
    }
    return out;
}

ValueGrad loglik_grad(const ModelSpec& spec, const ParamVector& theta, const Dataset& data) {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return loglik_grad_subset(spec, theta, data, idx);
}

double loglik_value(const ModelSpec& spec, const ParamVector& theta, const Dataset& data) {
    check_theta(spec, theta);
    std::vector<double> vals(data.size());
    par::for_index(data.size(), [&](std::size_t i) {
        vals[i] = forward_logprobs(spec, theta, data[i].x)[static_cast<std::size_t>(data[i].y)];
    });
    double acc = 0.0;
    for (double v : vals) acc += v;
    return acc;
}

std::vector<double> example_losses(const ModelSpec& spec, const ParamVector& theta,
                                   const Dataset& data) {
    check_theta(spec, theta);
    std::vector<double> out(data.size());
    par::for_index(data.size(), [&](std::size_t i) {
        out[i] = -forward_logprobs(spec, theta, data[i].x)[static_cast<std::size_t>(data[i].y)];
    });
    return out;
}

std::size_t correct_count(const ModelSpec& spec, const ParamVector& theta, const Dataset& data) {
    check_theta(spec, theta);
    std::vector<unsigned char> hit(data.size(), 0);
    par::for_index(data.size(), [&](std::size_t i) {
        hit[i] = predict(spec, theta, data[i].x) == data[i].y ? 1 : 0;
    });
    std::size_t n = 0;
    for (unsigned char h : hit) n += h;
    return n;
}

std::vector<double> fisher_diag_accum(const ModelSpec& spec, const ParamVector& theta,
                                      const Dataset& data, FisherMode mode) {
    check_theta(spec, theta);
    const std::size_t m = spec.param_count();
    std::vector<double> acc(m, 0.0);

    TemplatePool pool(spec, theta);
    std::vector<std::vector<double>> slots(std::min(kBlock, data.size()));
    std::vector<ParamVector> scratch(slots.size());
    for (std::size_t start = 0; start < data.size(); start += kBlock) {
        const std::size_t bn = std::min(kBlock, data.size() - start);
        par::for_index(bn, [&](std::size_t k) {
            const LabeledExample& e = data[start + k];
            ForwardTemplate& ft = pool.mine();
            ft.run(e.x);
            std::vector<double>& contrib = slots[k];
            ParamVector& g = scratch[k];
            contrib.assign(m, 0.0);
            if (mode == FisherMode::Empirical) {
                ft.tape.backward(ft.class_ll[static_cast<std::size_t>(e.y)]);
                collect_param_grads_into(spec, ft.tape, ft.param_leaves, g);
                for (std::size_t j = 0; j < m; ++j) contrib[j] = g[j] * g[j];
            } else {
                // Exact expectation over the C-way predictive distribution.
                const Tensor& lp = ft.tape.value(ft.logprobs);
                for (std::size_t c = 0; c < lp.numel(); ++c) {
                    const double pc = std::exp(lp[c]);
                    ft.tape.backward(ft.class_ll[c]);
                    collect_param_grads_into(spec, ft.tape, ft.param_leaves, g);
                    for (std::size_t j = 0; j < m; ++j) contrib[j] += pc * g[j] * g[j];
                }
            }
        });
        for (std::size_t k = 0; k < bn; ++k)
            for (std::size_t j = 0; j < m; ++j) acc[j] += slots[k][j];
    }
    return acc;
}

std::vector<double> fisher_full_accum(const ModelSpec& spec, const ParamVector& theta,
                                      const Dataset& data, FisherMode mode) {
    check_theta(spec, theta);
    const std::size_t m = spec.param_count();
    const std::size_t nc = static_cast<std::size_t>(spec.num_classes);
    std::vector<double> acc(m * m, 0.0);

    // Per block: scores for every (example, weighted class) pair, then an
    // outer-product pass parallel over rows. Each matrix element accumulates
    // in global example order, so the result is thread-count invariant.
    const std::size_t terms_per_example = mode == FisherMode::Empirical ? 1 : nc;
    TemplatePool pool(spec, theta);
    std::vector<std::vector<double>> scores(std::min(kBlock, data.size()));
    std::vector<std::vector<double>> weights(scores.size());
    std::vector<ParamVector> scratch(scores.size());

    for (std::size_t start = 0; start < data.size(); start += kBlock) {
        const std::size_t bn = std::min(kBlock, data.size() - start);
        par::for_index(bn, [&](std::size_t k) {
            const LabeledExample& e = data[start + k];
            ForwardTemplate& ft = pool.mine();
            ft.run(e.x);
            ParamVector& g = scratch[k];
            scores[k].assign(terms_per_example * m, 0.0);
            weights[k].assign(terms_per_example, 1.0);
            if (mode == FisherMode::Empirical) {
                ft.tape.backward(ft.class_ll[static_cast<std::size_t>(e.y)]);
                collect_param_grads_into(spec, ft.tape, ft.param_leaves, g);
                std::copy(g.begin(), g.end(), scores[k].begin());
            } else {
                const Tensor& lp = ft.tape.value(ft.logprobs);
                for (std::size_t c = 0; c < nc; ++c) {
                    weights[k][c] = std::exp(lp[c]);
                    ft.tape.backward(ft.class_ll[c]);
                    collect_param_grads_into(spec, ft.tape, ft.param_leaves, g);
                    std::copy(g.begin(), g.end(), scores[k].begin() + c * m);
                }
            }
        });
        par::for_index(m, [&](std::size_t r) {
            double* row = &acc[r * m];
            for (std::size_t k = 0; k < bn; ++k) {
                for (std::size_t t = 0; t < terms_per_example; ++t) {
                    const double* g = &scores[k][t * m];
                    const double w = weights[k][t];
                    const double gr = g[r];
                    // w * (g_r * g_j) keeps F_rj and F_jr bitwise equal
                    for (std::size_t j = 0; j < m; ++j) row[j] += w * (gr * g[j]);
                }
            }
        });
    }
    return acc;
}

}  // namespace pbu::kernels

#include <algorithm>
#include <cmath>
#include <vector>

#include "pbu/errors.hpp"
#include "pbu/kernels.hpp"

// Serial reference path. Backprop is written out by hand from the chain rule
// instead of going through the tape, so the two routes check each other.

namespace pbu::reference {

namespace {

struct ForwardState {
    // pre-activations z_l and post-activations h_l per layer; h_[-1] is x
    std::vector<std::vector<double>> z;
    std::vector<std::vector<double>> h;  // h[l] = relu(z[l]) for l < L-1
    std::vector<double> logp;            // log-softmax of final z
};

ForwardState run_forward(const ModelSpec& spec, const ParamVector& theta,
                         std::span<const double> x) {
    ForwardState st;
    const std::size_t layers = spec.num_layers();
    st.z.resize(layers);
    st.h.resize(layers);

    std::vector<double> cur(x.begin(), x.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = spec.layer_in(l);
        const std::size_t out = spec.layer_out(l);
        st.z[l].assign(out, 0.0);
        for (std::size_t r = 0; r < out; ++r) {
            double acc = 0.0;
            const double* w = &theta[off + r * in];
            for (std::size_t c = 0; c < in; ++c) acc += w[c] * cur[c];
            st.z[l][r] = acc + theta[off + out * in + r];
        }
        off += (in + 1) * out;
        if (l + 1 < layers) {
            st.h[l].assign(out, 0.0);
            for (std::size_t r = 0; r < out; ++r) st.h[l][r] = std::max(st.z[l][r], 0.0);
            cur = st.h[l];
        }
    }

    const std::vector<double>& zl = st.z[layers - 1];
    double mx = zl[0];
    for (double v : zl) mx = std::max(mx, v);
    double se = 0.0;
    for (double v : zl) se += std::exp(v - mx);
    const double lse = mx + std::log(se);
    st.logp.resize(zl.size());
    for (std::size_t c = 0; c < zl.size(); ++c) st.logp[c] = zl[c] - lse;
    return st;
}

// Gradient of log p(c | x) given a completed forward pass.
// dz_L = e_c - p, then dW_l = dz_l h_{l-1}^T, db_l = dz_l,
// dz_{l-1} = (W_l^T dz_l) o 1[z_{l-1} > 0].
ParamVector backprop_class(const ModelSpec& spec, const ParamVector& theta,
                           std::span<const double> x, const ForwardState& st, int c) {
    const std::size_t layers = spec.num_layers();
    ParamVector g(spec.param_count(), 0.0);

    std::vector<double> dz(st.logp.size());
    for (std::size_t k = 0; k < dz.size(); ++k)
        dz[k] = (static_cast<int>(k) == c ? 1.0 : 0.0) - std::exp(st.logp[k]);

    std::vector<std::size_t> offs(layers);
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        offs[l] = off;
        off += (spec.layer_in(l) + 1) * spec.layer_out(l);
    }

    for (std::size_t l = layers; l-- > 0;) {
        const std::size_t in = spec.layer_in(l);
        const std::size_t out = spec.layer_out(l);
        const std::vector<double> input_holder =
            l == 0 ? std::vector<double>(x.begin(), x.end()) : st.h[l - 1];
        const std::vector<double>& input = input_holder;

        for (std::size_t r = 0; r < out; ++r) {
            const double d = dz[r];
            double* gw = &g[offs[l] + r * in];
            for (std::size_t cc = 0; cc < in; ++cc) gw[cc] = d * input[cc];
            g[offs[l] + out * in + r] = d;
        }
        if (l > 0) {
            std::vector<double> dh(in, 0.0);
            for (std::size_t r = 0; r < out; ++r) {
                const double d = dz[r];
                const double* w = &theta[offs[l] + r * in];
                for (std::size_t cc = 0; cc < in; ++cc) dh[cc] += w[cc] * d;
            }
            dz.assign(in, 0.0);
            for (std::size_t cc = 0; cc < in; ++cc)
                if (st.z[l - 1][cc] > 0.0) dz[cc] = dh[cc];
        }
    }
    return g;
}

}  // namespace

ParamVector score(const ModelSpec& spec, const ParamVector& theta, std::span<const double> x,
                  int c) {
    check_theta(spec, theta);
    const ForwardState st = run_forward(spec, theta, x);
    return backprop_class(spec, theta, x, st, c);
}

double loglik_value(const ModelSpec& spec, const ParamVector& theta, const Dataset& data) {
    check_theta(spec, theta);
    double acc = 0.0;
    for (const LabeledExample& e : data.examples())
        acc += run_forward(spec, theta, e.x).logp[static_cast<std::size_t>(e.y)];
    return acc;
}

kernels::ValueGrad loglik_grad(const ModelSpec& spec, const ParamVector& theta,
                               const Dataset& data) {
    check_theta(spec, theta);
    kernels::ValueGrad out;
    out.grad.assign(spec.param_count(), 0.0);
    for (const LabeledExample& e : data.examples()) {
        const ForwardState st = run_forward(spec, theta, e.x);
        out.value += st.logp[static_cast<std::size_t>(e.y)];
        const ParamVector g = backprop_class(spec, theta, e.x, st, e.y);
        for (std::size_t j = 0; j < g.size(); ++j) out.grad[j] += g[j];
    }
    return out;
}

std::vector<double> example_losses(const ModelSpec& spec, const ParamVector& theta,
                                   const Dataset& data) {
    check_theta(spec, theta);
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        out[i] = -run_forward(spec, theta, data[i].x).logp[static_cast<std::size_t>(data[i].y)];
    return out;
}

std::size_t correct_count(const ModelSpec& spec, const ParamVector& theta, const Dataset& data) {
    check_theta(spec, theta);
    std::size_t n = 0;
    for (const LabeledExample& e : data.examples()) {
        const std::vector<double> lp = run_forward(spec, theta, e.x).logp;
        std::size_t best = 0;
        for (std::size_t c = 1; c < lp.size(); ++c)
            if (lp[c] > lp[best]) best = c;
        if (static_cast<int>(best) == e.y) ++n;
    }
    return n;
}

std::vector<double> fisher_diag_accum(const ModelSpec& spec, const ParamVector& theta,
                                      const Dataset& data, FisherMode mode) {
    check_theta(spec, theta);
    const std::size_t m = spec.param_count();
    std::vector<double> acc(m, 0.0);
    for (const LabeledExample& e : data.examples()) {
        const ForwardState st = run_forward(spec, theta, e.x);
        if (mode == FisherMode::Empirical) {
            const ParamVector g = backprop_class(spec, theta, e.x, st, e.y);
            for (std::size_t j = 0; j < m; ++j) acc[j] += g[j] * g[j];
        } else {
            for (std::size_t c = 0; c < st.logp.size(); ++c) {
                const double pc = std::exp(st.logp[c]);
                const ParamVector g = backprop_class(spec, theta, e.x, st, static_cast<int>(c));
                for (std::size_t j = 0; j < m; ++j) acc[j] += pc * g[j] * g[j];
            }
        }
    }
    return acc;
}

std::vector<double> fisher_full_accum(const ModelSpec& spec, const ParamVector& theta,
                                      const Dataset& data, FisherMode mode) {
    check_theta(spec, theta);
    const std::size_t m = spec.param_count();
    std::vector<double> acc(m * m, 0.0);
    auto rank_one = [&](const ParamVector& g, double w) {
        for (std::size_t r = 0; r < m; ++r) {
            double* row = &acc[r * m];
            const double gr = g[r];
            for (std::size_t j = 0; j < m; ++j) row[j] += w * (gr * g[j]);
        }
    };
    for (const LabeledExample& e : data.examples()) {
        const ForwardState st = run_forward(spec, theta, e.x);
        if (mode == FisherMode::Empirical) {
            rank_one(backprop_class(spec, theta, e.x, st, e.y), 1.0);
        } else {
            for (std::size_t c = 0; c < st.logp.size(); ++c)
                rank_one(backprop_class(spec, theta, e.x, st, static_cast<int>(c)),
                         std::exp(st.logp[c]));
        }
    }
    return acc;
}

}  // namespace pbu::reference

#include "pbu/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pbu/errors.hpp"
#include "pbu/kernels.hpp"
#include "pbu/rng.hpp"

namespace pbu {

std::size_t ModelSpec::layer_in(std::size_t l) const {
    return l == 0 ? input_dim : hidden_dims[l - 1];
}

std::size_t ModelSpec::layer_out(std::size_t l) const {
    return l == hidden_dims.size() ? static_cast<std::size_t>(num_classes) : hidden_dims[l];
}

std::size_t ModelSpec::param_count() const {
    std::size_t m = 0;
    for (std::size_t l = 0; l < num_layers(); ++l) m += (layer_in(l) + 1) * layer_out(l);
    return m;
}

void ModelSpec::validate() const {
    if (input_dim < 1) throw ContractError("model spec: input_dim must be >= 1");
    if (num_classes < 2) throw ContractError("model spec: num_classes must be >= 2");
    for (std::size_t h : hidden_dims)
        if (h < 1) throw ContractError("model spec: hidden widths must be >= 1");
}

void check_theta(const ModelSpec& spec, const ParamVector& theta) {
    if (theta.size() != spec.param_count()) {
        std::ostringstream os;
        os << "parameter vector has " << theta.size() << " entries, spec expects "
           << spec.param_count();
        throw ShapeError(os.str());
    }
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    ParamVector theta(spec.param_count(), 0.0);
    Rng rng(seed);
    std::size_t off = 0;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t in = spec.layer_in(l);
        const std::size_t out = spec.layer_out(l);
        const double sd = std::sqrt(2.0 / static_cast<double>(in));
        for (std::size_t i = 0; i < out * in; ++i) theta[off + i] = sd * rng.next_gaussian();
        off += out * in + out;  // biases stay zero
    }
    return theta;
}

std::vector<double> forward_logprobs(const ModelSpec& spec, const ParamVector& theta,
                                     std::span<const double> x) {
    check_theta(spec, theta);
    if (x.size() != spec.input_dim) {
        std::ostringstream os;
        os << "input has " << x.size() << " features, spec expects " << spec.input_dim;
        throw ShapeError(os.str());
    }

    std::vector<double> h(x.begin(), x.end());
    std::vector<double> z;
    std::size_t off = 0;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t in = spec.layer_in(l);
        const std::size_t out = spec.layer_out(l);
        z.assign(out, 0.0);
        for (std::size_t r = 0; r < out; ++r) {
            double acc = 0.0;
            const double* w = &theta[off + r * in];
            for (std::size_t c = 0; c < in; ++c) acc += w[c] * h[c];
            z[r] = acc + theta[off + out * in + r];
        }
        off += (in + 1) * out;
        if (l + 1 < spec.num_layers()) {
            h.assign(out, 0.0);
            for (std::size_t r = 0; r < out; ++r) h[r] = std::max(z[r], 0.0);
        }
    }

    // max-subtracted log-softmax
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double se = 0.0;
    for (double v : z) se += std::exp(v - mx);
    const double lse = mx + std::log(se);
    for (double& v : z) v -= lse;
    return z;
}

int predict(const ModelSpec& spec, const ParamVector& theta, std::span<const double> x) {
    const std::vector<double> lp = forward_logprobs(spec, theta, x);
    std::size_t best = 0;
    for (std::size_t c = 1; c < lp.size(); ++c)
        if (lp[c] > lp[best]) best = c;
    return static_cast<int>(best);
}

double log_likelihood(const ModelSpec& spec, const ParamVector& theta, const Dataset& data) {
    if (data.empty()) throw ContractError("log_likelihood: empty dataset");
    return kernels::loglik_value(spec, theta, data);
}

double accuracy(const ModelSpec& spec, const ParamVector& theta, const Dataset& data) {
    if (data.empty()) throw ContractError("accuracy: empty dataset");
    const std::size_t correct = kernels::correct_count(spec, theta, data);
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TapedForward build_forward_tape(const ModelSpec& spec, const ParamVector& theta,
                                std::span<const double> x) {
    check_theta(spec, theta);
    if (x.size() != spec.input_dim) {
        std::ostringstream os;
        os << "input has " << x.size() << " features, spec expects " << spec.input_dim;
        throw ShapeError(os.str());
    }

    TapedForward tf;
    GradTape& t = tf.tape;

    std::size_t off = 0;
    GradTape::Id h = t.leaf(Tensor::vec(std::vector<double>(x.begin(), x.end())));
    GradTape::Id z = -1;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t in = spec.layer_in(l);
        const std::size_t out = spec.layer_out(l);
        const GradTape::Id w = t.leaf(Tensor::matrix(
            out, in, std::vector<double>(theta.begin() + off, theta.begin() + off + out * in)));
        const GradTape::Id b = t.leaf(Tensor::vec(std::vector<double>(
            theta.begin() + off + out * in, theta.begin() + off + (in + 1) * out)));
        tf.param_leaves.push_back(w);
        tf.param_leaves.push_back(b);
        off += (in + 1) * out;
        z = t.add(t.matmul(w, h), b);
        if (l + 1 < spec.num_layers()) h = t.relu(z);
    }
    tf.logprobs = t.log_softmax(z);
    return tf;
}

ParamVector collect_param_grads(const ModelSpec& spec, const TapedForward& tf) {
    ParamVector g(spec.param_count());
    collect_param_grads_into(spec, tf.tape, tf.param_leaves, g);
    return g;
}

ForwardTemplate build_forward_template(const ModelSpec& spec, const ParamVector& theta) {
    check_theta(spec, theta);
    ForwardTemplate ft;
    GradTape& t = ft.tape;

    std::size_t off = 0;
    ft.x_leaf = t.leaf(Tensor({spec.input_dim}));
    GradTape::Id h = ft.x_leaf;
    GradTape::Id z = -1;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t in = spec.layer_in(l);
        const std::size_t out = spec.layer_out(l);
        const GradTape::Id w = t.leaf(Tensor::matrix(
            out, in, std::vector<double>(theta.begin() + off, theta.begin() + off + out * in)));
        const GradTape::Id b = t.leaf(Tensor::vec(std::vector<double>(
            theta.begin() + off + out * in, theta.begin() + off + (in + 1) * out)));
        ft.param_leaves.push_back(w);
        ft.param_leaves.push_back(b);
        off += (in + 1) * out;
        z = t.add(t.matmul(w, h), b);
        if (l + 1 < spec.num_layers()) h = t.relu(z);
    }
    ft.logprobs = t.log_softmax(z);
    for (int c = 0; c < spec.num_classes; ++c)
        ft.class_ll.push_back(t.pick(ft.logprobs, static_cast<std::size_t>(c)));
    return ft;
}

void collect_param_grads_into(const ModelSpec& spec, const GradTape& tape,
                              const std::vector<GradTape::Id>& param_leaves, ParamVector& out) {
    out.resize(spec.param_count());
    std::size_t off = 0;
    for (const GradTape::Id id : param_leaves) {
        const Tensor& gt = tape.grad(id);
        std::copy(gt.data().begin(), gt.data().end(), out.begin() + off);
        off += gt.numel();
    }
}

std::vector<Tensor> unflatten(const ModelSpec& spec, const ParamVector& theta) {
    check_theta(spec, theta);
    std::vector<Tensor> layers;
    std::size_t off = 0;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t in = spec.layer_in(l);
        const std::size_t out = spec.layer_out(l);
        layers.push_back(Tensor::matrix(
            out, in, std::vector<double>(theta.begin() + off, theta.begin() + off + out * in)));
        layers.push_back(Tensor::vec(std::vector<double>(theta.begin() + off + out * in,
                                                         theta.begin() + off + (in + 1) * out)));
        off += (in + 1) * out;
    }
    return layers;
}

ParamVector flatten(const ModelSpec& spec, const std::vector<Tensor>& layers) {
    ParamVector theta;
    theta.reserve(spec.param_count());
    for (const Tensor& t : layers) theta.insert(theta.end(), t.data().begin(), t.data().end());
    check_theta(spec, theta);
    return theta;
}

}  // namespace pbu

#include "pbu/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pbu/errors.hpp"
#include "pbu/train.hpp"

namespace pbu {

FisherEstimate::FisherEstimate(FisherForm form, FisherMode mode, std::size_t dim,
                               std::size_t n_src, std::vector<double> values)
    : form_(form), mode_(mode), dim_(dim), n_src_(n_src), values_(std::move(values)) {
    const std::size_t want = form_ == FisherForm::Diagonal ? dim_ : dim_ * dim_;
    if (values_.size() != want) throw ShapeError("fisher estimate: wrong value count");
}

double FisherEstimate::quad(std::span<const double> d) const {
    if (d.size() != dim_) throw ShapeError("fisher quad: displacement length mismatch");
    if (form_ == FisherForm::Diagonal) {
        double acc = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) acc += values_[j] * d[j] * d[j];
        return acc;
    }
    double acc = 0.0;
    for (std::size_t r = 0; r < dim_; ++r) {
        double row = 0.0;
        const double* f = &values_[r * dim_];
        for (std::size_t c = 0; c < dim_; ++c) row += f[c] * d[c];
        acc += d[r] * row;
    }
    return acc;
}

std::vector<double> FisherEstimate::quad_grad(std::span<const double> d) const {
    if (d.size() != dim_) throw ShapeError("fisher quad_grad: displacement length mismatch");
    std::vector<double> g(dim_, 0.0);
    if (form_ == FisherForm::Diagonal) {
        for (std::size_t j = 0; j < dim_; ++j) g[j] = 2.0 * values_[j] * d[j];
        return g;
    }
    for (std::size_t r = 0; r < dim_; ++r) {
        double row = 0.0;
        const double* f = &values_[r * dim_];
        for (std::size_t c = 0; c < dim_; ++c) row += f[c] * d[c];
        g[r] = 2.0 * row;  // F symmetric
    }
    return g;
}

ParamVector score(const ModelSpec& spec, const ParamVector& theta, std::span<const double> x,
                  int c) {
    if (c < 0 || c >= spec.num_classes) throw ContractError("score: class index out of range");
    TapedForward tf = build_forward_tape(spec, theta, x);
    tf.tape.backward(tf.tape.pick(tf.logprobs, static_cast<std::size_t>(c)));
    return collect_param_grads(spec, tf);
}

namespace {

void check_fisher_inputs(const ModelSpec& spec, const ParamVector& theta, const Dataset& data) {
    check_theta(spec, theta);
    if (data.empty()) throw ContractError("fisher: empty dataset");
    if (data.dim() != spec.input_dim || data.num_classes() != spec.num_classes)
        throw ContractError("fisher: dataset does not match model spec");
}

}  // namespace

FisherEstimate fisher_diagonal(const ModelSpec& spec, const ParamVector& theta,
                               const Dataset& data, FisherMode mode) {
    check_fisher_inputs(spec, theta, data);
    return FisherEstimate(FisherForm::Diagonal, mode, spec.param_count(), data.size(),
                          kernels::fisher_diag_accum(spec, theta, data, mode));
}

FisherEstimate fisher_full(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
                           FisherMode mode) {
    check_fisher_inputs(spec, theta, data);
    const std::size_t m = spec.param_count();
    if (m > 2000) {
        std::ostringstream os;
        os << "fisher_full: m = " << m << " exceeds the 2000-parameter guard (O(m^2) memory); "
           << "use the diagonal form";
        throw ContractError(os.str());
    }
    return FisherEstimate(FisherForm::Full, mode, m, data.size(),
                          kernels::fisher_full_accum(spec, theta, data, mode));
}

namespace {

std::vector<double> displacement(const ParamVector& theta, const ParamVector& theta_star) {
    if (theta.size() != theta_star.size()) {
        std::ostringstream os;
        os << "mahalanobis: parameter lengths differ (" << theta.size() << " vs "
           << theta_star.size() << ")";
        throw ShapeError(os.str());
    }
    std::vector<double> d(theta.size());
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = theta[j] - theta_star[j];
    return d;
}

}  // namespace

double mahalanobis_sq(const ParamVector& theta, const ParamVector& theta_star,
                      const FisherEstimate& fisher) {
    return fisher.quad(displacement(theta, theta_star));
}

ParamVector mahalanobis_sq_grad(const ParamVector& theta, const ParamVector& theta_star,
                                const FisherEstimate& fisher) {
    return fisher.quad_grad(displacement(theta, theta_star));
}

void PriorSpec::validate() const {
    if (lambda < 0.0 || !std::isfinite(lambda))
        throw ContractError("prior: lambda must be finite and >= 0");
}

double log_posterior_unnorm(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
                            const PriorSpec& prior) {
    prior.validate();
    double sq = 0.0;
    for (double v : theta) sq += v * v;
    return log_likelihood(spec, theta, data) - 0.5 * prior.lambda * sq;
}

ParamVector log_posterior_grad(const ModelSpec& spec, const ParamVector& theta,
                               const Dataset& data, const PriorSpec& prior) {
    prior.validate();
    if (data.empty()) throw ContractError("log_posterior_grad: empty dataset");
    kernels::ValueGrad vg = kernels::loglik_grad(spec, theta, data);
    for (std::size_t j = 0; j < theta.size(); ++j) vg.grad[j] -= prior.lambda * theta[j];
    return vg.grad;
}

std::vector<double> fd_hessian(
    const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
    const std::vector<double>& x0, double h) {
    if (h <= 0.0) throw ContractError("fd_hessian: step must be positive");
    const std::size_t m = x0.size();
    std::vector<double> hess(m * m, 0.0);
    std::vector<double> probe = x0;
    for (std::size_t j = 0; j < m; ++j) {
        probe[j] = x0[j] + h;
        const std::vector<double> gp = grad_fn(probe);
        probe[j] = x0[j] - h;
        const std::vector<double> gm = grad_fn(probe);
        probe[j] = x0[j];
        for (std::size_t i = 0; i < m; ++i) hess[i * m + j] = (gp[i] - gm[i]) / (2.0 * h);
    }
    // symmetrize away finite-difference noise
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            const double s = 0.5 * (hess[i * m + j] + hess[j * m + i]);
            hess[i * m + j] = s;
            hess[j * m + i] = s;
        }
    return hess;
}

double taylor2_residual(
    const std::function<double(const std::vector<double>&)>& f,
    const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
    const std::vector<double>& x0, const std::vector<double>& delta, double h) {
    if (delta.size() != x0.size()) throw ShapeError("taylor2_residual: delta length mismatch");
    const std::size_t m = x0.size();
    const std::vector<double> hess = fd_hessian(grad_fn, x0, h);
    double quad = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < m; ++j) row += hess[i * m + j] * delta[j];
        quad += delta[i] * row;
    }
    std::vector<double> shifted(m);
    for (std::size_t i = 0; i < m; ++i) shifted[i] = x0[i] + delta[i];
    return std::abs(f(shifted) - f(x0) - 0.5 * quad);
}

double quadratic_residual(const ModelSpec& spec, const ParamVector& theta_star,
                          const Dataset& data, const PriorSpec& prior, const ParamVector& delta) {
    check_theta(spec, theta_star);
    if (delta.size() != theta_star.size())
        throw ShapeError("quadratic_residual: delta length mismatch");
    const std::size_t m = spec.param_count();
    if (m > 200)
        throw ContractError("quadratic_residual: m > 200; finite-difference Hessian too costly");

    const ParamVector g = log_posterior_grad(spec, theta_star, data, prior);
    double ginf = 0.0;
    for (double v : g) ginf = std::max(ginf, std::abs(v));
    if (ginf > 1e-4) {
        std::ostringstream os;
        os << "quadratic_residual: theta_star not stationary, ||grad||_inf = " << ginf
           << " > 1e-4";
        throw ContractError(os.str());
    }

    auto f = [&](const std::vector<double>& v) {
        return log_posterior_unnorm(spec, v, data, prior);
    };
    auto gf = [&](const std::vector<double>& v) {
        return log_posterior_grad(spec, v, data, prior);
    };
    return taylor2_residual(f, gf, theta_star, delta, 1e-4);
}

namespace {

// Gaussian elimination with partial pivoting; returns false if singular.
bool solve_dense(std::vector<double> a, std::vector<double> b, std::size_t n,
                 std::vector<double>& out) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        if (std::abs(a[piv * n + col]) < 1e-300) return false;
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
            std::swap(b[col], b[piv]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double factor = a[r * n + col] * inv;
            if (factor == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= factor * a[col * n + c];
            b[r] -= factor * b[col];
        }
    }
    out.assign(n, 0.0);
    for (std::size_t r = n; r-- > 0;) {
        double acc = b[r];
        for (std::size_t c = r + 1; c < n; ++c) acc -= a[r * n + c] * out[c];
        out[r] = acc / a[r * n + r];
    }
    return true;
}

}  // namespace

ParamVector map_estimate(const ModelSpec& spec, const Dataset& data, const PriorSpec& prior,
                         std::uint64_t seed, int adam_iters, int newton_iters) {
    spec.validate();
    prior.validate();
    if (data.empty()) throw ContractError("map_estimate: empty dataset");
    const std::size_t m = spec.param_count();
    if (m > 200) throw ContractError("map_estimate: m > 200; meant for the small theory models");

    ParamVector theta = init_params(spec, seed);
    AdamState adam(m);
    for (int it = 0; it < adam_iters; ++it) {
        ParamVector g = log_posterior_grad(spec, theta, data, prior);
        for (double& v : g) v = -v;  // maximize log posterior
        adam.apply(theta, g, 0.05, 0.9, 0.999, 1e-8);
    }

    auto grad_inf = [&](const ParamVector& t) {
        double gi = 0.0;
        for (double v : log_posterior_grad(spec, t, data, prior)) gi = std::max(gi, std::abs(v));
        return gi;
    };

    // Newton polish, guarded by the gradient norm: halve the step until it
    // improves, stop when it cannot (keeps the warmup point then).
    for (int it = 0; it < newton_iters; ++it) {
        const ParamVector g = log_posterior_grad(spec, theta, data, prior);
        double gn = 0.0;
        for (double v : g) gn = std::max(gn, std::abs(v));
        if (gn <= 1e-12) break;
        auto gf = [&](const std::vector<double>& v) {
            return log_posterior_grad(spec, v, data, prior);
        };
        const std::vector<double> hess = fd_hessian(gf, theta, 1e-4);
        std::vector<double> step;
        if (!solve_dense(hess, g, m, step)) break;
        double scale = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 30 && !accepted; ++bt, scale *= 0.5) {
            ParamVector cand = theta;
            for (std::size_t j = 0; j < m; ++j) cand[j] -= scale * step[j];
            if (grad_inf(cand) < gn) {
                theta = std::move(cand);
                accepted = true;
            }
        }
        if (!accepted) break;
    }
    return theta;
}

void save_fisher(const FisherEstimate& fisher, const std::string& path) {
    if (fisher.form() != FisherForm::Diagonal)
        throw ContractError("save_fisher: only the diagonal form is persisted");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "PBUFISH v1\n";
    out << "mode=" << (fisher.mode() == FisherMode::Empirical ? "empirical" : "model")
        << " form=diagonal n_src=" << fisher.n_src() << "\n";
    out << "m=" << fisher.dim() << "\n";
    char buf[64];
    for (double v : fisher.values()) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf << "\n";
    }
    if (!out.good()) throw IoError("write failed for " + path);
}

FisherEstimate load_fisher(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    auto next_line = [&](std::size_t lineno) {
        if (!std::getline(in, line)) {
            std::ostringstream os;
            os << path << ":" << lineno << ": unexpected end of file";
            throw ParseError(os.str());
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
    };

    next_line(1);
    if (line != "PBUFISH v1") throw ParseError(path + ":1: not a PBUFISH v1 file");

    next_line(2);
    FisherMode mode;
    std::size_t n_src = 0;
    {
        std::istringstream is(line);
        std::string mtok, ftok, ntok;
        if (!(is >> mtok >> ftok >> ntok) || ftok != "form=diagonal" ||
            ntok.rfind("n_src=", 0) != 0)
            throw ParseError(path + ":2: expected \"mode=<m> form=diagonal n_src=<n>\"");
        if (mtok == "mode=empirical")
            mode = FisherMode::Empirical;
        else if (mtok == "mode=model")
            mode = FisherMode::Model;
        else
            throw ParseError(path + ":2: unknown mode \"" + mtok + "\"");
        n_src = std::stoull(ntok.substr(6));
    }

    next_line(3);
    if (line.rfind("m=", 0) != 0) throw ParseError(path + ":3: expected m=<count>");
    const std::size_t m = std::stoull(line.substr(2));

    std::vector<double> values(m);
    for (std::size_t i = 0; i < m; ++i) {
        next_line(4 + i);
        try {
            values[i] = std::stod(line);
        } catch (const std::exception&) {
            std::ostringstream os;
            os << path << ":" << 4 + i << ": malformed value \"" << line << "\"";
            throw ParseError(os.str());
        }
    }
    return FisherEstimate(FisherForm::Diagonal, mode, m, n_src, std::move(values));
}

}  // namespace pbu

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pbu/dataset.hpp"
#include "pbu/kernels.hpp"
#include "pbu/model.hpp"

namespace pbu {

/// Fisher information of the model log-likelihood over a dataset, SUM
/// convention (no 1/N). Empirical mode squares scores at the observed
/// labels; Model mode takes the exact expectation over the C-way predictive
/// distribution per example.
class FisherEstimate {
public:
    FisherEstimate(FisherForm form, FisherMode mode, std::size_t dim, std::size_t n_src,
                   std::vector<double> values);

    FisherForm form() const { return form_; }
    FisherMode mode() const { return mode_; }
    std::size_t dim() const { return dim_; }
    std::size_t n_src() const { return n_src_; }
    const std::vector<double>& values() const { return values_; }

    /// d^T F d for a displacement d of length dim().
    double quad(std::span<const double> d) const;
    /// 2 F d (gradient of the quadratic form).
    std::vector<double> quad_grad(std::span<const double> d) const;

    double full_at(std::size_t r, std::size_t c) const { return values_[r * dim_ + c]; }

private:
    FisherForm form_;
    FisherMode mode_;
    std::size_t dim_;
    std::size_t n_src_;
    std::vector<double> values_;  // dim (diagonal) or dim*dim (full, row-major)
};

/// Gradient of log P(y = c | x, theta) w.r.t. theta.
ParamVector score(const ModelSpec& spec, const ParamVector& theta, std::span<const double> x,
                  int c);

FisherEstimate fisher_diagonal(const ModelSpec& spec, const ParamVector& theta,
                               const Dataset& data, FisherMode mode);

/// Full m x m estimate. Refuses m > 2000 (O(m^2) memory); use the diagonal
/// form there.
FisherEstimate fisher_full(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
                           FisherMode mode);

/// (theta - theta_star)^T F (theta - theta_star).
double mahalanobis_sq(const ParamVector& theta, const ParamVector& theta_star,
                      const FisherEstimate& fisher);
ParamVector mahalanobis_sq_grad(const ParamVector& theta, const ParamVector& theta_star,
                                const FisherEstimate& fisher);

/// Gaussian prior N(0, lambda I) treated as precision lambda, matching the
/// algebra grad^2 log P(theta) = -lambda I.
struct PriorSpec {
    double lambda = 0.0;
    void validate() const;
};

/// log P(data|theta) - (lambda/2) ||theta||^2, additive constants dropped.
double log_posterior_unnorm(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
                            const PriorSpec& prior);
ParamVector log_posterior_grad(const ModelSpec& spec, const ParamVector& theta,
                               const Dataset& data, const PriorSpec& prior);

/// Dense symmetric Hessian by central differences of a gradient callable,
/// step h on each coordinate. Row-major m x m.
std::vector<double> fd_hessian(
    const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
    const std::vector<double>& x0, double h);

/// |f(x0+delta) - f(x0) - 1/2 delta^T H delta| with H the fd_hessian of
/// grad_fn at x0. Generic second-order Taylor remainder (no linear term:
/// meant for stationary x0).
double taylor2_residual(const std::function<double(const std::vector<double>&)>& f,
                        const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
                        const std::vector<double>& x0, const std::vector<double>& delta, double h);

/// Taylor remainder of the log posterior around a near-stationary theta_star
/// (requires ||grad||_inf <= 1e-4 and m <= 200; Hessian step h = 1e-4).
double quadratic_residual(const ModelSpec& spec, const ParamVector& theta_star,
                          const Dataset& data, const PriorSpec& prior, const ParamVector& delta);

/// Full-batch MAP fit of the log posterior: Adam warmup then Newton polish
/// with the finite-difference Hessian. Intended for the small models used in
/// the theory checks (m <= 200).
ParamVector map_estimate(const ModelSpec& spec, const Dataset& data, const PriorSpec& prior,
                         std::uint64_t seed, int adam_iters = 2000, int newton_iters = 4);

/// "PBUFISH v1" text file; diagonal form only.
void save_fisher(const FisherEstimate& fisher, const std::string& path);
FisherEstimate load_fisher(const std::string& path);

}  // namespace pbu

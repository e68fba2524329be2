#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pbu/tensor.hpp"

namespace pbu {

/// Reverse-mode autodiff on a Wengert list. Nodes are appended in forward
/// order, so walking the list backwards visits them in reverse topological
/// order. Adjoints of nodes not on a path to the root stay exactly zero.
///
/// Single-threaded by design; batch parallelism happens one tape per example
/// (see kernels.hpp).
class GradTape {
public:
    using Id = std::int32_t;

    Id leaf(Tensor value);

    Id matmul(Id a, Id b);  // {r,k}x{k,c}, {r,k}x{k} or {k}x{k,c}
    Id add(Id a, Id b);     // same shape
    Id sub(Id a, Id b);     // same shape
    Id mul(Id a, Id b);     // elementwise, same shape
    Id relu(Id a);
    Id log_softmax(Id a);  // vector only; max-subtracted for stability
    Id square(Id a);
    Id sum(Id a);                    // reduce to scalar
    Id pick(Id a, std::size_t idx);  // vector component -> scalar
    Id scale(Id a, double s);

    const Tensor& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    std::size_t size() const { return nodes_.size(); }

    /// Propagate adjoints from a scalar root. Resets previous adjoints, so
    /// the tape can be differentiated from several roots in turn.
    void backward(Id root);

    /// Adjoint of a node after backward(). Zero tensor if unreachable.
    const Tensor& grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    /// Overwrite a leaf's values (same shape) and re-run the forward pass in
    /// place. Lets batch kernels reuse one tape per thread instead of
    /// rebuilding it per example.
    void set_leaf(Id leaf, std::span<const double> values);
    void recompute();

private:
    enum class Op : std::uint8_t {
        Leaf,
        MatMul,
        Add,
        Sub,
        Mul,
        Relu,
        LogSoftmax,
        Square,
        Sum,
        Pick,
        Scale,
    };

    struct Node {
        Op op;
        Id a = -1;
        Id b = -1;
        std::size_t index = 0;  // Pick
        double factor = 0.0;    // Scale
        Tensor value;
        Tensor grad;
    };

    Id push(Node node);
    void eval(Node& n);  // forward math into the node's value buffer
    Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }
    void check_id(Id id) const;

    std::vector<Node> nodes_;
};

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
/// Throws ContractError naming the coordinate if a probe produces a
/// non-finite loss.
double grad_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                  const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
                  const std::vector<double>& theta, double h);

}  // namespace pbu

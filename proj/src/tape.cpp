#include "pbu/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pbu/errors.hpp"

namespace pbu {

namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    std::ostringstream os;
    os << op << ": incompatible shapes " << a.shape_str() << " and " << b.shape_str();
    throw ShapeError(os.str());
}

}  // namespace

GradTape::Id GradTape::push(Node n) {
    nodes_.push_back(std::move(n));
    Node& added = nodes_.back();
    if (added.op != Op::Leaf) eval(added);
    return static_cast<Id>(nodes_.size() - 1);
}

void GradTape::check_id(Id id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw ContractError("tape id out of range");
}

// Forward math for one node, writing into its (pre-shaped) value buffer.
// Shared between construction and recompute().
void GradTape::eval(Node& n) {
    Tensor& out = n.value;
    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::MatMul: {
            const Tensor& A = value(n.a);
            const Tensor& B = value(n.b);
            const double* a = A.data().data();
            const double* b = B.data().data();
            double* o = out.data().data();
            if (A.rank() == 2 && B.rank() == 2) {
                const std::size_t rows = A.shape()[0], inner = A.shape()[1],
                                  cols = B.shape()[1];
                std::fill(out.data().begin(), out.data().end(), 0.0);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t k = 0; k < inner; ++k) {
                        const double aik = a[i * inner + k];
                        for (std::size_t j = 0; j < cols; ++j)
                            o[i * cols + j] += aik * b[k * cols + j];
                    }
            } else if (A.rank() == 2 && B.rank() == 1) {
                const std::size_t rows = A.shape()[0], inner = A.shape()[1];
                for (std::size_t i = 0; i < rows; ++i) {
                    const double* arow = a + i * inner;
                    double acc = 0.0;
                    for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * b[k];
                    o[i] = acc;
                }
            } else {  // {k} x {k,c}
                const std::size_t inner = B.shape()[0], cols = B.shape()[1];
                std::fill(out.data().begin(), out.data().end(), 0.0);
                for (std::size_t k = 0; k < inner; ++k) {
                    const double ak = a[k];
                    const double* brow = b + k * cols;
                    for (std::size_t j = 0; j < cols; ++j) o[j] += ak * brow[j];
                }
            }
            break;
        }
        case Op::Add: {
            const Tensor& A = value(n.a);
            const Tensor& B = value(n.b);
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] + B[i];
            break;
        }
        case Op::Sub: {
            const Tensor& A = value(n.a);
            const Tensor& B = value(n.b);
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] - B[i];
            break;
        }
        case Op::Mul: {
            const Tensor& A = value(n.a);
            const Tensor& B = value(n.b);
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] * B[i];
            break;
        }
        case Op::Relu: {
            const Tensor& A = value(n.a);
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(A[i], 0.0);
            break;
        }
        case Op::LogSoftmax: {
            const Tensor& A = value(n.a);
            const std::size_t m = A.numel();
            double mx = A[0];
            for (std::size_t i = 1; i < m; ++i) mx = std::max(mx, A[i]);
            double se = 0.0;
            for (std::size_t i = 0; i < m; ++i) se += std::exp(A[i] - mx);
            const double lse = mx + std::log(se);
            for (std::size_t i = 0; i < m; ++i) out[i] = A[i] - lse;
            break;
        }
        case Op::Square: {
            const Tensor& A = value(n.a);
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] * A[i];
            break;
        }
        case Op::Sum: {
            const Tensor& A = value(n.a);
            double acc = 0.0;
            for (std::size_t i = 0; i < A.numel(); ++i) acc += A[i];
            out[0] = acc;
            break;
        }
        case Op::Pick:
            out[0] = value(n.a)[n.index];
            break;
        case Op::Scale: {
            const Tensor& A = value(n.a);
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = n.factor * A[i];
            break;
        }
    }
}

GradTape::Id GradTape::leaf(Tensor value) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    return push(std::move(n));
}

GradTape::Id GradTape::matmul(Id a, Id b) {
    check_id(a);
    check_id(b);
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    if (A.rank() == 2 && B.rank() == 2) {
        if (A.cols() != B.rows()) shape_fail("matmul", A, B);
        n.value = Tensor::matrix(A.rows(), B.cols());
    } else if (A.rank() == 2 && B.rank() == 1) {
        if (A.cols() != B.numel()) shape_fail("matmul", A, B);
        n.value = Tensor({A.rows()});
    } else if (A.rank() == 1 && B.rank() == 2) {
        if (A.numel() != B.rows()) shape_fail("matmul", A, B);
        n.value = Tensor({B.cols()});
    } else {
        shape_fail("matmul", A, B);
    }
    return push(std::move(n));
}

GradTape::Id GradTape::add(Id a, Id b) {
    check_id(a);
    check_id(b);
    if (!value(a).same_shape(value(b))) shape_fail("add", value(a), value(b));
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.value = Tensor(std::vector<std::size_t>(value(a).shape()));
    return push(std::move(n));
}

GradTape::Id GradTape::sub(Id a, Id b) {
    check_id(a);
    check_id(b);
    if (!value(a).same_shape(value(b))) shape_fail("sub", value(a), value(b));
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.value = Tensor(std::vector<std::size_t>(value(a).shape()));
    return push(std::move(n));
}

GradTape::Id GradTape::mul(Id a, Id b) {
    check_id(a);
    check_id(b);
    if (!value(a).same_shape(value(b))) shape_fail("mul", value(a), value(b));
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.value = Tensor(std::vector<std::size_t>(value(a).shape()));
    return push(std::move(n));
}

GradTape::Id GradTape::relu(Id a) {
    check_id(a);
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.value = Tensor(std::vector<std::size_t>(value(a).shape()));
    return push(std::move(n));
}

GradTape::Id GradTape::log_softmax(Id a) {
    check_id(a);
    const Tensor& A = value(a);
    if (A.rank() != 1 || A.numel() == 0)
        throw ShapeError("log_softmax: expected nonempty vector, got " + A.shape_str());
    Node n;
    n.op = Op::LogSoftmax;
    n.a = a;
    n.value = Tensor(std::vector<std::size_t>(A.shape()));
    return push(std::move(n));
}

GradTape::Id GradTape::square(Id a) {
    check_id(a);
    Node n;
    n.op = Op::Square;
    n.a = a;
    n.value = Tensor(std::vector<std::size_t>(value(a).shape()));
    return push(std::move(n));
}

GradTape::Id GradTape::sum(Id a) {
    check_id(a);
    Node n;
    n.op = Op::Sum;
    n.a = a;
    n.value = Tensor::scalar(0.0);
    return push(std::move(n));
}

GradTape::Id GradTape::pick(Id a, std::size_t idx) {
    check_id(a);
    const Tensor& A = value(a);
    if (A.rank() != 1 || idx >= A.numel())
        throw ShapeError("pick: index out of range for shape " + A.shape_str());
    Node n;
    n.op = Op::Pick;
    n.a = a;
    n.index = idx;
    n.value = Tensor::scalar(0.0);
    return push(std::move(n));
}

GradTape::Id GradTape::scale(Id a, double s) {
    check_id(a);
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.factor = s;
    n.value = Tensor(std::vector<std::size_t>(value(a).shape()));
    return push(std::move(n));
}

void GradTape::set_leaf(Id leaf, std::span<const double> values) {
    check_id(leaf);
    Node& n = node(leaf);
    if (n.op != Op::Leaf) throw ContractError("set_leaf: node is not a leaf");
    if (values.size() != n.value.numel())
        throw ShapeError("set_leaf: value count does not match leaf shape");
    std::copy(values.begin(), values.end(), n.value.data().begin());
}

void GradTape::recompute() {
    for (Node& n : nodes_) eval(n);
}

void GradTape::backward(Id root) {
    check_id(root);
    if (!value(root).is_scalar())
        throw ContractError("backward: root must be scalar, got shape " + value(root).shape_str());

    for (Node& n : nodes_) {
        if (n.grad.numel() == n.value.numel() && n.grad.shape() == n.value.shape()) {
            std::fill(n.grad.data().begin(), n.grad.data().end(), 0.0);
        } else {
            n.grad = Tensor(std::vector<std::size_t>(n.value.shape()));
        }
    }
    node(root).grad[0] = 1.0;

    for (Id id = root; id >= 0; --id) {
        const Node& n = node(id);
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::MatMul: {
                const Tensor& A = value(n.a);
                const Tensor& B = value(n.b);
                Tensor& dA = node(n.a).grad;
                Tensor& dB = node(n.b).grad;
                const double* a = A.data().data();
                const double* b = B.data().data();
                double* da = dA.data().data();
                double* db = dB.data().data();
                if (A.rank() == 2 && B.rank() == 2) {
                    const std::size_t rows = A.shape()[0], inner = A.shape()[1],
                                      cols = B.shape()[1];
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j) {
                            const double gij = g[i * cols + j];
                            for (std::size_t k = 0; k < inner; ++k) {
                                da[i * inner + k] += gij * b[k * cols + j];
                                db[k * cols + j] += a[i * inner + k] * gij;
                            }
                        }
                } else if (A.rank() == 2 && B.rank() == 1) {
                    const std::size_t rows = A.shape()[0], inner = A.shape()[1];
                    for (std::size_t i = 0; i < rows; ++i) {
                        const double gi = g[i];
                        if (gi == 0.0) continue;
                        const double* arow = a + i * inner;
                        double* darow = da + i * inner;
                        for (std::size_t k = 0; k < inner; ++k) {
                            darow[k] += gi * b[k];
                            db[k] += arow[k] * gi;
                        }
                    }
                } else {  // {k} x {k,c}
                    const std::size_t inner = B.shape()[0], cols = B.shape()[1];
                    for (std::size_t k = 0; k < inner; ++k) {
                        const double* brow = b + k * cols;
                        double* dbrow = db + k * cols;
                        const double ak = a[k];
                        double acc = 0.0;
                        for (std::size_t j = 0; j < cols; ++j) {
                            const double gj = g[j];
                            acc += brow[j] * gj;
                            dbrow[j] += ak * gj;
                        }
                        da[k] += acc;
                    }
                }
                break;
            }
            case Op::Add: {
                Tensor& dA = node(n.a).grad;
                Tensor& dB = node(n.b).grad;
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    dA[i] += g[i];
                    dB[i] += g[i];
                }
                break;
            }
            case Op::Sub: {
                Tensor& dA = node(n.a).grad;
                Tensor& dB = node(n.b).grad;
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    dA[i] += g[i];
                    dB[i] -= g[i];
                }
                break;
            }
            case Op::Mul: {
                const Tensor& A = value(n.a);
                const Tensor& B = value(n.b);
                Tensor& dA = node(n.a).grad;
                Tensor& dB = node(n.b).grad;
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    dA[i] += B[i] * g[i];
                    dB[i] += A[i] * g[i];
                }
                break;
            }
            case Op::Relu: {
                const Tensor& A = value(n.a);
                Tensor& dA = node(n.a).grad;
                for (std::size_t i = 0; i < g.numel(); ++i)
                    if (A[i] > 0.0) dA[i] += g[i];
                break;
            }
            case Op::LogSoftmax: {
                // dx_i = g_i - softmax_i * sum(g)
                Tensor& dA = node(n.a).grad;
                double gsum = 0.0;
                for (std::size_t i = 0; i < g.numel(); ++i) gsum += g[i];
                for (std::size_t i = 0; i < g.numel(); ++i)
                    dA[i] += g[i] - std::exp(n.value[i]) * gsum;
                break;
            }
            case Op::Square: {
                const Tensor& A = value(n.a);
                Tensor& dA = node(n.a).grad;
                for (std::size_t i = 0; i < g.numel(); ++i) dA[i] += 2.0 * A[i] * g[i];
                break;
            }
            case Op::Sum: {
                Tensor& dA = node(n.a).grad;
                const double g0 = g[0];
                for (std::size_t i = 0; i < dA.numel(); ++i) dA[i] += g0;
                break;
            }
            case Op::Pick: {
                node(n.a).grad[n.index] += g[0];
                break;
            }
            case Op::Scale: {
                Tensor& dA = node(n.a).grad;
                for (std::size_t i = 0; i < g.numel(); ++i) dA[i] += n.factor * g[i];
                break;
            }
        }
    }
}

double grad_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                  const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
                  const std::vector<double>& theta, double h) {
    if (h <= 0.0) throw ContractError("grad_check: step size must be positive");
    const std::vector<double> analytic = grad_fn(theta);
    if (analytic.size() != theta.size())
        throw ContractError("grad_check: gradient length does not match parameter length");

    double worst = 0.0;
    std::vector<double> probe = theta;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        probe[j] = theta[j] + h;
        const double fp = loss_fn(probe);
        probe[j] = theta[j] - h;
        const double fm = loss_fn(probe);
        probe[j] = theta[j];
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            std::ostringstream os;
            os << "grad_check: non-finite loss probing coordinate " << j;
            throw ContractError(os.str());
        }
        const double fd = (fp - fm) / (2.0 * h);
        const double err = std::abs(analytic[j] - fd) / std::max(1.0, std::abs(analytic[j]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace pbu

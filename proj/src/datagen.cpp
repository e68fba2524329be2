#include "pbu/datagen.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "pbu/errors.hpp"
#include "pbu/rng.hpp"

namespace pbu {

namespace {

// Random orthogonal d x d map: Gaussian matrix, Gram-Schmidt on columns.
// Column-major storage: q[c] is the c-th orthonormal column.
std::vector<std::vector<double>> random_orthogonal(std::size_t d, Rng& rng) {
    std::vector<std::vector<double>> q(d, std::vector<double>(d));
    for (std::size_t c = 0; c < d; ++c)
        for (std::size_t r = 0; r < d; ++r) q[c][r] = rng.next_gaussian();
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t prev = 0; prev < c; ++prev) {
            double dot = 0.0;
            for (std::size_t r = 0; r < d; ++r) dot += q[c][r] * q[prev][r];
            for (std::size_t r = 0; r < d; ++r) q[c][r] -= dot * q[prev][r];
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < d; ++r) norm += q[c][r] * q[c][r];
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < d; ++r) q[c][r] /= norm;
    }
    return q;
}

}  // namespace

Dataset gen_blobs(std::size_t d, int classes, std::size_t n_per_class, double spread,
                  std::uint64_t seed) {
    if (d < 1) throw ContractError("gen_blobs: d must be >= 1");
    if (classes < 2) throw ContractError("gen_blobs: need at least 2 classes");
    if (!(spread > 0.0)) throw ContractError("gen_blobs: spread must be > 0");
    if (n_per_class < 1) throw ContractError("gen_blobs: n_per_class must be >= 1");

    Rng rng(seed);
    const auto q = random_orthogonal(d, rng);

    Dataset data(d, classes);
    std::vector<double> x(d);
    for (int c = 0; c < classes; ++c) {
        const std::size_t axis = static_cast<std::size_t>(c) % d;
        for (std::size_t i = 0; i < n_per_class; ++i) {
            for (std::size_t r = 0; r < d; ++r)
                x[r] = 4.0 * q[axis][r] + spread * rng.next_gaussian();
            data.add(x, c);
        }
    }
    return data;
}

Dataset gen_rings(int classes, std::size_t n_per_class, double noise, std::uint64_t seed) {
    if (classes < 2) throw ContractError("gen_rings: need at least 2 classes");
    if (noise < 0.0) throw ContractError("gen_rings: noise must be >= 0");
    if (n_per_class < 1) throw ContractError("gen_rings: n_per_class must be >= 1");

    Rng rng(seed);
    Dataset data(2, classes);
    for (int c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            const double angle = 2.0 * std::numbers::pi * rng.next_double();
            const double radius = 1.0 + static_cast<double>(c) + noise * rng.next_gaussian();
            data.add({radius * std::cos(angle), radius * std::sin(angle)}, c);
        }
    }
    return data;
}

}  // namespace pbu

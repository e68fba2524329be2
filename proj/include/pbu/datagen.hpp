#pragma once

#include <cstdint>

#include "pbu/dataset.hpp"

namespace pbu {

/// Gaussian blobs: class c centered at 4*e_{c mod d} pushed through a seeded
/// random orthogonal map, isotropic noise with std = spread. Examples are
/// emitted class-major, exactly n_per_class each.
Dataset gen_blobs(std::size_t d, int classes, std::size_t n_per_class, double spread,
                  std::uint64_t seed);

/// Concentric rings in 2-D: class c at radius 1 + c with radial Gaussian
/// noise; angles uniform. Exactly n_per_class per class.
Dataset gen_rings(int classes, std::size_t n_per_class, double noise, std::uint64_t seed);

}  // namespace pbu

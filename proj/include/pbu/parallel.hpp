#pragma once

#include <cstddef>
#include <exception>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pbu::par {

/// Runtime switch for the OpenMP paths. On by default when compiled with
/// OpenMP; kernels fall back to plain loops when disabled.
bool enabled();
void set_enabled(bool on);
int max_threads();

/// Index of the calling thread inside a for_index body (0 when serial).
inline int thread_index() {
#ifdef _OPENMP
    return omp_get_thread_num();
#else
    return 0;
#endif
}

/// Parallel loop over [0, n). Exceptions thrown by the body are captured and
/// rethrown after the region (throwing across an OpenMP boundary would
/// terminate). The body must only write to per-index state; reductions happen
/// outside, in index order.
template <class F>
void for_index(std::size_t n, F&& f) {
#ifdef _OPENMP
    if (enabled() && n > 1) {
        std::exception_ptr err;
        const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < nn; ++i) {
            try {
                f(static_cast<std::size_t>(i));
            } catch (...) {
#pragma omp critical
                if (!err) err = std::current_exception();
            }
        }
        if (err) std::rethrow_exception(err);
        return;
    }
#endif
    for (std::size_t i = 0; i < n; ++i) f(i);
}

}  // namespace pbu::par

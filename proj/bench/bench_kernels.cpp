// Times the OpenMP kernels against the serial reference implementation.
// Three lanes per kernel: reference (hand-written serial backprop), the
// production kernel pinned to one thread, and the production kernel with all
// threads.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "pbu/dataset.hpp"
#include "pbu/kernels.hpp"
#include "pbu/model.hpp"
#include "pbu/parallel.hpp"
#include "pbu/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace pbu;

namespace {

Dataset random_dataset(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset data(spec.input_dim, spec.num_classes);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(spec.input_dim);
        for (double& v : x) v = rng.next_gaussian();
        data.add(std::move(x), static_cast<int>(rng.next_below(spec.num_classes)));
    }
    return data;
}

double time_seconds(const std::function<void()>& fn, int reps) {
    fn();  // warmup
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

void report(const char* name, double ref_s, double one_s, double all_s) {
    std::printf("%-28s %10.4f ms %12.4f ms %12.4f ms %8.2fx\n", name, 1e3 * ref_s, 1e3 * one_s,
                1e3 * all_s, all_s > 0 ? ref_s / all_s : 0.0);
}

}  // namespace

int main() {
    const ModelSpec spec{16, {32}, 4};
    const ParamVector theta = init_params(spec, 7);
    const Dataset data = random_dataset(spec, 2000, 11);
    const int reps = 5;

#ifdef _OPENMP
    std::printf("threads available: %d\n", omp_get_max_threads());
#else
    std::printf("compiled without OpenMP\n");
#endif
    std::printf("model m=%zu, dataset n=%zu\n\n", spec.param_count(), data.size());
    std::printf("%-28s %13s %15s %15s %9s\n", "kernel", "reference", "kernel(1thr)",
                "kernel(all)", "speedup");

    auto bench = [&](const char* name, const std::function<void()>& ref,
                     const std::function<void()>& kern) {
        const double ref_s = time_seconds(ref, reps);
        par::set_enabled(false);
        const double one_s = time_seconds(kern, reps);
        par::set_enabled(true);
        const double all_s = time_seconds(kern, reps);
        report(name, ref_s, one_s, all_s);
    };

    bench(
        "loglik value", [&] { reference::loglik_value(spec, theta, data); },
        [&] { kernels::loglik_value(spec, theta, data); });
    bench(
        "loglik gradient", [&] { reference::loglik_grad(spec, theta, data); },
        [&] { kernels::loglik_grad(spec, theta, data); });
    bench(
        "per-example losses", [&] { reference::example_losses(spec, theta, data); },
        [&] { kernels::example_losses(spec, theta, data); });
    bench(
        "accuracy count", [&] { reference::correct_count(spec, theta, data); },
        [&] { kernels::correct_count(spec, theta, data); });
    bench(
        "fisher diag (empirical)",
        [&] { reference::fisher_diag_accum(spec, theta, data, FisherMode::Empirical); },
        [&] { kernels::fisher_diag_accum(spec, theta, data, FisherMode::Empirical); });
    bench(
        "fisher diag (model)",
        [&] { reference::fisher_diag_accum(spec, theta, data, FisherMode::Model); },
        [&] { kernels::fisher_diag_accum(spec, theta, data, FisherMode::Model); });

    const Dataset small = random_dataset(spec, 300, 13);
    bench(
        "fisher full (model, n=300)",
        [&] { reference::fisher_full_accum(spec, theta, small, FisherMode::Model); },
        [&] { kernels::fisher_full_accum(spec, theta, small, FisherMode::Model); });

    return 0;
}

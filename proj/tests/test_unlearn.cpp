#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "pbu/errors.hpp"
#include "pbu/fisher.hpp"
#include "pbu/kernels.hpp"
#include "pbu/model.hpp"
#include "pbu/rng.hpp"
#include "pbu/tape.hpp"
#include "pbu/train.hpp"
#include "pbu/unlearn.hpp"

using namespace pbu;

namespace {

Dataset class_blob(const ModelSpec& spec, int label, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset data(spec.input_dim, spec.num_classes);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(spec.input_dim);
        for (double& v : x) v = 1.5 + 0.5 * rng.next_gaussian();
        data.add(std::move(x), label);
    }
    return data;
}

Dataset three_blobs(std::size_t n_per_class, std::uint64_t seed) {
    Rng rng(seed);
    Dataset data(2, 3);
    const double cx[3] = {-3.0, 3.0, 0.0};
    const double cy[3] = {0.0, 0.0, 3.5};
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n_per_class; ++i)
            data.add({cx[c] + 0.6 * rng.next_gaussian(), cy[c] + 0.6 * rng.next_gaussian()}, c);
    return data;
}

double norm(const ParamVector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double norm_diff(const ParamVector& a, const ParamVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("pbu loss at theta* reduces to the alpha term") {
    const ModelSpec spec{2, {3}, 3};
    const ParamVector theta_star = init_params(spec, 1);
    const Dataset sn = class_blob(spec, 1, 8, 2);
    const FisherEstimate f = fisher_diagonal(spec, theta_star, sn, FisherMode::Empirical);

    PBUConfig cfg;
    cfg.alpha = 2.5;
    cfg.beta = 7.0;
    cfg.gamma = 3.0;
    const double want = 2.5 * log_likelihood(spec, theta_star, sn);
    CHECK(pbu_loss(spec, theta_star, theta_star, f, sn, cfg) ==
          doctest::Approx(want).epsilon(1e-15));

    cfg.alpha = 0.0;
    CHECK(pbu_loss(spec, theta_star, theta_star, f, sn, cfg) == 0.0);
}

TEST_CASE("pbu loss equals the three independently computed terms") {
    const ModelSpec spec{2, {4}, 3};
    const ParamVector theta_star = init_params(spec, 3);
    ParamVector theta = theta_star;
    Rng rng(5);
    for (double& v : theta) v += 0.2 * rng.next_gaussian();
    const Dataset sn = class_blob(spec, 2, 10, 4);

    for (const FisherForm form : {FisherForm::Diagonal, FisherForm::Full}) {
        const FisherEstimate f = form == FisherForm::Diagonal
                                     ? fisher_diagonal(spec, theta_star, sn, FisherMode::Empirical)
                                     : fisher_full(spec, theta_star, sn, FisherMode::Empirical);
        PBUConfig cfg;
        cfg.alpha = 1.3;
        cfg.beta = 0.7;
        cfg.gamma = 2.1;
        cfg.fisher_form = form;

        double l2 = 0.0;
        for (std::size_t j = 0; j < theta.size(); ++j)
            l2 += (theta[j] - theta_star[j]) * (theta[j] - theta_star[j]);
        const double want = 1.3 * log_likelihood(spec, theta, sn) +
                            0.7 * mahalanobis_sq(theta, theta_star, f) + 2.1 * l2;
        CHECK(pbu_loss(spec, theta, theta_star, f, sn, cfg) ==
              doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("pbu loss rejects bad forget sets and weights") {
    const ModelSpec spec{2, {}, 3};
    const ParamVector theta = init_params(spec, 1);
    Dataset mixed(2, 3);
    mixed.add({0.1, 0.2}, 0);
    mixed.add({0.3, 0.4}, 1);
    const Dataset single = class_blob(spec, 0, 4, 1);
    const FisherEstimate f = fisher_diagonal(spec, theta, single, FisherMode::Empirical);

    PBUConfig cfg;
    CHECK_THROWS_AS(pbu_loss(spec, theta, theta, f, mixed, cfg), ContractError);
    CHECK_THROWS_AS(pbu_loss(spec, theta, theta, f, Dataset(2, 3), cfg), ContractError);

    PBUConfig bad;
    bad.alpha = -1.0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    PBUConfig bad2;
    bad2.eta = 0.0;
    CHECK_THROWS_AS(bad2.validate(), ContractError);
    PBUConfig bad3;
    bad3.steps = 0;
    CHECK_THROWS_AS(bad3.validate(), ContractError);
}

TEST_CASE("pbu loss gradient matches finite differences") {
    const ModelSpec spec{3, {5}, 3};
    REQUIRE(spec.param_count() <= 200);
    const ParamVector theta_star = init_params(spec, 8);
    Dataset sn(3, 3);
    Rng rng(9);
    for (int i = 0; i < 7; ++i)
        sn.add({rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian()}, 1);

    for (const FisherForm form : {FisherForm::Diagonal, FisherForm::Full}) {
        const FisherEstimate f = form == FisherForm::Diagonal
                                     ? fisher_diagonal(spec, theta_star, sn, FisherMode::Model)
                                     : fisher_full(spec, theta_star, sn, FisherMode::Model);
        PBUConfig cfg;
        cfg.alpha = 0.9;
        cfg.beta = 0.4;
        cfg.gamma = 1.7;
        cfg.fisher_form = form;

        ParamVector theta = theta_star;
        for (double& v : theta) v += 0.15 * rng.next_gaussian();
        auto fn = [&](const std::vector<double>& v) {
            return pbu_loss(spec, v, theta_star, f, sn, cfg);
        };
        auto gf = [&](const std::vector<double>& v) {
            return pbu_loss_grad(spec, v, theta_star, f, sn, cfg);
        };
        CHECK(grad_check(fn, gf, theta, 1e-5) <= 1e-5);
    }
}

TEST_CASE("pbu optimizer step arithmetic") {
    PBUConfig cfg;
    cfg.eta = 0.1;
    cfg.optimizer = UnlearnOptimizer::PlainGd;
    PbuOptimizer opt(cfg, 1);

    // 1-D quadratic L = (theta-1)^2 at theta=0: grad = -2, step -> 0.2
    ParamVector theta{0.0};
    opt.step(theta, {-2.0});
    CHECK(theta[0] == doctest::Approx(0.2).epsilon(1e-15));

    // zero gradient leaves theta bitwise unchanged
    ParamVector fixed{0.57721566490153287, -1.5};
    const ParamVector before = fixed;
    PbuOptimizer opt2(cfg, 2);
    opt2.step(fixed, {0.0, 0.0});
    CHECK(fixed == before);

    PbuOptimizer opt3(cfg, 1);
    ParamVector t{1.0};
    CHECK_THROWS_AS(opt3.step(t, {std::nan("")}), DivergenceError);
}

TEST_CASE("alpha = 0 makes theta* a bitwise fixed point for any T_ul") {
    const ModelSpec spec{2, {4}, 3};
    const Dataset data = three_blobs(15, 6);
    TrainConfig tc;
    tc.epochs = 40;
    tc.learning_rate = 0.01;
    tc.seed = 2;
    const Checkpoint initial = train(spec, data, tc);
    const Dataset sn = data.split_by_class(1).first;

    for (const int steps : {1, 10, 100}) {
        PBUConfig cfg;
        cfg.alpha = 0.0;
        cfg.beta = 5.0;
        cfg.gamma = 2.0;
        cfg.eta = 0.05;
        cfg.steps = steps;
        const UnlearnResult res = run_pbu(spec, initial, sn, cfg);
        CHECK(res.theta_u == initial.theta);  // bitwise
        CHECK(res.steps_run == steps);
    }
}

TEST_CASE("a huge gamma anchors theta to theta*") {
    const ModelSpec spec{2, {4}, 3};
    const Dataset data = three_blobs(20, 8);
    TrainConfig tc;
    tc.epochs = 60;
    tc.learning_rate = 0.01;
    tc.seed = 3;
    const Checkpoint initial = train(spec, data, tc);
    const Dataset sn = data.split_by_class(0).first;

    PBUConfig cfg;
    cfg.alpha = 10.0;
    cfg.beta = 0.0;
    cfg.gamma = 1e6;
    cfg.eta = 2e-7;  // keeps eta*2*gamma < 2
    cfg.steps = 100;
    const UnlearnResult anchored = run_pbu(spec, initial, sn, cfg);
    CHECK(norm_diff(anchored.theta_u, initial.theta) <= 1e-3 * norm(initial.theta));

    // sanity: without the anchor the same push moves much further
    PBUConfig free = cfg;
    free.gamma = 0.0;
    const UnlearnResult drifted = run_pbu(spec, initial, sn, free);
    CHECK(norm_diff(drifted.theta_u, initial.theta) >
          5.0 * norm_diff(anchored.theta_u, initial.theta));
}

TEST_CASE("loss trace starts at alpha * log P(S_n | theta*)") {
    const ModelSpec spec{2, {4}, 3};
    const Dataset data = three_blobs(15, 12);
    TrainConfig tc;
    tc.epochs = 50;
    tc.learning_rate = 0.01;
    tc.seed = 7;
    const Checkpoint initial = train(spec, data, tc);
    const Dataset sn = data.split_by_class(2).first;

    PBUConfig cfg;
    cfg.alpha = 0.02;
    cfg.beta = 1.0;
    cfg.gamma = 1.0;
    cfg.eta = 0.02;
    cfg.steps = 5;
    const UnlearnResult res = run_pbu(spec, initial, sn, cfg);
    REQUIRE(res.loss_trace.size() == 5);
    CHECK(res.loss_trace[0] ==
          doctest::Approx(0.02 * log_likelihood(spec, initial.theta, sn)).epsilon(1e-12));
    CHECK(res.epochs == doctest::Approx(5.0));  // full batch: one epoch per step

    // single-step instrumentation
    CHECK(res.counters.fisher_computations == 1);
    CHECK(res.counters.optimization_phases == 1);
    CHECK(res.counters.retain_examples_touched == 0);
}

TEST_CASE("mini-batch unlearning is deterministic and keeps the full-loss trace head") {
    const ModelSpec spec{2, {4}, 3};
    const Dataset data = three_blobs(15, 13);
    TrainConfig tc;
    tc.epochs = 50;
    tc.learning_rate = 0.01;
    tc.seed = 9;
    const Checkpoint initial = train(spec, data, tc);
    const Dataset sn = data.split_by_class(1).first;

    PBUConfig cfg;
    cfg.alpha = 0.02;
    cfg.beta = 0.5;
    cfg.gamma = 0.5;
    cfg.eta = 0.02;
    cfg.steps = 6;
    cfg.batch_size = 5;  // |S_n| = 15 -> 3 steps per pass
    cfg.seed = 31;
    const UnlearnResult a = run_pbu(spec, initial, sn, cfg);
    const UnlearnResult b = run_pbu(spec, initial, sn, cfg);
    CHECK(a.theta_u == b.theta_u);
    CHECK(a.loss_trace == b.loss_trace);
    CHECK(a.epochs == doctest::Approx(2.0));  // 6 steps of 5 over 15 examples
    CHECK(a.loss_trace[0] ==
          doctest::Approx(0.02 * log_likelihood(spec, initial.theta, sn)).epsilon(1e-12));
}

TEST_CASE("the unlearning loop raises a divergence error when the loss runs away") {
    const ModelSpec spec{2, {4}, 3};
    const Dataset data = three_blobs(15, 14);
    TrainConfig tc;
    tc.epochs = 30;
    tc.learning_rate = 0.01;
    tc.seed = 1;
    const Checkpoint initial = train(spec, data, tc);
    const Dataset sn = data.split_by_class(0).first;

    PBUConfig cfg;
    cfg.alpha = 1e8;
    cfg.eta = 10.0;  // wildly unstable on purpose
    cfg.steps = 400;
    CHECK_THROWS_AS(run_pbu(spec, initial, sn, cfg), DivergenceError);
}

TEST_CASE("run_pbu rejects mixed-class forget sets and mismatched checkpoints") {
    const ModelSpec spec{2, {4}, 3};
    const Dataset data = three_blobs(10, 15);
    TrainConfig tc;
    tc.epochs = 10;
    tc.learning_rate = 0.01;
    tc.seed = 1;
    const Checkpoint initial = train(spec, data, tc);

    PBUConfig cfg;
    CHECK_THROWS_AS(run_pbu(spec, initial, data, cfg), ContractError);  // multi-class
    CHECK_THROWS_AS(run_pbu(spec, initial, Dataset(2, 3), cfg), ContractError);

    const ModelSpec other{2, {5}, 3};
    CHECK_THROWS_AS(run_pbu(other, initial, data.split_by_class(0).first, cfg), ContractError);
}

TEST_CASE("baselines reject contaminated retain sets and are deterministic") {
    const ModelSpec spec{2, {4}, 3};
    const Dataset data = three_blobs(20, 16);
    const auto [sn, sp] = data.split_by_class(1);
    TrainConfig tc;
    tc.epochs = 30;
    tc.learning_rate = 0.01;
    tc.seed = 5;

    try {
        retrain_baseline(spec, data, 1, tc);
        FAIL("expected ContractError");
    } catch (const ContractError& e) {
        CHECK(std::string(e.what()).find("contamination") != std::string::npos);
    }

    const Checkpoint r1 = retrain_baseline(spec, sp, 1, tc);
    const Checkpoint r2 = retrain_baseline(spec, sp, 1, tc);
    CHECK(r1 == r2);

    // retraining on data that never had the forget class equals plain training
    const Checkpoint direct = train(spec, sp, tc);
    CHECK(r1 == direct);

    const Checkpoint initial = train(spec, data, tc);
    CHECK_THROWS_AS(finetune_baseline(initial, data, 1, tc), ContractError);
    const Checkpoint f1 = finetune_baseline(initial, sp, 1, tc);
    const Checkpoint f2 = finetune_baseline(initial, sp, 1, tc);
    CHECK(f1 == f2);

    TrainConfig zero = tc;
    zero.epochs = 0;
    CHECK_THROWS_AS(finetune_baseline(initial, sp, 1, zero), ContractError);
}

TEST_CASE("fine-tuning passively forgets the held-out class") {
    const ModelSpec spec{2, {8}, 3};
    const Dataset data = three_blobs(60, 18);
    TrainConfig tc;
    tc.epochs = 120;
    tc.learning_rate = 0.01;
    tc.batch_size = 32;
    tc.seed = 4;
    const Checkpoint initial = train(spec, data, tc);
    const auto [sn, sp] = data.split_by_class(2);
    REQUIRE(accuracy(spec, initial.theta, sn) >= 0.9);

    TrainConfig ftc = tc;
    ftc.epochs = 150;
    const Checkpoint tuned = finetune_baseline(initial, sp, 2, ftc);
    CHECK(accuracy(spec, tuned.theta, sn) < accuracy(spec, initial.theta, sn));
}

TEST_CASE("increasing gamma never increases the PlainGd displacement") {
    // observed-trajectory property on a small stable setting: fixed seed,
    // fixed T, ascending gamma grid
    const ModelSpec spec{2, {4}, 3};
    const Dataset data = three_blobs(20, 21);
    TrainConfig tc;
    tc.epochs = 60;
    tc.learning_rate = 0.01;
    tc.seed = 6;
    const Checkpoint initial = train(spec, data, tc);
    const Dataset sn = data.split_by_class(0).first;

    double prev = std::numeric_limits<double>::infinity();
    for (const double gamma : {2e5, 4e5, 8e5, 1.6e6, 3.2e6}) {
        PBUConfig cfg;
        cfg.alpha = 1.0;
        cfg.beta = 0.0;
        cfg.gamma = gamma;
        cfg.eta = 2e-7;  // stable for the whole grid: eta * 2 * gamma_max < 2
        cfg.steps = 200;
        const UnlearnResult res = run_pbu(spec, initial, sn, cfg);
        const double moved = norm_diff(res.theta_u, initial.theta);
        CHECK(moved <= prev * (1.0 + 1e-12));
        prev = moved;
    }
}

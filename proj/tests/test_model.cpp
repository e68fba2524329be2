#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pbu/checkpoint.hpp"
#include "pbu/dataset.hpp"
#include "pbu/errors.hpp"
#include "pbu/kernels.hpp"
#include "pbu/model.hpp"
#include "pbu/rng.hpp"
#include "pbu/train.hpp"

using namespace pbu;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove(p);
    return p;
}

Dataset two_blobs(std::size_t n_per_class, std::uint64_t seed) {
    Rng rng(seed);
    Dataset data(2, 2);
    for (int c = 0; c < 2; ++c) {
        const double cx = c == 0 ? -2.0 : 2.0;
        for (std::size_t i = 0; i < n_per_class; ++i)
            data.add({cx + 0.5 * rng.next_gaussian(), 0.5 * rng.next_gaussian()}, c);
    }
    return data;
}

}  // namespace

TEST_CASE("parameter count follows the layer-major layout") {
    ModelSpec spec{16, {32}, 4};
    CHECK(spec.param_count() == 676);  // 16*32+32 + 32*4+4
    CHECK(ModelSpec{3, {}, 3}.param_count() == 12);
    CHECK(ModelSpec{2, {5, 4}, 2}.param_count() == 15 + 24 + 10);
}

TEST_CASE("init_params: zero biases, deterministic, He-scaled") {
    const ModelSpec spec{16, {32}, 4};
    const ParamVector a = init_params(spec, 99);
    const ParamVector b = init_params(spec, 99);
    CHECK(a == b);  // bitwise

    // bias slots are exactly zero
    for (std::size_t i = 16 * 32; i < 16 * 32 + 32; ++i) CHECK(a[i] == 0.0);
    for (std::size_t i = a.size() - 4; i < a.size(); ++i) CHECK(a[i] == 0.0);

    // first-layer weights have roughly variance 2/16
    double sumsq = 0.0;
    for (std::size_t i = 0; i < 16 * 32; ++i) sumsq += a[i] * a[i];
    CHECK(sumsq / (16 * 32) == doctest::Approx(2.0 / 16).epsilon(0.2));

    CHECK(init_params(spec, 100) != a);
}

TEST_CASE("forward: zero parameters give the uniform distribution") {
    const ModelSpec spec{3, {4}, 5};
    const ParamVector theta(spec.param_count(), 0.0);
    const std::vector<double> lp = forward_logprobs(spec, theta, std::vector<double>{1.0, -2.0, 0.5});
    for (double v : lp) CHECK(v == doctest::Approx(-std::log(5.0)).epsilon(1e-15));
}

TEST_CASE("forward: closed-form softmax for a linear model with logits [2,0]") {
    const ModelSpec spec{1, {}, 2};
    ParamVector theta(spec.param_count(), 0.0);
    theta[0] = 2.0;  // W[0][0]; W[1][0]=0, biases 0
    const std::vector<double> lp = forward_logprobs(spec, theta, std::vector<double>{1.0});
    CHECK(lp[0] == doctest::Approx(-std::log1p(std::exp(-2.0))).epsilon(1e-14));
    CHECK(lp[1] == doctest::Approx(-2.0 - std::log1p(std::exp(-2.0))).epsilon(1e-14));
}

TEST_CASE("forward normalizes for random parameters") {
    Rng rng(5);
    const ModelSpec spec{6, {8}, 3};
    const ParamVector theta = init_params(spec, 5);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> x(6);
        for (double& v : x) v = 3.0 * rng.next_gaussian();
        const std::vector<double> lp = forward_logprobs(spec, theta, x);
        double s = 0.0;
        for (double v : lp) s += std::exp(v);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("forward rejects wrong input dimension") {
    const ModelSpec spec{3, {}, 2};
    const ParamVector theta(spec.param_count(), 0.0);
    CHECK_THROWS_AS(forward_logprobs(spec, theta, std::vector<double>{1.0}), ShapeError);
    CHECK_THROWS_AS(forward_logprobs(spec, ParamVector(3, 0.0), std::vector<double>{1, 2, 3}),
                    ShapeError);
}

TEST_CASE("log_likelihood: uniform model, duplication, loop oracle") {
    const ModelSpec spec{2, {}, 4};
    const ParamVector zero(spec.param_count(), 0.0);
    Dataset one(2, 4);
    one.add({0.5, 0.5}, 2);
    CHECK(log_likelihood(spec, zero, one) == doctest::Approx(-std::log(4.0)).epsilon(1e-15));

    Rng rng(31);
    const ParamVector theta = init_params(spec, 8);
    Dataset five(2, 4);
    for (int i = 0; i < 5; ++i)
        five.add({rng.next_gaussian(), rng.next_gaussian()}, static_cast<int>(rng.next_below(4)));

    // independent loop oracle
    double want = 0.0;
    for (std::size_t i = 0; i < five.size(); ++i)
        want += forward_logprobs(spec, theta, five[i].x)[static_cast<std::size_t>(five[i].y)];
    CHECK(log_likelihood(spec, theta, five) == doctest::Approx(want).epsilon(1e-12));

    Dataset doubled(2, 4);
    for (int rep = 0; rep < 2; ++rep)
        for (std::size_t i = 0; i < five.size(); ++i) doubled.add(five[i].x, five[i].y);
    CHECK(log_likelihood(spec, theta, doubled) ==
          doctest::Approx(2.0 * log_likelihood(spec, theta, five)).epsilon(1e-12));

    CHECK_THROWS_AS(log_likelihood(spec, theta, Dataset(2, 4)), ContractError);
}

TEST_CASE("log_likelihood is additive over a class split") {
    Rng rng(13);
    const ModelSpec spec{3, {5}, 3};
    const ParamVector theta = init_params(spec, 21);
    Dataset data(3, 3);
    for (int i = 0; i < 60; ++i)
        data.add({rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian()},
                 static_cast<int>(rng.next_below(3)));
    const auto [sn, sp] = data.split_by_class(1);
    CHECK(sn.size() + sp.size() == data.size());
    CHECK(log_likelihood(spec, theta, data) ==
          doctest::Approx(log_likelihood(spec, theta, sn) + log_likelihood(spec, theta, sp))
              .epsilon(1e-12));
}

TEST_CASE("accuracy: tie-break, perfect oracle, chance level") {
    const ModelSpec spec{2, {}, 3};
    const ParamVector zero(spec.param_count(), 0.0);
    Dataset zeros_labeled(2, 3);
    for (int i = 0; i < 10; ++i) zeros_labeled.add({double(i), 1.0}, 0);
    // uniform logits -> argmax tie broken toward class 0
    CHECK(accuracy(spec, zero, zeros_labeled) == 1.0);

    // chance level on balanced labels independent of features
    Rng rng(44);
    const ModelSpec spec4{4, {8}, 4};
    const ParamVector theta = init_params(spec4, 3);
    Dataset balanced(4, 4);
    for (int i = 0; i < 2000; ++i)
        balanced.add({rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian(),
                      rng.next_gaussian()},
                     i % 4);
    CHECK(accuracy(spec4, theta, balanced) == doctest::Approx(0.25).epsilon(0.2));
    CHECK(std::abs(accuracy(spec4, theta, balanced) - 0.25) < 0.05);

    CHECK_THROWS_AS(accuracy(spec, zero, Dataset(2, 3)), ContractError);
}

TEST_CASE("accuracy is invariant to dataset order") {
    Rng rng(55);
    const ModelSpec spec{2, {4}, 2};
    const ParamVector theta = init_params(spec, 1);
    Dataset data = two_blobs(40, 9);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    Dataset shuffled(2, 2);
    for (std::size_t i : order) shuffled.add(data[i].x, data[i].y);
    CHECK(accuracy(spec, theta, data) == accuracy(spec, theta, shuffled));
}

TEST_CASE("checkpoint round-trip is bitwise exact") {
    const ModelSpec spec{4, {3}, 2};
    Checkpoint ckpt;
    ckpt.spec = spec;
    ckpt.theta = init_params(spec, 1234);
    ckpt.theta[0] = 0.1 + 0.2;  // not exactly representable decimal
    ckpt.meta = {1234, 17, 0.6931471805599453};
    const auto path = temp_file("pbu_ckpt_roundtrip.txt");
    save_checkpoint(ckpt, path.string());
    const Checkpoint back = load_checkpoint(path.string());
    CHECK(back == ckpt);
    fs::remove(path);
}

TEST_CASE("checkpoint round-trips a model without hidden layers") {
    const ModelSpec spec{2, {}, 2};
    Checkpoint ckpt{spec, init_params(spec, 7), {7, 1, 0.5}};
    const auto path = temp_file("pbu_ckpt_nohidden.txt");
    save_checkpoint(ckpt, path.string());
    CHECK(load_checkpoint(path.string()) == ckpt);
    fs::remove(path);
}

TEST_CASE("checkpoint loader rejects damaged files") {
    const ModelSpec spec{2, {2}, 2};
    Checkpoint ckpt{spec, init_params(spec, 3), {}};
    const auto path = temp_file("pbu_ckpt_damage.txt");
    save_checkpoint(ckpt, path.string());

    // truncated: drop the last lines
    {
        std::ifstream in(path);
        std::string content((std::istreambuf_iterator<char>(in)), {});
        in.close();
        std::ofstream out(path);
        out << content.substr(0, content.size() / 2);
    }
    CHECK_THROWS_AS(load_checkpoint(path.string()), ParseError);

    // unsupported version
    {
        std::ofstream out(path);
        out << "PBUCKPT v2\nd=2 hidden=2 classes=2\nm=12\n";
    }
    try {
        load_checkpoint(path.string());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("unsupported version") != std::string::npos);
    }

    // parameter count inconsistent with spec
    {
        std::ofstream out(path);
        out << "PBUCKPT v1\nd=2 hidden=2 classes=2\nm=5\n1\n2\n3\n4\n5\n";
    }
    CHECK_THROWS_AS(load_checkpoint(path.string()), ParseError);
    fs::remove(path);
}

TEST_CASE("training separates 2-D blobs and is bitwise deterministic") {
    const ModelSpec spec{2, {8}, 2};
    const Dataset data = two_blobs(100, 77);
    TrainConfig cfg;
    cfg.optimizer = Optimizer::Adam;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 32;
    cfg.epochs = 200;
    cfg.seed = 5;
    const Checkpoint a = train(spec, data, cfg);
    CHECK(accuracy(spec, a.theta, data) >= 0.99);
    CHECK(std::isfinite(a.meta.final_loss));

    const Checkpoint b = train(spec, data, cfg);
    CHECK(a == b);  // bitwise identical checkpoints

    TrainConfig one = cfg;
    one.epochs = 1;
    const Checkpoint c = train(spec, data, one);
    for (double v : c.theta) CHECK(std::isfinite(v));

    TrainConfig bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(train(spec, data, bad), ContractError);
}

TEST_CASE("sgd optimizer also trains") {
    const ModelSpec spec{2, {6}, 2};
    const Dataset data = two_blobs(80, 3);
    TrainConfig cfg;
    cfg.optimizer = Optimizer::Sgd;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 16;
    cfg.epochs = 150;
    cfg.seed = 2;
    const Checkpoint ckpt = train(spec, data, cfg);
    CHECK(accuracy(spec, ckpt.theta, data) >= 0.95);
}

TEST_CASE("flatten/unflatten round-trips bitwise") {
    const ModelSpec spec{5, {4, 3}, 2};
    const ParamVector theta = init_params(spec, 10);
    CHECK(flatten(spec, unflatten(spec, theta)) == theta);
}

TEST_CASE("training reports divergence with epoch and batch") {
    const ModelSpec spec{2, {4}, 2};
    const Dataset data = two_blobs(40, 5);
    TrainConfig cfg;
    cfg.optimizer = Optimizer::Sgd;
    cfg.learning_rate = 1e90;  // guaranteed blow-up
    cfg.batch_size = 8;
    cfg.epochs = 3;
    cfg.seed = 1;
    try {
        train(spec, data, cfg);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("epoch") != std::string::npos);
        CHECK(msg.find("batch") != std::string::npos);
    }
}

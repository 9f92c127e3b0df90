#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "petnet/data.hpp"
#include "petnet/network.hpp"
#include "petnet/rng.hpp"
#include "petnet/training.hpp"

using namespace petnet;
using network::HeadKind;
using training::LossKind;
using training::Task;
using training::TrainConfig;

namespace {

std::vector<training::Sample> noise_samples(int64_t n, int64_t h, int64_t w, uint64_t seed,
                                            bool binary_targets) {
    Rng rng(seed);
    std::vector<training::Sample> out;
    for (int64_t i = 0; i < n; ++i) {
        training::Sample s;
        s.input = Tensor::zeros(Shape{1, 1, h, w});
        for (int64_t q = 0; q < s.input.size(); ++q) s.input[q] = rng.uniform(0, 1);
        s.target = Tensor::zeros(Shape{1, 1});
        s.target[0] = binary_targets ? (rng.uniform() < 0.5 ? 0.0 : 1.0) : rng.uniform(0, 1);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_CASE("mse: perfect prediction, hand case, gradient scaling") {
    Tensor t = Tensor::create(Shape{2, 2}, {1, 2, 3, 4});
    auto perfect = training::compute_loss(LossKind::Mse, t, t);
    CHECK(perfect.value == 0.0);
    for (int64_t i = 0; i < perfect.grad.size(); ++i) REQUIRE(perfect.grad[i] == 0.0);

    auto hand = training::compute_loss(LossKind::Mse, Tensor::create(Shape{1}, {2}),
                                       Tensor::create(Shape{1}, {0}));
    CHECK(hand.value == 4.0);
    CHECK(hand.grad[0] == 4.0);  // 2(p-t)/1
    CHECK_FALSE(hand.grad_is_preactivation);

    CHECK_THROWS_AS(
        training::compute_loss(LossKind::Mse, t, Tensor::zeros(Shape{2, 3})), ShapeError);
}

TEST_CASE("cross entropy: uniform prediction scores ln(4); one-hot is validated") {
    Tensor p = Tensor::full(Shape{1, 4}, 0.25);
    Tensor t = Tensor::create(Shape{1, 4}, {0, 0, 1, 0});
    auto loss = training::compute_loss(LossKind::CrossEntropy, p, t);
    CHECK(loss.value == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(loss.grad_is_preactivation);
    // fused gradient (p - t)/N
    CHECK(loss.grad[0] == doctest::Approx(0.25));
    CHECK(loss.grad[2] == doctest::Approx(-0.75));

    Tensor bad = Tensor::create(Shape{1, 4}, {0.5, 0, 1, 0});
    CHECK_THROWS_AS(training::compute_loss(LossKind::CrossEntropy, p, bad), ConfigError);
}

TEST_CASE("binary cross entropy: optimum is clamp-limited, targets validated") {
    Tensor ones = Tensor::full(Shape{4}, 1.0);
    auto at_opt = training::compute_loss(LossKind::BinaryCrossEntropy, ones, ones);
    CHECK(at_opt.value >= 0.0);
    CHECK(at_opt.value < 1e-11);  // -log(1 - 1e-12)
    for (int64_t i = 0; i < at_opt.grad.size(); ++i) REQUIRE(std::abs(at_opt.grad[i]) < 1e-11);

    Tensor half = Tensor::full(Shape{4}, 0.5);
    CHECK_THROWS_AS(training::compute_loss(LossKind::BinaryCrossEntropy, half,
                                           Tensor::full(Shape{4}, 0.3)),
                    ConfigError);
}

TEST_CASE("sgd_step arithmetic, fixed point, linearity") {
    using network::ParamBank;
    layers::FcParams p{Tensor::create(Shape{1, 1}, {1}), Tensor::zeros(Shape{1})};
    layers::FcParams g{Tensor::create(Shape{1, 1}, {2}), Tensor::zeros(Shape{1})};
    std::vector<ParamBank> params{p}, grads{g};
    training::sgd_step(params, grads, 0.5);
    CHECK(std::get<layers::FcParams>(params[0]).weights[0] == 0.0);

    // zero grads leave params bit-exact
    layers::FcParams z{Tensor::zeros(Shape{1, 1}), Tensor::zeros(Shape{1})};
    std::vector<ParamBank> params2{p}, zero{z};
    training::sgd_step(params2, zero, 0.7);
    CHECK(std::get<layers::FcParams>(params2[0]).weights[0] == 1.0);

    // two steps of lr equal one step of 2*lr on constant grads
    std::vector<ParamBank> twice{p}, once{p};
    training::sgd_step(twice, grads, 0.1);
    training::sgd_step(twice, grads, 0.1);
    training::sgd_step(once, grads, 0.2);
    CHECK(std::get<layers::FcParams>(twice[0]).weights[0] ==
          doctest::Approx(std::get<layers::FcParams>(once[0]).weights[0]).epsilon(1e-15));
}

TEST_CASE("one sgd step decreases a single sample's loss at small lr") {
    for (uint64_t seed : {3u, 4u, 5u}) {
        auto model = network::build_toy_cnn(16, 16, 2, 8, HeadKind::Sigmoid, 2, seed);
        auto samples = noise_samples(1, 16, 16, seed + 100, true);
        Tensor x = samples[0].input;
        Tensor t = samples[0].target;
        auto fr = network::forward(model, x, layers::Mode::Train);
        auto loss0 = training::compute_loss(LossKind::BinaryCrossEntropy, fr.output, t);
        auto grads = network::backward(model, fr, loss0.grad, loss0.grad_is_preactivation);
        training::sgd_step(model.params, grads.banks, 1e-4);
        auto fr1 = network::forward(model, x, layers::Mode::Train);
        auto loss1 = training::compute_loss(LossKind::BinaryCrossEntropy, fr1.output, t);
        INFO("seed ", seed, " loss ", loss0.value, " -> ", loss1.value);
        CHECK(loss1.value < loss0.value);
    }
}

TEST_CASE("train enforces head/loss compatibility and batch-size bounds") {
    auto model = network::build_toy_cnn(16, 16, 2, 4, HeadKind::Sigmoid);
    auto samples = noise_samples(6, 16, 16, 7, true);
    TrainConfig cfg;
    cfg.loss = LossKind::Mse;  // sigmoid head wants bce
    cfg.batch_size = 2;
    cfg.max_epochs = 1;
    CHECK_THROWS_AS(training::train(model, samples, samples, cfg), ConfigError);

    cfg.loss = LossKind::BinaryCrossEntropy;
    cfg.batch_size = 99;  // larger than the training set
    CHECK_THROWS_AS(training::train(model, samples, samples, cfg), ConfigError);
}

TEST_CASE("fixed seed reproduces the whole loss history") {
    auto samples = noise_samples(12, 16, 16, 8, true);
    auto val = noise_samples(4, 16, 16, 9, true);
    TrainConfig cfg;
    cfg.loss = LossKind::BinaryCrossEntropy;
    cfg.batch_size = 4;
    cfg.max_epochs = 5;
    cfg.patience = 5;
    cfg.seed = 77;
    cfg.learning_rate = 0.05;

    auto m1 = network::build_toy_cnn(16, 16, 2, 4, HeadKind::Sigmoid, 2, 3);
    auto r1 = training::train(m1, samples, val, cfg);
    auto m2 = network::build_toy_cnn(16, 16, 2, 4, HeadKind::Sigmoid, 2, 3);
    auto r2 = training::train(m2, samples, val, cfg);
    CHECK(r1.train_loss == r2.train_loss);
    CHECK(r1.val_loss == r2.val_loss);
    CHECK(r1.best_epoch == r2.best_epoch);
}

TEST_CASE("patience 0 stops at the first non-improving epoch") {
    // constant targets but shuffled batches: loss plateaus fast
    auto samples = noise_samples(8, 16, 16, 10, true);
    auto val = noise_samples(4, 16, 16, 11, true);
    TrainConfig cfg;
    cfg.loss = LossKind::BinaryCrossEntropy;
    cfg.batch_size = 4;
    cfg.max_epochs = 50;
    cfg.patience = 0;
    cfg.seed = 5;
    cfg.learning_rate = 0.5;  // big steps force an early validation regression
    auto model = network::build_toy_cnn(16, 16, 2, 4, HeadKind::Sigmoid, 2, 4);
    auto report = training::train(model, samples, val, cfg);
    CHECK(report.stopped_epoch < 50);
    CHECK(report.stopped_epoch == report.best_epoch + 1);
}

TEST_CASE("early stopping restores the best-epoch weights exactly") {
    auto samples = noise_samples(8, 16, 16, 12, true);
    auto val = noise_samples(8, 16, 16, 13, true);
    TrainConfig cfg;
    cfg.loss = LossKind::BinaryCrossEntropy;
    cfg.batch_size = 4;
    cfg.max_epochs = 60;
    cfg.patience = 3;
    cfg.seed = 6;
    cfg.learning_rate = 0.3;
    auto model = network::build_toy_cnn(16, 16, 2, 4, HeadKind::Sigmoid, 2, 5);
    auto report = training::train(model, samples, val, cfg);
    REQUIRE(report.best_epoch <= report.stopped_epoch);
    if (report.stopped_epoch < cfg.max_epochs) {
        CHECK(report.stopped_epoch - report.best_epoch == cfg.patience);
    }
    double rescored =
        training::validation_loss(model, val, LossKind::BinaryCrossEntropy, cfg.batch_size);
    CHECK(rescored == report.best_val_loss);
    CHECK(report.val_loss[static_cast<size_t>(report.best_epoch - 1)] == report.best_val_loss);
}

TEST_CASE("report csv has one row per epoch with the documented header") {
    training::TrainReport report;
    report.train_loss = {0.5, 0.25};
    report.val_loss = {0.6, 0.3};
    std::string csv = report.to_csv();
    CHECK(csv.rfind("epoch,train_loss,val_loss\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(csv.find("1,0.5") != std::string::npos);
}

TEST_CASE("dice conventions") {
    Tensor empty = Tensor::zeros(Shape{1, 4});
    Tensor full = Tensor::full(Shape{1, 4}, 1.0);
    CHECK(training::dice_coefficient(empty, empty) == 1.0);
    CHECK(training::dice_coefficient(full, empty) == 0.0);
    CHECK(training::dice_coefficient(empty, full) == 0.0);
    CHECK(training::dice_coefficient(full, full) == 1.0);
    Tensor half = Tensor::create(Shape{1, 4}, {1, 1, 0, 0});
    CHECK(training::dice_coefficient(half, full) == doctest::Approx(2.0 * 2 / (2 + 4)));
}

TEST_CASE("thresholding at 0.5 behaves like chance on random predictions") {
    Rng rng(99);
    int64_t n = 20000, correct = 0;
    for (int64_t i = 0; i < n; ++i) {
        int64_t label = rng.uniform() < 0.5 ? 0 : 1;
        double p = rng.uniform();
        int64_t predicted = p > 0.5 ? 1 : 0;  // the evaluate() rounding rule
        correct += predicted == label;
    }
    double acc = static_cast<double>(correct) / static_cast<double>(n);
    CHECK(std::abs(acc - 0.5) < 0.02);
}

TEST_CASE("evaluate: zero-weight sigmoid model predicts class 0 everywhere") {
    auto model = network::build_toy_cnn(16, 16, 2, 4, HeadKind::Sigmoid);
    for (auto& bank : model.params) {
        if (auto* f = std::get_if<layers::FilterBank>(&bank)) {
            std::fill(f->weights.values().begin(), f->weights.values().end(), 0.0);
        } else if (auto* fc = std::get_if<layers::FcParams>(&bank)) {
            std::fill(fc->weights.values().begin(), fc->weights.values().end(), 0.0);
            std::fill(fc->bias.values().begin(), fc->bias.values().end(), 0.0);
        }
    }
    auto phantoms = data::generate_phantoms(6, 16, 16, 3, 0.0, 0.1);  // all label 0
    auto record = training::evaluate(model, phantoms, Task::Classification);
    CHECK(record.get("accuracy") == 1.0);  // sigma(0) = 0.5 rounds down to 0

    CHECK_THROWS_AS(training::evaluate(model, {}, Task::Classification), ConfigError);
    CHECK_THROWS_AS(training::evaluate(model, phantoms, Task::Synthesis), ConfigError);
}

TEST_CASE("evaluate synthesis scores a perfect predictor at zero error") {
    // linear-head identity is impossible without training, so check the
    // metric arithmetic on clean == image phantoms (noise 0) with a model
    // that must at least produce finite maps
    auto phantoms = data::generate_phantoms(3, 16, 16, 4, 1.0, 0.0);
    for (const auto& p : phantoms) {
        REQUIRE(p.image.values() == p.clean.values());
    }
    auto model = network::build_unet(16, 16, 2, 1, HeadKind::Linear, false,
                                     network::UpsampleKind::TransposeConv, false, 3);
    auto record = training::evaluate(model, phantoms, Task::Synthesis);
    CHECK(record.get("mse") >= 0.0);
    CHECK(record.get("mae") >= 0.0);
}

TEST_CASE("to_samples produces one-hot softmax targets and rejects mismatches") {
    auto phantoms = data::generate_phantoms(4, 16, 16, 5, 1.0, 0.1);  // all label 1
    auto samples =
        training::to_samples(phantoms, Task::Classification, HeadKind::Softmax, 3);
    CHECK(samples[0].target.shape() == Shape{1, 3});
    CHECK(samples[0].target[1] == 1.0);
    CHECK(samples[0].target[0] == 0.0);

    CHECK_THROWS_AS(training::to_samples(phantoms, Task::Segmentation, HeadKind::Linear),
                    ConfigError);
    CHECK_THROWS_AS(training::to_samples(phantoms, Task::Synthesis, HeadKind::Sigmoid),
                    ConfigError);
}

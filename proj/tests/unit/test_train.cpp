#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hazgam/train.hpp"
#include "train_fixture.hpp"

using namespace hazgam;
using hazgam::testing::quick_config;
using hazgam::testing::small_problem;

TEST_CASE("training data layout") {
    const auto p = small_problem();
    REQUIRE(p.train.size() > 0);
    CHECK(p.train.targets.rows() == 27);
    CHECK(static_cast<std::size_t>(p.train.targets.cols()) == p.split.train.size());
    CHECK(p.train.bins.size() == p.train.size());
    const auto& r = p.split.train.records[3];
    for (std::size_t c = 0; c < kNumChannels; ++c) CHECK(p.train.targets(static_cast<Eigen::Index>(c), 3) == r.targets[c]);
}

TEST_CASE("record weights") {
    const auto p = small_problem();
    const auto ones = record_weights(LossMode::mse, 0.5, p.train.bins, p.ctx);
    CHECK(std::all_of(ones.begin(), ones.end(), [](double w) { return w == 1.0; }));
    const auto w = record_weights(LossMode::hazbin, 0.25, p.train.bins, p.ctx);
    CHECK(w == batch_record_weights(p.train.bins, p.ctx.grid, p.ctx.H, 0.25));
}

TEST_CASE("evaluation loss") {
    const auto p = small_problem();
    TrainConfig c = quick_config();
    c.loss_mode = LossMode::mse;
    const Eigen::MatrixXd pred = predict_batch(p.init, p.val.inputs);
    const double mse = (pred - p.val.targets).array().square().mean();
    CHECK(evaluation_loss(p.init, p.val, c, p.ctx) == doctest::Approx(mse).epsilon(1e-12));
    c.loss_mode = LossMode::hazbin;
    const auto w = record_weights(LossMode::hazbin, c.alpha, p.val.bins, p.ctx);
    double s = 0.0;
    for (Eigen::Index k = 0; k < pred.cols(); ++k) s += w[static_cast<std::size_t>(k)] * (pred.col(k) - p.val.targets.col(k)).squaredNorm() / 27.0;
    CHECK(evaluation_loss(p.init, p.val, c, p.ctx) == doctest::Approx(s / static_cast<double>(pred.cols())).epsilon(1e-12));
}

TEST_CASE("training is deterministic and reduces the loss") {
    const auto p = small_problem();
    const TrainConfig c = quick_config(8);
    const TrainedModel a = train(p.init, p.train, p.val, c, p.ctx);
    const TrainedModel b = train(p.init, p.train, p.val, c, p.ctx);
    CHECK(flatten(a.params) == flatten(b.params));
    REQUIRE(!a.history.epochs.empty());
    CHECK_FALSE(a.history.diverged);
    CHECK(a.history.epochs.size() <= 8);
    double best = INFINITY;
    for (const auto& e : a.history.epochs) best = std::min(best, e.val_loss);
    CHECK(a.history.best_val_loss == best);
    CHECK(evaluation_loss(a.params, p.val, c, p.ctx) == doctest::Approx(best).epsilon(1e-12));
    CHECK(a.history.best_val_loss < evaluation_loss(p.init, p.val, c, p.ctx));
    CHECK(satisfies_monotone_constraints(a.params));

    TrainConfig other = c;
    other.seed = 100;
    CHECK(flatten(train(p.init, p.train, p.val, other, p.ctx).params) != flatten(a.params));
}

TEST_CASE("hazbin with alpha = 0 on a single bin is a scaled mse") {
    auto p = small_problem();
    for (auto& b : p.val.bins) b = {0, 0};
    TrainConfig m = quick_config();
    m.loss_mode = LossMode::mse;
    TrainConfig h = m;
    h.loss_mode = LossMode::hazbin;
    h.alpha = 0.0;
    // One occupied bin: every record shares B = 1 / (1 + ln(N / 5)).
    const double n = static_cast<double>(p.val.size());
    const double w = sigmoid_scale(1.0 / (1.0 + std::log(n / 5.0)));
    CHECK(evaluation_loss(p.init, p.val, h, p.ctx) == doctest::Approx(w * evaluation_loss(p.init, p.val, m, p.ctx)).epsilon(1e-12));
}

TEST_CASE("configuration validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.alpha = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(loss_mode_from_string(to_string(LossMode::hazbin)) == LossMode::hazbin);
    CHECK_THROWS_AS(loss_mode_from_string("l1"), ConfigError);
}

TEST_CASE("hyperparameter search") {
    const auto p = small_problem(3, 25);
    SearchSpace space;
    space.widths = {4};
    space.depths = {1};
    const TrainConfig base = quick_config(2);
    const auto a = hyperparameter_search(space, 3, 7, base, p.train, p.val, p.ctx);
    const auto b = hyperparameter_search(space, 3, 7, base, p.train, p.val, p.ctx);
    REQUIRE(a.trials.size() == 3);
    double best = INFINITY;
    for (std::size_t k = 0; k < a.trials.size(); ++k) {
        CHECK(a.trials[k].config == b.trials[k].config);
        CHECK(a.trials[k].val_loss == b.trials[k].val_loss);
        CHECK(a.trials[k].config.learning_rate >= 3e-4);
        CHECK(a.trials[k].config.learning_rate <= 3e-3);
        best = std::min(best, a.trials[k].val_loss);
    }
    CHECK(a.best_val_loss == best);
    CHECK(a.trials[a.best_trial].val_loss == best);
    space.learning_rate = {1.0};
    CHECK_THROWS_AS(hyperparameter_search(space, 1, 7, base, p.train, p.val, p.ctx), ConfigError);
}

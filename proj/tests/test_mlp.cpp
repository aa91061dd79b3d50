#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "apde/mlp.hpp"
#include "support/oracles.hpp"

using apde::Adam;
using apde::Mlp;
using apde::Tape;
using apde::VarId;

namespace {

std::vector<std::array<double, 2>> grid_points(std::size_t n) {
    std::vector<std::array<double, 2>> pts;
    for (std::size_t j = 0; j <= n; ++j) {
        for (std::size_t i = 0; i <= n; ++i) {
            pts.push_back({static_cast<double>(i) / static_cast<double>(n),
                           static_cast<double>(j) / static_cast<double>(n)});
        }
    }
    return pts;
}

}  // namespace

TEST_SUITE("mlp") {

TEST_CASE("parameter counts") {
    CHECK(Mlp::parameter_count(std::vector<std::size_t>{2, 20, 1}) == 81);
    CHECK(Mlp::parameter_count(std::vector<std::size_t>{2, 1}) == 3);

    // Property: matches direct summation for arbitrary layer lists.
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::size_t> layers{2};
        const std::size_t hidden = 1 + rng() % 4;
        for (std::size_t i = 0; i < hidden; ++i) layers.push_back(1 + rng() % 30);
        layers.push_back(1);
        std::size_t direct = 0;
        for (std::size_t l = 1; l < layers.size(); ++l) {
            direct += layers[l - 1] * layers[l] + layers[l];
        }
        CHECK(Mlp::parameter_count(layers) == direct);
        CHECK(Mlp::create(layers, 1).params.size() == direct);
    }
}

TEST_CASE("same seed gives identical weights, different seeds differ") {
    auto a = Mlp::create({2, 20, 1}, 7);
    auto b = Mlp::create({2, 20, 1}, 7);
    auto c = Mlp::create({2, 20, 1}, 8);
    CHECK(a.params == b.params);
    CHECK(a.params != c.params);

    // Weights bounded by 1/sqrt(fan_in), biases zero.
    const double bound1 = 1.0 / std::sqrt(2.0);
    for (std::size_t i = 0; i < 40; ++i) CHECK(std::abs(a.params[i]) <= bound1);
    for (std::size_t i = 40; i < 60; ++i) CHECK(a.params[i] == 0.0);
}

TEST_CASE("all-zero parameters produce zero output") {
    Mlp m;
    m.layers = {2, 20, 1};
    m.params.assign(m.parameter_count(), 0.0);
    auto out = m.eval_values(grid_points(3));
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("single hidden neuron reproduces the closed form") {
    // kappa(x) = v * sigmoid(w . x + b) + c
    Mlp m;
    m.layers = {2, 1, 1};
    // layout: W1 = [w0, w1], b1 = [b], W2 = [v], b2 = [c]
    m.params = {0.8, -0.4, 0.25, 1.7, -0.3};
    std::vector<std::array<double, 2>> pts{{0.1, 0.9}, {0.5, 0.5}, {1.0, 0.0}};
    auto out = m.eval_values(pts);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double z = 0.8 * pts[i][0] - 0.4 * pts[i][1] + 0.25;
        const double expect = 1.7 / (1.0 + std::exp(-z)) - 0.3;
        CHECK(out[i] == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("batch evaluation is permutation-equivariant") {
    auto m = Mlp::create({2, 20, 1}, 3);
    auto pts = grid_points(4);
    auto out = m.eval_values(pts);
    std::vector<std::array<double, 2>> reversed(pts.rbegin(), pts.rend());
    auto out_rev = m.eval_values(reversed);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i] == out_rev[out.size() - 1 - i]);
    }
}

TEST_CASE("gradient of the regression loss w.r.t. all 81 parameters") {
    auto m = Mlp::create({2, 20, 1}, 11);
    auto pts = grid_points(4);
    std::vector<double> targets(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        targets[i] = 1.0 + 2.0 * pts[i][0] + 3.0 * pts[i][1] * pts[i][1];
    }
    auto program = [&m, &pts, &targets](Tape& t, VarId leaf) {
        VarId pred = m.eval(t, leaf, pts);
        return t.norm2(t.sub(pred, t.constant(targets)));
    };
    CHECK(apde::gradient_check(program, m.params, 1e-6) <= 1e-6);
}

TEST_CASE("data-driven training fits a constant target") {
    auto m = Mlp::create({2, 8, 1}, 0);
    auto pts = grid_points(5);
    std::vector<double> targets(pts.size(), 1.0);
    Adam opt(0.05);
    auto record = apde::train_data_driven(m, pts, targets, opt, 400);
    CHECK(!record.failed);
    auto out = m.eval_values(pts);
    for (double v : out) CHECK(std::abs(v - 1.0) <= 1e-3);
}

TEST_CASE("zero training iterations leave the weights unchanged") {
    auto m = Mlp::create({2, 20, 1}, 5);
    auto before = m.params;
    auto pts = grid_points(3);
    std::vector<double> targets(pts.size(), 2.0);
    Adam opt(0.01);
    auto record = apde::train_data_driven(m, pts, targets, opt, 0);
    CHECK(m.params == before);
    CHECK(record.loss_history.size() == 1);
}

TEST_CASE("regression on the quadratic coefficient improves the loss a hundredfold") {
    auto m = Mlp::create({2, 20, 1}, 0);
    auto pts = grid_points(40);
    std::vector<double> targets(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        targets[i] = 1.0 + 2.0 * pts[i][0] + 3.0 * pts[i][1] * pts[i][1];
    }
    Adam opt(0.01);
    auto record = apde::train_data_driven(m, pts, targets, opt, 800);
    CHECK(!record.failed);
    CHECK(record.loss_history.back() * 100.0 <= record.loss_history.front());
}

TEST_CASE("training keeps weights finite across seeds") {
    auto pts = grid_points(6);
    std::vector<double> targets(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        targets[i] = 1.0 + 2.0 * pts[i][0] + 3.0 * pts[i][1] * pts[i][1];
    }
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto m = Mlp::create({2, 20, 1}, seed);
        Adam opt(0.01);
        auto record = apde::train_data_driven(m, pts, targets, opt, 200);
        CHECK(!record.failed);
        for (double p : m.params) CHECK(std::isfinite(p));
    }
}

TEST_CASE("checkpoint round trip") {
    auto m = Mlp::create({2, 20, 1}, 42);
    const auto path = std::filesystem::temp_directory_path() / "apde_mlp_test.json";
    m.save_json(path);
    auto loaded = Mlp::load_json(path);
    CHECK(loaded.layers == m.layers);
    CHECK(loaded.params == m.params);
    std::filesystem::remove(path);
}

}  // TEST_SUITE

#pragma once

// Finite-difference cases for every differentiable op, shared by the unit
// tests and the acceptance binary. Each case draws a random point and builds
// a scalar; non-scalar ops are contracted with a fixed random weight so every
// output element contributes to the gradient.

#include <cmath>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "saife/autograd.hpp"
#include "saife/gradcheck.hpp"
#include "saife/rng.hpp"

namespace saife::testkit {

struct LayerCase {
    std::string name;
    std::function<std::vector<nn::Tensor>(Rng&)> point;
    std::function<nn::Var(nn::Tape&, const std::vector<nn::Var>&, const nn::Tensor& probe)> fn;
    nn::Shape probe_shape;  // shape of the output contraction weight; empty for scalar ops
};

inline nn::Tensor random_tensor(Rng& rng, nn::Shape shape, double scale = 1.0) {
    nn::Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = static_cast<float>(rng.normal(0.0, scale));
    return t;
}

// Values bounded away from zero, for ops with a kink there.
inline nn::Tensor away_from_zero(Rng& rng, nn::Shape shape) {
    nn::Tensor t(std::move(shape));
    for (auto& v : t.storage()) {
        const double mag = rng.uniform(0.1, 1.0);
        v = static_cast<float>(rng.uniform() < 0.5 ? -mag : mag);
    }
    return t;
}

inline nn::Tensor probabilities(Rng& rng, std::size_t rows, std::size_t cols) {
    nn::Tensor t({rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += (t.at(r, c) = static_cast<float>(rng.uniform(0.1, 1.0)));
        for (std::size_t c = 0; c < cols; ++c) t.at(r, c) = static_cast<float>(t.at(r, c) / total);
    }
    return t;
}

inline nn::Var contract(nn::Tape& t, nn::Var v, const nn::Tensor& probe) {
    return nn::sum(nn::mul(v, t.constant(probe)));
}

inline std::vector<LayerCase> layer_cases() {
    using nn::Tape;
    using nn::Tensor;
    using nn::Var;
    using Vars = std::vector<Var>;
    std::vector<LayerCase> cases;
    auto add_case = [&](std::string name, auto point, auto fn, nn::Shape probe = {}) {
        cases.push_back({std::move(name), point, fn, std::move(probe)});
    };

    add_case("dense", [](Rng& r) { return std::vector{random_tensor(r, {3, 5}), random_tensor(r, {5, 4}), random_tensor(r, {4})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::dense(v[0], v[1], v[2]), p); }, {3, 4});
    add_case("matmul", [](Rng& r) { return std::vector{random_tensor(r, {4, 6}), random_tensor(r, {6, 3})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::matmul(v[0], v[1]), p); }, {4, 3});
    // The tall case takes the other dA strategy inside matmul's backward.
    add_case("matmul_wide_rhs", [](Rng& r) { return std::vector{random_tensor(r, {2, 9}), random_tensor(r, {9, 40})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::matmul(v[0], v[1]), p); }, {2, 40});
    add_case("add_bias", [](Rng& r) { return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {4})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::add_bias(v[0], v[1]), p); }, {3, 4});
    add_case("lstm_step",
             [](Rng& r) {
                 return std::vector{random_tensor(r, {2, 3}), random_tensor(r, {2, 4}, 0.5), random_tensor(r, {2, 4}, 0.5),
                                    random_tensor(r, {7, 16}, 0.5), random_tensor(r, {16}, 0.5)};
             },
             [](Tape& t, const Vars& v, const Tensor& p) {
                 // Three chained steps so gradients flow through time.
                 Var h = v[1], c = v[2];
                 for (int s = 0; s < 3; ++s) std::tie(h, c) = nn::lstm_step(v[0], h, c, v[3], v[4]);
                 return nn::add(contract(t, h, p), nn::sum(nn::mul(c, c)));
             },
             {2, 4});
    add_case("conv_transpose2d",
             [](Rng& r) { return std::vector{random_tensor(r, {2, 3, 2, 3}), random_tensor(r, {3, 2, 2, 3}), random_tensor(r, {2})}; },
             [](Tape& t, const Vars& v, const Tensor& p) {
                 return contract(t, nn::conv_transpose2d(v[0], v[1], v[2], 1, 2), p);
             },
             {2, 2, 3, 7});
    add_case("conv2d", [](Rng& r) { return std::vector{random_tensor(r, {2, 2, 4, 8}), random_tensor(r, {3, 2, 2, 4})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::conv2d(v[0], v[1], 2, 2), p); },
             {2, 3, 2, 3});
    add_case("add", [](Rng& r) { return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {3, 4})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::add(v[0], v[1]), p); }, {3, 4});
    add_case("sub", [](Rng& r) { return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {3, 4})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::sub(v[0], v[1]), p); }, {3, 4});
    add_case("mul", [](Rng& r) { return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {3, 4})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::mul(v[0], v[1]), p); }, {3, 4});
    add_case("scale", [](Rng& r) { return std::vector{random_tensor(r, {3, 4})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::scale(v[0], -1.7f), p); }, {3, 4});
    add_case("sigmoid", [](Rng& r) { return std::vector{random_tensor(r, {3, 4}, 2.0)}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::sigmoid(v[0]), p); }, {3, 4});
    add_case("tanh", [](Rng& r) { return std::vector{random_tensor(r, {3, 4})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::tanh(v[0]), p); }, {3, 4});
    add_case("relu", [](Rng& r) { return std::vector{away_from_zero(r, {3, 4})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::relu(v[0]), p); }, {3, 4});
    add_case("softmax", [](Rng& r) { return std::vector{random_tensor(r, {3, 5})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::softmax(v[0]), p); }, {3, 5});
    add_case("slice_cols", [](Rng& r) { return std::vector{random_tensor(r, {3, 6})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::slice_cols(v[0], 2, 3), p); }, {3, 3});
    add_case("concat_cols", [](Rng& r) { return std::vector{random_tensor(r, {3, 2}), random_tensor(r, {3, 4})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::concat_cols(v[0], v[1]), p); }, {3, 6});
    add_case("reshape", [](Rng& r) { return std::vector{random_tensor(r, {2, 6})}; },
             [](Tape& t, const Vars& v, const Tensor& p) { return contract(t, nn::reshape(v[0], {2, 1, 2, 3}), p); },
             {2, 1, 2, 3});
    add_case("sum", [](Rng& r) { return std::vector{random_tensor(r, {3, 4})}; },
             [](Tape&, const Vars& v, const Tensor&) { return nn::sum(nn::mul(v[0], v[0])); });
    add_case("mse", [](Rng& r) { return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {3, 4})}; },
             [](Tape&, const Vars& v, const Tensor&) { return nn::mse(v[0], v[1]); });
    add_case("sigmoid_cross_entropy",
             [](Rng& r) {
                 Tensor targets({4, 2});
                 for (auto& x : targets.storage()) x = static_cast<float>(r.uniform());
                 return std::vector{random_tensor(r, {4, 2}, 2.0), targets};
             },
             [](Tape&, const Vars& v, const Tensor&) { return nn::sigmoid_cross_entropy(v[0], v[1]); });
    add_case("softmax_cross_entropy", [](Rng& r) { return std::vector{random_tensor(r, {3, 4})}; },
             [](Tape& t, const Vars& v, const Tensor& p) {
                 // Targets are data, not a checked input: rows of the probe
                 // mapped onto the simplex.
                 Tensor targets = p;
                 for (std::size_t i = 0; i < 3; ++i) {
                     float total = 0.0f;
                     for (std::size_t j = 0; j < 4; ++j) total += targets.at(i, j) = std::exp(targets.at(i, j));
                     for (std::size_t j = 0; j < 4; ++j) targets.at(i, j) /= total;
                 }
                 return nn::softmax_cross_entropy(v[0], t.constant(targets));
             },
             {3, 4});
    return cases;
}

// Runs one case at `points` random points; returns the worst relative error.
inline double check_layer(const LayerCase& c, std::uint64_t seed, int points = 10, double h = 1e-2) {
    double worst = 0.0;
    for (int i = 0; i < points; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        const auto point = c.point(rng);
        const nn::Tensor probe = c.probe_shape.empty() ? nn::Tensor() : random_tensor(rng, c.probe_shape);
        const auto r = nn::grad_check([&](nn::Tape& t, const std::vector<nn::Var>& v) { return c.fn(t, v, probe); },
                                      point, h);
        worst = std::max(worst, r.max_rel_error);
    }
    return worst;
}

}  // namespace saife::testkit

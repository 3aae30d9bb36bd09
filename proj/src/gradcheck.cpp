#include "saife/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace saife::nn {

namespace {

double evaluate(const ScalarFn& fn, const std::vector<Tensor>& point) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(point.size());
    for (const auto& t : point) vars.push_back(tape.push(t, false, nullptr));
    return static_cast<double>(fn(tape, vars).value()[0]);
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& fn, const std::vector<Tensor>& point, double h) {
    // Analytic pass: every input is a differentiable leaf.
    std::vector<Parameter> params;
    params.reserve(point.size());
    for (std::size_t i = 0; i < point.size(); ++i) params.emplace_back("in" + std::to_string(i), point[i]);
    {
        Tape tape;
        std::vector<Var> vars;
        for (auto& p : params) vars.push_back(tape.leaf(p));
        tape.backward(fn(tape, vars));
    }

    GradCheckResult result;
    std::vector<Tensor> probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        std::vector<double> numeric(point[i].size());
        for (std::size_t j = 0; j < point[i].size(); ++j) {
            const float orig = probe[i][j];
            // f at orig + k*h; the offsets actually representable in float
            // are used as the step.
            auto at = [&](double k) {
                probe[i][j] = static_cast<float>(orig + k * h);
                return evaluate(fn, probe);
            };
            probe[i][j] = static_cast<float>(orig + h);
            const double step = (static_cast<double>(probe[i][j]) - static_cast<double>(orig));
            const double d1 = at(1.0) - at(-1.0), d2 = at(2.0) - at(-2.0);
            probe[i][j] = orig;
            numeric[j] = (8.0 * d1 - d2) / (12.0 * step);
        }
        double scale = 1e-12;
        for (std::size_t j = 0; j < numeric.size(); ++j)
            scale = std::max({scale, std::abs(numeric[j]), std::abs(static_cast<double>(params[i].grad[j]))});
        for (std::size_t j = 0; j < numeric.size(); ++j) {
            const double err = std::abs(numeric[j] - params[i].grad[j]) / scale;
            if (err > result.max_rel_error) result = {err, i, j};
        }
    }
    return result;
}

}  // namespace saife::nn

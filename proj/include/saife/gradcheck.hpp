#pragma once

#include <functional>
#include <vector>

#include "saife/autograd.hpp"

namespace saife::nn {

// Builds a scalar from variables placed on the given tape.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;  // worst over all inputs
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
};

// Compares backward() gradients of `fn` at `point` against the five-point
// central difference (8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h, taken
// per element. Its O(h^4) truncation error allows a step large enough that
// float rounding in the forward pass stays small.
// The error of each input is measured relative to that input's largest
// gradient magnitude, so near-zero entries do not amplify float noise.
GradCheckResult grad_check(const ScalarFn& fn, const std::vector<Tensor>& point, double h = 1e-2);

}  // namespace saife::nn

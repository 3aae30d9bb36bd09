// Built with -ffast-math so the loops below vectorize through libmvec's expf.
// Nothing else in this file relies on strict IEEE semantics.

#include <cmath>

#include "saife/kernels.hpp"

namespace saife::kernels {

void sigmoid(std::span<const float> in, std::span<float> out) {
    const float* x = in.data();
    float* y = out.data();
    const std::size_t n = in.size();
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) {
        // exp(-|x|) never overflows; mirror for negative inputs.
        const float e = std::exp(-std::fabs(x[i]));
        const float r = 1.0f / (1.0f + e);
        y[i] = x[i] >= 0.0f ? r : e * r;
    }
}

void tanh(std::span<const float> in, std::span<float> out) {
    const float* x = in.data();
    float* y = out.data();
    const std::size_t n = in.size();
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) {
        const float e = std::exp(-2.0f * std::fabs(x[i]));
        y[i] = std::copysign((1.0f - e) / (1.0f + e), x[i]);
    }
}

}  // namespace saife::kernels

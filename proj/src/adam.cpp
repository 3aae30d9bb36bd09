#include "saife/adam.hpp"

#include <cmath>

#include "saife/errors.hpp"

namespace saife::nn {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
    if (!(config_.lr >= 0.0f)) throw ConfigError("adam: learning rate must be non-negative");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto* p : params_) {
        m_.push_back(Tensor::zeros(p->value.shape()));
        v_.push_back(Tensor::zeros(p->value.shape()));
    }
}

void Adam::step() {
    ++step_;
    const double t = static_cast<double>(step_);
    const float c1 = static_cast<float>(1.0 - std::pow(static_cast<double>(config_.beta1), t));
    const float c2 = static_cast<float>(1.0 - std::pow(static_cast<double>(config_.beta2), t));
    const float b1 = config_.beta1, b2 = config_.beta2;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        if (!p.trainable) continue;
        require_same_shape(p.value, p.grad, "adam: parameter vs gradient");
        float* w = p.value.data();
        const float* g = p.grad.data();
        float* m = m_[i].data();
        float* v = v_[i].data();
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            m[j] = b1 * m[j] + (1.0f - b1) * g[j];
            v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
            const float mhat = m[j] / c1;
            const float vhat = v[j] / c2;
            w[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto* p : params_) p->zero_grad();
}

}  // namespace saife::nn

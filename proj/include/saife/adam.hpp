#pragma once

#include <cstdint>
#include <vector>

#include "saife/autograd.hpp"

namespace saife::nn {

struct AdamConfig {
    float lr = 0.001f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Adam over a fixed group of parameters. Moments are owned here; gradients
// are read from Parameter::grad and left untouched.
class Adam {
public:
    Adam() = default;
    Adam(std::vector<Parameter*> params, AdamConfig config);

    void step();
    void zero_grad();

    std::int64_t steps() const { return step_; }
    const AdamConfig& config() const { return config_; }
    const std::vector<Parameter*>& params() const { return params_; }
    const Tensor& first_moment(std::size_t i) const { return m_[i]; }
    const Tensor& second_moment(std::size_t i) const { return v_[i]; }

private:
    std::vector<Parameter*> params_;
    AdamConfig config_;
    std::int64_t step_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace saife::nn

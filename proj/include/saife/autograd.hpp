#pragma once

// Define-by-run reverse-mode differentiation. A Tape is rebuilt for every
// forward pass; nodes are appended in evaluation order, which is therefore a
// topological order, and backward() walks it once in reverse.

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "saife/tensor.hpp"

namespace saife::nn {

// A named trainable tensor plus its gradient accumulator.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}

    void zero_grad() { grad.fill(0.0f); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    // Leaf bound to a parameter: on backward its gradient is added into
    // param.grad. Frozen parameters (trainable == false) act as constants.
    Var leaf(Parameter& param);
    Var push(Tensor value, bool requires_grad, BackwardFn backward);

    // Seeds d(root)/d(root) = 1; root must hold exactly one element.
    void backward(Var root);

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    // Gradient buffer of a node, zero-initialised on first access.
    Tensor& grad(int id);
    bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
        Parameter* param = nullptr;
    };
    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

// Value copy with no gradient path back to `x`.
Var detach(Var x);

// --- layers -------------------------------------------------------------

Var matmul(Var a, Var b);                  // [B x I] * [I x O]
Var add_bias(Var x, Var bias);             // [B x O] + [O]
Var dense(Var x, Var weights, Var bias);   // x * W + b

// Returns (h', c'). Gate blocks of `weights` ([I+H] x 4H) and `bias` (4H)
// are ordered input, forget, candidate, output.
std::pair<Var, Var> lstm_step(Var x, Var h, Var c, Var weights, Var bias);

// x: [B x Ci x H x W], kernels: [Ci x Co x kh x kw], bias: [Co] (optional).
// Output spatial size is (H-1)*stride + k with no padding.
Var conv_transpose2d(Var x, Var kernels, Var bias, std::size_t stride_h, std::size_t stride_w);
Var conv_transpose2d(Var x, Var kernels, std::size_t stride_h, std::size_t stride_w);
// Strided valid convolution, the adjoint of conv_transpose2d for the same
// kernel tensor: x: [B x Co x H' x W'] -> [B x Ci x H x W].
Var conv2d(Var x, Var kernels, std::size_t stride_h, std::size_t stride_w);

// --- elementwise and structural ------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float s);
Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
Var softmax(Var x);  // row-wise over [B x K]
Var slice_cols(Var x, std::size_t start, std::size_t count);
Var concat_cols(Var a, Var b);
Var reshape(Var x, Shape shape);
Var sum(Var x);

// --- losses (scalar outputs) ---------------------------------------------

Var mse(Var prediction, Var target);
// mean of max(l,0) - l*t + log(1 + exp(-|l|))
Var sigmoid_cross_entropy(Var logits, Var targets);
// mean over rows of -sum_k t_k log softmax(l)_k
Var softmax_cross_entropy(Var logits, Var targets);

// Forward-only helpers used outside the tape.
Tensor softmax_rows(const Tensor& x);
float sigmoid_cross_entropy_value(float logit, float target);

}  // namespace saife::nn

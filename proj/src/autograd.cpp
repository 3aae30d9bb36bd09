#include "saife/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "saife/errors.hpp"
#include "saife/kernels.hpp"

namespace saife::nn {

namespace kp = kernels::parallel;

// --- tape -----------------------------------------------------------------

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Tape::leaf(Parameter& param) {
    Var v = push(param.value, param.trainable, nullptr);
    if (param.trainable) nodes_.back().param = &param;
    return v;
}

Var Tape::push(Tensor value, bool requires_grad, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor& Tape::grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

void Tape::backward(Var root) {
    if (root.tape() != this) throw PreconditionError("backward: variable belongs to another tape");
    if (value(root.id()).size() != 1)
        throw DimensionError("backward: root must be scalar, got " + shape_str(root.shape()));
    if (!requires_grad(root.id())) return;
    grad(root.id())[0] = 1.0f;
    for (int id = root.id(); id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (n.backward) n.backward(*this, id);
        if (n.param) {
            auto& dst = n.param->grad.storage();
            const auto& src = n.grad.storage();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
    }
}

Var detach(Var x) { return x.tape()->constant(x.value()); }

namespace {

Tape& same_tape(Var a, Var b) {
    if (a.tape() != b.tape()) throw PreconditionError("operands live on different tapes");
    return *a.tape();
}

bool any_grad(Tape& t, std::initializer_list<Var> vs) {
    for (auto v : vs)
        if (v.valid() && t.requires_grad(v.id())) return true;
    return false;
}

void accumulate(Tensor& dst, const Tensor& src) {
    float* d = dst.data();
    const float* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
    Tape& t = *x.tape();
    Tensor out(x.shape());
    const Tensor& in = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
    const int xi = x.id();
    return t.push(std::move(out), t.requires_grad(xi), [xi, deriv](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& y = tp.value(self);
        const Tensor& xv = tp.value(xi);
        Tensor& dx = tp.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * deriv(xv[i], y[i]);
    });
}

float sigmoid_scalar(float v) {
    if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
    const float e = std::exp(v);
    return e / (1.0f + e);
}

// dA[m x k] += g[m x n] * B^T for B[k x n].
void grad_lhs(std::size_t m, std::size_t n, std::size_t k, std::span<const float> g, std::span<const float> b,
              std::span<float> da) {
    if (k * n <= m * (n + k)) {
        std::vector<float> bt(n * k);
        kernels::transpose(k, n, b, bt);
        kp::gemm({m, k, n}, g, bt, da, true);
        return;
    }
    // dA = (B * g^T)^T: transposes the small gradient instead of a large B.
    std::vector<float> gt(n * m), tmp(k * m);
    kernels::transpose(m, n, g, gt);
    kp::gemm({k, m, n}, b, gt, tmp, false);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < m; ++j) da[j * k + i] += tmp[i * m + j];
}

// dB[k x n] += A^T * g for A[m x k].
void grad_rhs(std::size_t m, std::size_t n, std::size_t k, std::span<const float> a, std::span<const float> g,
              std::span<float> db) {
    std::vector<float> at(k * m);
    kernels::transpose(m, k, a, at);
    kp::gemm({k, n, m}, at, g, db, true);
}

}  // namespace

// --- dense ------------------------------------------------------------------

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_rank(a.value(), 2, "matmul lhs");
    require_rank(b.value(), 2, "matmul rhs");
    const std::size_t m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
    if (b.value().dim(0) != k)
        throw DimensionError("matmul: inner axes differ, lhs axis 1 = " + std::to_string(k) +
                             ", rhs axis 0 = " + std::to_string(b.value().dim(0)));
    Tensor out({m, n});
    kp::gemm({m, n, k}, a.value().values(), b.value().values(), out.values(), false);
    const int ai = a.id(), bi = b.id();
    return t.push(std::move(out), any_grad(t, {a, b}), [ai, bi, m, n, k](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        if (tp.requires_grad(ai)) grad_lhs(m, n, k, g.values(), tp.value(bi).values(), tp.grad(ai).values());
        if (tp.requires_grad(bi)) grad_rhs(m, n, k, tp.value(ai).values(), g.values(), tp.grad(bi).values());
    });
}

Var add_bias(Var x, Var bias) {
    Tape& t = same_tape(x, bias);
    require_rank(x.value(), 2, "add_bias input");
    const std::size_t rows = x.value().dim(0), cols = x.value().dim(1);
    if (bias.value().size() != cols)
        throw DimensionError("add_bias: input axis 1 = " + std::to_string(cols) + " but bias has " +
                             std::to_string(bias.value().size()) + " entries");
    Tensor out = x.value();
    const Tensor& bv = bias.value();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) += bv[c];
    const int xi = x.id(), bi = bias.id();
    return t.push(std::move(out), any_grad(t, {x, bias}), [xi, bi, rows, cols](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        if (tp.requires_grad(xi)) accumulate(tp.grad(xi), g);
        if (tp.requires_grad(bi)) {
            Tensor& db = tp.grad(bi);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) db[c] += g.at(r, c);
        }
    });
}

Var dense(Var x, Var weights, Var bias) {
    if (x.value().rank() == 2 && weights.value().rank() == 2 &&
        x.value().dim(1) != weights.value().dim(0))
        throw DimensionError("dense: input axis 1 (" + std::to_string(x.value().dim(1)) +
                             ") != weights axis 0 (" + std::to_string(weights.value().dim(0)) + ")");
    return add_bias(matmul(x, weights), bias);
}

std::pair<Var, Var> lstm_step(Var x, Var h, Var c, Var weights, Var bias) {
    require_rank(x.value(), 2, "lstm_step input");
    require_rank(h.value(), 2, "lstm_step hidden state");
    require_same_shape(h.value(), c.value(), "lstm_step state (h vs c)");
    const std::size_t batch = x.value().dim(0), in = x.value().dim(1), hidden = h.value().dim(1);
    if (h.value().dim(0) != batch)
        throw DimensionError("lstm_step: state batch " + std::to_string(h.value().dim(0)) +
                             " != input batch " + std::to_string(batch));
    const Shape want_w{in + hidden, 4 * hidden};
    if (weights.value().shape() != want_w || bias.value().size() != 4 * hidden)
        throw DimensionError("lstm_step: params " + shape_str(weights.value().shape()) + "/" +
                             shape_str(bias.value().shape()) + " do not fit input " +
                             std::to_string(in) + " and hidden size " + std::to_string(hidden));
    // One node for the whole cell; its value packs [h_next | c_next] per row.
    Tape& t = same_tape(x, h);
    same_tape(x, c);
    same_tape(x, weights);
    same_tape(x, bias);
    const std::size_t g4 = 4 * hidden;
    const float* w = weights.value().data();
    auto acts = std::make_shared<std::vector<float>>(batch * g4);  // i, f, g, o after activation
    auto tanh_c = std::make_shared<std::vector<float>>(batch * hidden);
    float* a = acts->data();
    for (std::size_t r = 0; r < batch; ++r) std::copy_n(bias.value().data(), g4, a + r * g4);
    kp::gemm({batch, g4, in}, x.value().values(), {w, in * g4}, *acts, true);
    kp::gemm({batch, g4, hidden}, h.value().values(), {w + in * g4, hidden * g4}, *acts, true);

    Tensor out({batch, 2 * hidden});
    const float* cp = c.value().data();
    for (std::size_t r = 0; r < batch; ++r) {
        const std::span<float> row{a + r * g4, g4};
        kernels::sigmoid(row.first(2 * hidden), row.first(2 * hidden));
        kernels::tanh(row.subspan(2 * hidden, hidden), row.subspan(2 * hidden, hidden));
        kernels::sigmoid(row.last(hidden), row.last(hidden));
        float* o = out.data() + r * 2 * hidden;
        const std::span<float> tc{tanh_c->data() + r * hidden, hidden};
        for (std::size_t j = 0; j < hidden; ++j)
            o[hidden + j] = row[hidden + j] * cp[r * hidden + j] + row[j] * row[2 * hidden + j];
        kernels::tanh({o + hidden, hidden}, tc);
        for (std::size_t j = 0; j < hidden; ++j) o[j] = row[3 * hidden + j] * tc[j];
    }

    const int xi = x.id(), hi = h.id(), ci = c.id(), wi = weights.id(), bi = bias.id();
    Var packed = t.push(std::move(out), any_grad(t, {x, h, c, weights, bias}),
                        [=](Tape& tp, int self) {
        const float* go = tp.grad(self).data();
        const float* av = acts->data();
        const float* cv = tp.value(ci).data();
        std::vector<float> dg(batch * g4);
        float* dc_prev = tp.requires_grad(ci) ? tp.grad(ci).data() : nullptr;
        for (std::size_t r = 0; r < batch; ++r) {
            const float* ar = av + r * g4;
            const float* tc = tanh_c->data() + r * hidden;
            float* d = dg.data() + r * g4;
            for (std::size_t j = 0; j < hidden; ++j) {
                const float ig = ar[j], fg = ar[hidden + j], cg = ar[2 * hidden + j], og = ar[3 * hidden + j];
                const float dh = go[r * 2 * hidden + j];
                const float dc = go[r * 2 * hidden + hidden + j] + dh * og * (1.0f - tc[j] * tc[j]);
                d[j] = dc * cg * ig * (1.0f - ig);
                d[hidden + j] = dc * cv[r * hidden + j] * fg * (1.0f - fg);
                d[2 * hidden + j] = dc * ig * (1.0f - cg * cg);
                d[3 * hidden + j] = dh * tc[j] * og * (1.0f - og);
                if (dc_prev) dc_prev[r * hidden + j] += dc * fg;
            }
        }
        const float* wv = tp.value(wi).data();
        if (tp.requires_grad(xi)) grad_lhs(batch, g4, in, dg, {wv, in * g4}, tp.grad(xi).values());
        if (tp.requires_grad(hi)) grad_lhs(batch, g4, hidden, dg, {wv + in * g4, hidden * g4}, tp.grad(hi).values());
        if (tp.requires_grad(wi)) {
            float* dw = tp.grad(wi).data();
            grad_rhs(batch, g4, in, tp.value(xi).values(), dg, {dw, in * g4});
            grad_rhs(batch, g4, hidden, tp.value(hi).values(), dg, {dw + in * g4, hidden * g4});
        }
        if (tp.requires_grad(bi)) {
            float* db = tp.grad(bi).data();
            for (std::size_t r = 0; r < batch; ++r)
                for (std::size_t j = 0; j < g4; ++j) db[j] += dg[r * g4 + j];
        }
    });
    return {slice_cols(packed, 0, hidden), slice_cols(packed, hidden, hidden)};
}

// --- convolution ------------------------------------------------------------

namespace {

kernels::ConvGeometry conv_geometry(const Tensor& small, const Tensor& kernels_t, std::size_t sh,
                                    std::size_t sw, const char* what) {
    require_rank(small, 4, what);
    require_rank(kernels_t, 4, what);
    if (sh == 0 || sw == 0) throw ConfigError(std::string(what) + ": stride must be positive");
    if (kernels_t.dim(0) != small.dim(1))
        throw DimensionError(std::string(what) + ": input channels " + std::to_string(small.dim(1)) +
                             " != kernel axis 0 (" + std::to_string(kernels_t.dim(0)) + ")");
    return {small.dim(0), small.dim(1),   kernels_t.dim(1), small.dim(2), small.dim(3),
            kernels_t.dim(2), kernels_t.dim(3), sh,         sw};
}

}  // namespace

Var conv_transpose2d(Var x, Var kernels_v, std::size_t stride_h, std::size_t stride_w) {
    Tape& t = same_tape(x, kernels_v);
    const auto g = conv_geometry(x.value(), kernels_v.value(), stride_h, stride_w, "conv_transpose2d");
    Tensor out({g.batch, g.out_channels, g.out_h(), g.out_w()});
    kp::conv_transpose(g, x.value().values(), kernels_v.value().values(), out.values());
    const int xi = x.id(), ki = kernels_v.id();
    return t.push(std::move(out), any_grad(t, {x, kernels_v}), [xi, ki, g](Tape& tp, int self) {
        const Tensor& go = tp.grad(self);
        if (tp.requires_grad(xi)) kp::conv(g, go.values(), tp.value(ki).values(), tp.grad(xi).values());
        if (tp.requires_grad(ki))
            kp::conv_weight_grad(g, tp.value(xi).values(), go.values(), tp.grad(ki).values());
    });
}

Var conv_transpose2d(Var x, Var kernels_v, Var bias, std::size_t stride_h, std::size_t stride_w) {
    Var y = conv_transpose2d(x, kernels_v, stride_h, stride_w);
    Tape& t = same_tape(y, bias);
    const std::size_t batch = y.value().dim(0), ch = y.value().dim(1);
    const std::size_t plane = y.value().dim(2) * y.value().dim(3);
    if (bias.value().size() != ch)
        throw DimensionError("conv_transpose2d: bias has " + std::to_string(bias.value().size()) +
                             " entries for " + std::to_string(ch) + " output channels");
    Tensor out = y.value();
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < ch; ++c) {
            float* p = out.data() + (n * ch + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] += bias.value()[c];
        }
    const int yi = y.id(), bi = bias.id();
    return t.push(std::move(out), any_grad(t, {y, bias}), [yi, bi, batch, ch, plane](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        if (tp.requires_grad(yi)) accumulate(tp.grad(yi), g);
        if (tp.requires_grad(bi)) {
            Tensor& db = tp.grad(bi);
            for (std::size_t n = 0; n < batch; ++n)
                for (std::size_t c = 0; c < ch; ++c) {
                    const float* p = g.data() + (n * ch + c) * plane;
                    float s = 0.0f;
                    for (std::size_t i = 0; i < plane; ++i) s += p[i];
                    db[c] += s;
                }
        }
    });
}

Var conv2d(Var x, Var kernels_v, std::size_t stride_h, std::size_t stride_w) {
    Tape& t = same_tape(x, kernels_v);
    const Tensor& xv = x.value();
    const Tensor& kv = kernels_v.value();
    require_rank(xv, 4, "conv2d");
    require_rank(kv, 4, "conv2d");
    if (stride_h == 0 || stride_w == 0) throw ConfigError("conv2d: stride must be positive");
    if (kv.dim(1) != xv.dim(1))
        throw DimensionError("conv2d: input channels " + std::to_string(xv.dim(1)) +
                             " != kernel axis 1 (" + std::to_string(kv.dim(1)) + ")");
    if (xv.dim(2) < kv.dim(2) || xv.dim(3) < kv.dim(3) || (xv.dim(2) - kv.dim(2)) % stride_h != 0 ||
        (xv.dim(3) - kv.dim(3)) % stride_w != 0)
        throw ConfigError("conv2d: input " + shape_str(xv.shape()) + " with kernel " +
                          shape_str(kv.shape()) + " and stride " + std::to_string(stride_h) + "x" +
                          std::to_string(stride_w) + " has non-integral output extent");
    const kernels::ConvGeometry g{xv.dim(0),
                                  kv.dim(0),
                                  kv.dim(1),
                                  (xv.dim(2) - kv.dim(2)) / stride_h + 1,
                                  (xv.dim(3) - kv.dim(3)) / stride_w + 1,
                                  kv.dim(2),
                                  kv.dim(3),
                                  stride_h,
                                  stride_w};
    Tensor out({g.batch, g.in_channels, g.in_h, g.in_w});
    kp::conv(g, xv.values(), kv.values(), out.values());
    const int xi = x.id(), ki = kernels_v.id();
    return t.push(std::move(out), any_grad(t, {x, kernels_v}), [xi, ki, g](Tape& tp, int self) {
        const Tensor& go = tp.grad(self);
        if (tp.requires_grad(xi))
            kp::conv_transpose(g, go.values(), tp.value(ki).values(), tp.grad(xi).values());
        if (tp.requires_grad(ki))
            kp::conv_weight_grad(g, go.values(), tp.value(xi).values(), tp.grad(ki).values());
    });
}

// --- elementwise --------------------------------------------------------------

namespace {

template <typename Op, typename Back>
Var binary(Var a, Var b, const char* what, Op op, Back back) {
    Tape& t = same_tape(a, b);
    require_same_shape(a.value(), b.value(), what);
    Tensor out(a.shape());
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(av[i], bv[i]);
    const int ai = a.id(), bi = b.id();
    return t.push(std::move(out), any_grad(t, {a, b}), [ai, bi, back](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& av2 = tp.value(ai);
        const Tensor& bv2 = tp.value(bi);
        const bool ga = tp.requires_grad(ai), gb = tp.requires_grad(bi);
        Tensor* da = ga ? &tp.grad(ai) : nullptr;
        Tensor* db = gb ? &tp.grad(bi) : nullptr;
        for (std::size_t i = 0; i < g.size(); ++i) {
            auto [pa, pb] = back(av2[i], bv2[i]);
            if (da) (*da)[i] += g[i] * pa;
            if (db) (*db)[i] += g[i] * pb;
        }
    });
}

}  // namespace

Var add(Var a, Var b) {
    return binary(a, b, "add", [](float x, float y) { return x + y; },
                  [](float, float) { return std::pair{1.0f, 1.0f}; });
}

Var sub(Var a, Var b) {
    return binary(a, b, "sub", [](float x, float y) { return x - y; },
                  [](float, float) { return std::pair{1.0f, -1.0f}; });
}

Var mul(Var a, Var b) {
    return binary(a, b, "mul", [](float x, float y) { return x * y; },
                  [](float x, float y) { return std::pair{y, x}; });
}

Var scale(Var a, float s) {
    return unary(a, [s](float v) { return v * s; }, [s](float, float) { return s; });
}

Var sigmoid(Var x) {
    return unary(x, sigmoid_scalar, [](float, float y) { return y * (1.0f - y); });
}

Var tanh(Var x) {
    return unary(x, [](float v) { return std::tanh(v); }, [](float, float y) { return 1.0f - y * y; });
}

Var relu(Var x) {
    return unary(x, [](float v) { return v > 0.0f ? v : 0.0f; },
                 [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor softmax_rows(const Tensor& x) {
    require_rank(x, 2, "softmax");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (cols == 0) throw DimensionError("softmax: need at least one column");
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        float mx = x.at(r, 0);
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x.at(r, c));
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const float e = std::exp(x.at(r, c) - mx);
            out.at(r, c) = e;
            total += e;
        }
        const float inv = static_cast<float>(1.0 / total);
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) *= inv;
    }
    return out;
}

Var softmax(Var x) {
    Tape& t = *x.tape();
    Tensor out = softmax_rows(x.value());
    const int xi = x.id();
    return t.push(std::move(out), t.requires_grad(xi), [xi](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& y = tp.value(self);
        Tensor& dx = tp.grad(xi);
        const std::size_t rows = y.dim(0), cols = y.dim(1);
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += g.at(r, c) * y.at(r, c);
            for (std::size_t c = 0; c < cols; ++c)
                dx.at(r, c) += y.at(r, c) * (g.at(r, c) - static_cast<float>(dot));
        }
    });
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
    Tape& t = *x.tape();
    require_rank(x.value(), 2, "slice_cols");
    const std::size_t rows = x.value().dim(0), cols = x.value().dim(1);
    if (start + count > cols)
        throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") exceed axis 1 extent " +
                             std::to_string(cols));
    Tensor out({rows, count});
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(x.value().data() + r * cols + start, count, out.data() + r * count);
    const int xi = x.id();
    return t.push(std::move(out), t.requires_grad(xi), [xi, rows, cols, start, count](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor& dx = tp.grad(xi);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < count; ++c) dx[r * cols + start + c] += g[r * count + c];
    });
}

Var concat_cols(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_rank(a.value(), 2, "concat_cols lhs");
    require_rank(b.value(), 2, "concat_cols rhs");
    const std::size_t rows = a.value().dim(0), ca = a.value().dim(1), cb = b.value().dim(1);
    if (b.value().dim(0) != rows)
        throw DimensionError("concat_cols: axis 0 differs (" + std::to_string(rows) + " vs " +
                             std::to_string(b.value().dim(0)) + ")");
    Tensor out({rows, ca + cb});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a.value().data() + r * ca, ca, out.data() + r * (ca + cb));
        std::copy_n(b.value().data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
    }
    const int ai = a.id(), bi = b.id();
    return t.push(std::move(out), any_grad(t, {a, b}), [ai, bi, rows, ca, cb](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        if (tp.requires_grad(ai)) {
            Tensor& da = tp.grad(ai);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < ca; ++c) da[r * ca + c] += g[r * (ca + cb) + c];
        }
        if (tp.requires_grad(bi)) {
            Tensor& db = tp.grad(bi);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cb; ++c) db[r * cb + c] += g[r * (ca + cb) + ca + c];
        }
    });
}

Var reshape(Var x, Shape shape) {
    Tape& t = *x.tape();
    Tensor out = x.value().reshaped(std::move(shape));
    const int xi = x.id();
    return t.push(std::move(out), t.requires_grad(xi),
                  [xi](Tape& tp, int self) { accumulate(tp.grad(xi), tp.grad(self)); });
}

Var sum(Var x) {
    Tape& t = *x.tape();
    double s = 0.0;
    for (float v : x.value().values()) s += v;
    const int xi = x.id();
    return t.push(Tensor({1}, static_cast<float>(s)), t.requires_grad(xi), [xi](Tape& tp, int self) {
        const float g = tp.grad(self)[0];
        Tensor& dx = tp.grad(xi);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
    });
}

// --- losses -----------------------------------------------------------------

Var mse(Var prediction, Var target) {
    Tape& t = same_tape(prediction, target);
    require_same_shape(prediction.value(), target.value(), "mse");
    const Tensor& p = prediction.value();
    const Tensor& y = target.value();
    const std::size_t n = p.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(p[i]) - y[i];
        s += d * d;
    }
    const int pi = prediction.id(), yi = target.id();
    return t.push(Tensor({1}, static_cast<float>(s / static_cast<double>(n))),
                  any_grad(t, {prediction, target}), [pi, yi, n](Tape& tp, int self) {
                      const float g = tp.grad(self)[0] * 2.0f / static_cast<float>(n);
                      const Tensor& pv = tp.value(pi);
                      const Tensor& yv = tp.value(yi);
                      if (tp.requires_grad(pi)) {
                          Tensor& dp = tp.grad(pi);
                          for (std::size_t i = 0; i < n; ++i) dp[i] += g * (pv[i] - yv[i]);
                      }
                      if (tp.requires_grad(yi)) {
                          Tensor& dy = tp.grad(yi);
                          for (std::size_t i = 0; i < n; ++i) dy[i] -= g * (pv[i] - yv[i]);
                      }
                  });
}

float sigmoid_cross_entropy_value(float logit, float target) {
    return std::max(logit, 0.0f) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

Var sigmoid_cross_entropy(Var logits, Var targets) {
    Tape& t = same_tape(logits, targets);
    require_same_shape(logits.value(), targets.value(), "sigmoid_cross_entropy");
    const Tensor& l = logits.value();
    const Tensor& y = targets.value();
    const std::size_t n = l.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += sigmoid_cross_entropy_value(l[i], y[i]);
    const int li = logits.id(), yi = targets.id();
    return t.push(Tensor({1}, static_cast<float>(s / static_cast<double>(n))),
                  any_grad(t, {logits, targets}), [li, yi, n](Tape& tp, int self) {
                      const float g = tp.grad(self)[0] / static_cast<float>(n);
                      const Tensor& lv = tp.value(li);
                      const Tensor& yv = tp.value(yi);
                      if (tp.requires_grad(li)) {
                          Tensor& dl = tp.grad(li);
                          for (std::size_t i = 0; i < n; ++i) dl[i] += g * (sigmoid_scalar(lv[i]) - yv[i]);
                      }
                      if (tp.requires_grad(yi)) {
                          Tensor& dy = tp.grad(yi);
                          for (std::size_t i = 0; i < n; ++i) dy[i] -= g * lv[i];
                      }
                  });
}

Var softmax_cross_entropy(Var logits, Var targets) {
    Tape& t = same_tape(logits, targets);
    require_same_shape(logits.value(), targets.value(), "softmax_cross_entropy");
    require_rank(logits.value(), 2, "softmax_cross_entropy");
    const Tensor& l = logits.value();
    const Tensor& y = targets.value();
    const std::size_t rows = l.dim(0), cols = l.dim(1);
    Tensor probs = softmax_rows(l);
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        float mx = l.at(r, 0);
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, l.at(r, c));
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) z += std::exp(static_cast<double>(l.at(r, c) - mx));
        const double lse = mx + std::log(z);
        for (std::size_t c = 0; c < cols; ++c)
            if (y.at(r, c) != 0.0f) s -= y.at(r, c) * (l.at(r, c) - lse);
    }
    const int li = logits.id(), yi = targets.id();
    if (t.requires_grad(yi))
        throw PreconditionError("softmax_cross_entropy: targets must not require gradients");
    return t.push(Tensor({1}, static_cast<float>(s / static_cast<double>(rows))), t.requires_grad(li),
                  [li, yi, rows, cols, probs = std::move(probs)](Tape& tp, int self) {
                      const float g = tp.grad(self)[0] / static_cast<float>(rows);
                      const Tensor& yv = tp.value(yi);
                      Tensor& dl = tp.grad(li);
                      for (std::size_t r = 0; r < rows; ++r) {
                          float tsum = 0.0f;
                          for (std::size_t c = 0; c < cols; ++c) tsum += yv.at(r, c);
                          for (std::size_t c = 0; c < cols; ++c)
                              dl.at(r, c) += g * (probs.at(r, c) * tsum - yv.at(r, c));
                      }
                  });
}

}  // namespace saife::nn

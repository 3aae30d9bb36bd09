#pragma once

// Dense numeric kernels behind the autograd layer.
//
// Each kernel exists twice: `serial::` holds the plain reference loops that
// the tests treat as ground truth, `parallel::` holds the cache-blocked
// OpenMP versions used by training and inference. The two GEMMs sum every
// output element in the same order and agree bit for bit; the parallel
// convolutions go through im2col and GEMM, so they agree with the reference
// loops to float rounding. Every parallel kernel gives the same bits for any
// thread count.

#include <cstddef>
#include <span>

namespace saife::kernels {

// C[M x N] (+)= A[M x K] * B[K x N], all row-major and contiguous.
struct GemmDims {
    std::size_t m, n, k;
};

// Geometry of a strided, unpadded transposed convolution. The "small" side
// (input of the transposed conv, output of the plain conv) is in_h x in_w; the
// large side is out_h() x out_w().
struct ConvGeometry {
    std::size_t batch;
    std::size_t in_channels;   // channels on the small side
    std::size_t out_channels;  // channels on the large side
    std::size_t in_h, in_w;
    std::size_t kernel_h, kernel_w;
    std::size_t stride_h, stride_w;

    std::size_t out_h() const { return (in_h - 1) * stride_h + kernel_h; }
    std::size_t out_w() const { return (in_w - 1) * stride_w + kernel_w; }
    std::size_t small_size() const { return batch * in_channels * in_h * in_w; }
    std::size_t large_size() const { return batch * out_channels * out_h() * out_w(); }
    std::size_t weight_size() const { return in_channels * out_channels * kernel_h * kernel_w; }
};

// Elementwise activations, vectorized; out may alias in.
void sigmoid(std::span<const float> in, std::span<float> out);
void tanh(std::span<const float> in, std::span<float> out);

void transpose(std::size_t rows, std::size_t cols, std::span<const float> in, std::span<float> out);

namespace serial {

void gemm(GemmDims d, std::span<const float> a, std::span<const float> b, std::span<float> c,
          bool accumulate);

// large += conv_transpose(small; w), w laid out [in_channels][out_channels][kh][kw].
void conv_transpose(const ConvGeometry& g, std::span<const float> small, std::span<const float> w,
                    std::span<float> large);
// small += conv(large; w): the adjoint of conv_transpose with the same weights.
void conv(const ConvGeometry& g, std::span<const float> large, std::span<const float> w,
          std::span<float> small);
// dw += sum over batch and positions of small (x) large, the weight gradient of both ops.
void conv_weight_grad(const ConvGeometry& g, std::span<const float> small,
                      std::span<const float> large, std::span<float> dw);

}  // namespace serial

namespace parallel {

void gemm(GemmDims d, std::span<const float> a, std::span<const float> b, std::span<float> c,
          bool accumulate);
void conv_transpose(const ConvGeometry& g, std::span<const float> small, std::span<const float> w,
                    std::span<float> large);
void conv(const ConvGeometry& g, std::span<const float> large, std::span<const float> w,
          std::span<float> small);
void conv_weight_grad(const ConvGeometry& g, std::span<const float> small,
                      std::span<const float> large, std::span<float> dw);

}  // namespace parallel

// Threads used by the parallel kernels (1 when built without OpenMP).
int thread_count();
void set_thread_count(int n);

}  // namespace saife::kernels

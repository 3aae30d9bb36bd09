#include "saife/kernels.hpp"

#include <algorithm>

namespace saife::kernels {

void transpose(std::size_t rows, std::size_t cols, std::span<const float> in, std::span<float> out) {
    constexpr std::size_t blk = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += blk)
        for (std::size_t c0 = 0; c0 < cols; c0 += blk) {
            const std::size_t r1 = std::min(rows, r0 + blk), c1 = std::min(cols, c0 + blk);
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
        }
}

namespace serial {

void gemm(GemmDims d, std::span<const float> a, std::span<const float> b, std::span<float> c,
          bool accumulate) {
    if (!accumulate) std::fill(c.begin(), c.begin() + d.m * d.n, 0.0f);
    for (std::size_t i = 0; i < d.m; ++i)
        for (std::size_t k = 0; k < d.k; ++k) {
            const float aik = a[i * d.k + k];
            for (std::size_t j = 0; j < d.n; ++j) c[i * d.n + j] += aik * b[k * d.n + j];
        }
}

void conv_transpose(const ConvGeometry& g, std::span<const float> small, std::span<const float> w,
                    std::span<float> large) {
    const std::size_t oh = g.out_h(), ow = g.out_w();
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t co = 0; co < g.out_channels; ++co)
            for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                for (std::size_t i = 0; i < g.in_h; ++i)
                    for (std::size_t j = 0; j < g.in_w; ++j) {
                        const float v = small[((n * g.in_channels + ci) * g.in_h + i) * g.in_w + j];
                        for (std::size_t p = 0; p < g.kernel_h; ++p)
                            for (std::size_t q = 0; q < g.kernel_w; ++q) {
                                const float wv =
                                    w[((ci * g.out_channels + co) * g.kernel_h + p) * g.kernel_w + q];
                                const std::size_t y = i * g.stride_h + p, x = j * g.stride_w + q;
                                large[((n * g.out_channels + co) * oh + y) * ow + x] += v * wv;
                            }
                    }
}

void conv(const ConvGeometry& g, std::span<const float> large, std::span<const float> w,
          std::span<float> small) {
    const std::size_t oh = g.out_h(), ow = g.out_w();
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t i = 0; i < g.in_h; ++i)
                for (std::size_t j = 0; j < g.in_w; ++j) {
                    float acc = 0.0f;
                    for (std::size_t co = 0; co < g.out_channels; ++co)
                        for (std::size_t p = 0; p < g.kernel_h; ++p)
                            for (std::size_t q = 0; q < g.kernel_w; ++q) {
                                const std::size_t y = i * g.stride_h + p, x = j * g.stride_w + q;
                                acc += large[((n * g.out_channels + co) * oh + y) * ow + x] *
                                       w[((ci * g.out_channels + co) * g.kernel_h + p) * g.kernel_w + q];
                            }
                    small[((n * g.in_channels + ci) * g.in_h + i) * g.in_w + j] += acc;
                }
}

void conv_weight_grad(const ConvGeometry& g, std::span<const float> small,
                      std::span<const float> large, std::span<float> dw) {
    const std::size_t oh = g.out_h(), ow = g.out_w();
    for (std::size_t ci = 0; ci < g.in_channels; ++ci)
        for (std::size_t co = 0; co < g.out_channels; ++co)
            for (std::size_t p = 0; p < g.kernel_h; ++p)
                for (std::size_t q = 0; q < g.kernel_w; ++q) {
                    float acc = 0.0f;
                    for (std::size_t n = 0; n < g.batch; ++n)
                        for (std::size_t i = 0; i < g.in_h; ++i)
                            for (std::size_t j = 0; j < g.in_w; ++j) {
                                const std::size_t y = i * g.stride_h + p, x = j * g.stride_w + q;
                                acc += small[((n * g.in_channels + ci) * g.in_h + i) * g.in_w + j] *
                                       large[((n * g.out_channels + co) * oh + y) * ow + x];
                            }
                    dw[((ci * g.out_channels + co) * g.kernel_h + p) * g.kernel_w + q] += acc;
                }
}

}  // namespace serial
}  // namespace saife::kernels

#include <algorithm>
#include <cstring>
#include <vector>

#include "saife/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace saife::kernels {

int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_thread_count(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

namespace parallel {
namespace {

constexpr std::size_t kMr = 8;
constexpr std::size_t kNr = 32;
constexpr std::size_t kKc = 128;  // k-chunk: A rows and one B panel stay in L1

using v16f = float __attribute__((vector_size(64)));

inline v16f load16(const float* p) {
    v16f v;
    std::memcpy(&v, p, sizeof(v));
    return v;
}

inline void store16(float* p, v16f v) { std::memcpy(p, &v, sizeof(v)); }

// Register tile: MR rows x 32 cols of C held in 2*MR vector accumulators,
// k summed in ascending order.
template <std::size_t MR>
inline void tile(std::size_t kdim, const float* a, std::size_t lda, const float* b, std::size_t ldb,
                 float* c, std::size_t ldc) {
    v16f lo[MR], hi[MR];
    for (std::size_t r = 0; r < MR; ++r) {
        lo[r] = load16(c + r * ldc);
        hi[r] = load16(c + r * ldc + 16);
    }
    for (std::size_t k = 0; k < kdim; ++k) {
        const v16f b0 = load16(b + k * ldb);
        const v16f b1 = load16(b + k * ldb + 16);
#pragma GCC unroll 8
        for (std::size_t r = 0; r < MR; ++r) {
            const float av = a[r * lda + k];
            lo[r] += av * b0;
            hi[r] += av * b1;
        }
    }
    for (std::size_t r = 0; r < MR; ++r) {
        store16(c + r * ldc, lo[r]);
        store16(c + r * ldc + 16, hi[r]);
    }
}

}  // namespace

void gemm(GemmDims d, std::span<const float> a, std::span<const float> b, std::span<float> c,
          bool accumulate) {
    if (!accumulate) std::fill(c.begin(), c.begin() + d.m * d.n, 0.0f);
    if (d.m == 0 || d.n == 0 || d.k == 0) return;
    const std::size_t col_blocks = (d.n + kNr - 1) / kNr;
    const float* pa = a.data();
    const float* pb = b.data();
    float* pc = c.data();
    // B is packed one K-chunk at a time into kc x 32 panels (zero padded on
    // the ragged edge), reading its rows in order. Chunks run in ascending k
    // and C tiles are disjoint, so every element still sums k in order.
    thread_local std::vector<float> packed;
    packed.resize(kKc * col_blocks * kNr);
    float* panels = packed.data();
    for (std::size_t k0 = 0; k0 < d.k; k0 += kKc) {
        const std::size_t kc = std::min(kKc, d.k - k0);
#pragma omp parallel
        {
#pragma omp for schedule(static)
            for (long kk = 0; kk < static_cast<long>(kc); ++kk) {
                const auto k = static_cast<std::size_t>(kk);
                const float* row = pb + (k0 + k) * d.n;
                for (std::size_t jb = 0; jb < col_blocks; ++jb) {
                    float* dst = panels + jb * kc * kNr + k * kNr;
                    const std::size_t cols = std::min(kNr, d.n - jb * kNr);
                    std::memcpy(dst, row + jb * kNr, cols * sizeof(float));
                    std::fill(dst + cols, dst + kNr, 0.0f);
                }
            }
            float scratch[kMr * kNr];
#pragma omp for schedule(static)
            for (long jbl = 0; jbl < static_cast<long>(col_blocks); ++jbl) {
                const auto jb = static_cast<std::size_t>(jbl);
                const std::size_t j0 = jb * kNr;
                const std::size_t cols = std::min(kNr, d.n - j0);
                const float* panel = panels + jb * kc * kNr;
                for (std::size_t i0 = 0; i0 < d.m; i0 += kMr) {
                    const std::size_t rows = std::min(kMr, d.m - i0);
                    const float* ablk = pa + i0 * d.k + k0;
                    float* cblk = pc + i0 * d.n + j0;
                    if (rows == kMr && cols == kNr) {
                        tile<kMr>(kc, ablk, d.k, panel, kNr, cblk, d.n);
                        continue;
                    }
                    for (std::size_t r = 0; r < rows; ++r) {
                        std::memcpy(scratch + r * kNr, cblk + r * d.n, cols * sizeof(float));
                        std::fill(scratch + r * kNr + cols, scratch + (r + 1) * kNr, 0.0f);
                    }
                    if (rows == kMr)
                        tile<kMr>(kc, ablk, d.k, panel, kNr, scratch, kNr);
                    else
                        for (std::size_t r = 0; r < rows; ++r)
                            tile<1>(kc, ablk + r * d.k, d.k, panel, kNr, scratch + r * kNr, kNr);
                    for (std::size_t r = 0; r < rows; ++r)
                        std::memcpy(cblk + r * d.n, scratch + r * kNr, cols * sizeof(float));
                }
            }
        }
    }
}

namespace {

// Rows of the im2col matrix are (sample, small-side position); columns are
// (large-side channel, kernel row, kernel col), matching the weight layout
// [in_channels][out_channels * kh * kw].
struct ColLayout {
    std::size_t positions, width, oh, ow;
    explicit ColLayout(const ConvGeometry& g)
        : positions(g.in_h * g.in_w),
          width(g.out_channels * g.kernel_h * g.kernel_w),
          oh(g.out_h()),
          ow(g.out_w()) {}
};

// rows[(n*S + s) * C + c] = small[(n*C + c) * S + s]
void small_to_rows(const ConvGeometry& g, const float* small, float* rows) {
    const std::size_t per = g.in_channels * g.in_h * g.in_w;
#pragma omp parallel for schedule(static)
    for (long n = 0; n < static_cast<long>(g.batch); ++n)
        transpose(g.in_channels, g.in_h * g.in_w, {small + static_cast<std::size_t>(n) * per, per},
                  {rows + static_cast<std::size_t>(n) * per, per});
}

}  // namespace

void conv_transpose(const ConvGeometry& g, std::span<const float> small, std::span<const float> w,
                    std::span<float> large) {
    const ColLayout L(g);
    const std::size_t m = g.batch * L.positions;
    std::vector<float> rows(m * g.in_channels), cols(m * L.width);
    small_to_rows(g, small.data(), rows.data());
    gemm({m, L.width, g.in_channels}, rows, w, cols, false);
    // col2im: every sample scatters into its own slab of `large`.
#pragma omp parallel for schedule(static)
    for (long nl = 0; nl < static_cast<long>(g.batch); ++nl) {
        const auto n = static_cast<std::size_t>(nl);
        for (std::size_t i = 0; i < g.in_h; ++i)
            for (std::size_t j = 0; j < g.in_w; ++j) {
                const float* src = cols.data() + (n * L.positions + i * g.in_w + j) * L.width;
                for (std::size_t co = 0; co < g.out_channels; ++co)
                    for (std::size_t p = 0; p < g.kernel_h; ++p) {
                        float* dst = large.data() + ((n * g.out_channels + co) * L.oh + i * g.stride_h + p) * L.ow +
                                     j * g.stride_w;
                        const float* s = src + (co * g.kernel_h + p) * g.kernel_w;
                        for (std::size_t q = 0; q < g.kernel_w; ++q) dst[q] += s[q];
                    }
            }
    }
}

void conv(const ConvGeometry& g, std::span<const float> large, std::span<const float> w,
          std::span<float> small) {
    const ColLayout L(g);
    const std::size_t m = g.batch * L.positions;
    std::vector<float> cols(m * L.width), wt(L.width * g.in_channels), rows(m * g.in_channels);
    // im2col gather
#pragma omp parallel for schedule(static)
    for (long nl = 0; nl < static_cast<long>(g.batch); ++nl) {
        const auto n = static_cast<std::size_t>(nl);
        for (std::size_t i = 0; i < g.in_h; ++i)
            for (std::size_t j = 0; j < g.in_w; ++j) {
                float* dst = cols.data() + (n * L.positions + i * g.in_w + j) * L.width;
                for (std::size_t co = 0; co < g.out_channels; ++co)
                    for (std::size_t p = 0; p < g.kernel_h; ++p) {
                        const float* src = large.data() +
                                           ((n * g.out_channels + co) * L.oh + i * g.stride_h + p) * L.ow +
                                           j * g.stride_w;
                        std::memcpy(dst + (co * g.kernel_h + p) * g.kernel_w, src, g.kernel_w * sizeof(float));
                    }
            }
    }
    transpose(g.in_channels, L.width, w, wt);
    gemm({m, g.in_channels, L.width}, cols, wt, rows, false);
    const std::size_t per = g.in_channels * L.positions;
#pragma omp parallel for schedule(static)
    for (long nl = 0; nl < static_cast<long>(g.batch); ++nl) {
        const auto n = static_cast<std::size_t>(nl);
        for (std::size_t s = 0; s < L.positions; ++s)
            for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                small[n * per + ci * L.positions + s] += rows[(n * L.positions + s) * g.in_channels + ci];
    }
}

void conv_weight_grad(const ConvGeometry& g, std::span<const float> small,
                      std::span<const float> large, std::span<float> dw) {
    const ColLayout L(g);
    const std::size_t m = g.batch * L.positions;
    std::vector<float> xt(g.in_channels * m), cols(m * L.width);
    // xt[ci][n*S + s] = small[n][ci][s]
    for (std::size_t ci = 0; ci < g.in_channels; ++ci)
        for (std::size_t n = 0; n < g.batch; ++n)
            std::memcpy(xt.data() + ci * m + n * L.positions,
                        small.data() + (n * g.in_channels + ci) * L.positions, L.positions * sizeof(float));
#pragma omp parallel for schedule(static)
    for (long nl = 0; nl < static_cast<long>(g.batch); ++nl) {
        const auto n = static_cast<std::size_t>(nl);
        for (std::size_t i = 0; i < g.in_h; ++i)
            for (std::size_t j = 0; j < g.in_w; ++j) {
                float* dst = cols.data() + (n * L.positions + i * g.in_w + j) * L.width;
                for (std::size_t co = 0; co < g.out_channels; ++co)
                    for (std::size_t p = 0; p < g.kernel_h; ++p) {
                        const float* src = large.data() +
                                           ((n * g.out_channels + co) * L.oh + i * g.stride_h + p) * L.ow +
                                           j * g.stride_w;
                        std::memcpy(dst + (co * g.kernel_h + p) * g.kernel_w, src, g.kernel_w * sizeof(float));
                    }
            }
    }
    gemm({g.in_channels, L.width, m}, xt, cols, dw, true);
}

}  // namespace parallel
}  // namespace saife::kernels

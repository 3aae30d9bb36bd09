// Serial reference vs parallel kernels on the shapes training actually uses.
//
//   bench_kernels --benchmark_counters_tabular=true

#include <vector>

#include <benchmark/benchmark.h>

#include "saife/kernels.hpp"
#include "saife/rng.hpp"

using namespace saife;

namespace {

std::vector<float> filled(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
    const kernels::GemmDims d{static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)),
                              static_cast<std::size_t>(state.range(2))};
    const auto a = filled(d.m * d.k, 1), b = filled(d.k * d.n, 2);
    std::vector<float> c(d.m * d.n);
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::parallel::gemm(d, a, b, c, false);
        else
            kernels::serial::gemm(d, a, b, c, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.counters["GFLOP/s"] = benchmark::Counter(2.0 * static_cast<double>(d.m * d.n * d.k),
                                                   benchmark::Counter::kIsIterationInvariantRate,
                                                   benchmark::Counter::kIs1000);
}

// LSTM step (x|h . W), the dense layers, and a gradient-shaped product.
void gemm_shapes(benchmark::internal::Benchmark* b) {
    b->Args({64, 2048, 576})->Args({64, 256, 532})->Args({64, 1344, 256})->Args({576, 2048, 64});
}

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Apply(gemm_shapes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Apply(gemm_shapes)->Unit(benchmark::kMillisecond);

// First decoder layer: 64 -> 32 channels from the 3 x 7 seed.
const kernels::ConvGeometry kDecoderConv{64, 64, 32, 3, 7, 2, 3, 1, 2};

template <bool Parallel>
void BM_ConvTranspose(benchmark::State& state) {
    const auto& g = kDecoderConv;
    const auto small = filled(g.small_size(), 3), w = filled(g.weight_size(), 4);
    std::vector<float> large(g.large_size());
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::parallel::conv_transpose(g, small, w, large);
        else
            kernels::serial::conv_transpose(g, small, w, large);
        benchmark::DoNotOptimize(large.data());
    }
}

template <bool Parallel>
void BM_ConvWeightGrad(benchmark::State& state) {
    const auto& g = kDecoderConv;
    const auto small = filled(g.small_size(), 5), large = filled(g.large_size(), 6);
    std::vector<float> dw(g.weight_size());
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::parallel::conv_weight_grad(g, small, large, dw);
        else
            kernels::serial::conv_weight_grad(g, small, large, dw);
        benchmark::DoNotOptimize(dw.data());
    }
}

BENCHMARK(BM_ConvTranspose<false>)->Name("conv_transpose/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvTranspose<true>)->Name("conv_transpose/parallel")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvWeightGrad<false>)->Name("conv_weight_grad/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvWeightGrad<true>)->Name("conv_weight_grad/parallel")->Unit(benchmark::kMicrosecond);

void BM_Sigmoid(benchmark::State& state) {
    auto v = filled(64 * 2048, 7);
    std::vector<float> out(v.size());
    for (auto _ : state) {
        kernels::sigmoid(v, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * v.size()));
}
BENCHMARK(BM_Sigmoid)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();

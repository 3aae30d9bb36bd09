#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "saife/kernels.hpp"
#include "saife/rng.hpp"

using namespace saife;
namespace ks = saife::kernels::serial;
namespace kp = saife::kernels::parallel;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

double max_abs(const std::vector<float>& v) {
    double m = 0.0;
    for (float x : v) m = std::max(m, static_cast<double>(std::abs(x)));
    return m;
}

}  // namespace

class GemmShapes : public ::testing::TestWithParam<std::tuple<int, int, int>> {};

TEST_P(GemmShapes, ParallelMatchesSerialBitForBit) {
    const auto [m, n, k] = GetParam();
    const kernels::GemmDims d{static_cast<std::size_t>(m), static_cast<std::size_t>(n), static_cast<std::size_t>(k)};
    const auto a = random_values(d.m * d.k, 1), b = random_values(d.k * d.n, 2);
    for (bool accumulate : {false, true}) {
        auto c_ref = random_values(d.m * d.n, 3), c_par = c_ref;
        ks::gemm(d, a, b, c_ref, accumulate);
        kp::gemm(d, a, b, c_par, accumulate);
        EXPECT_EQ(c_ref, c_par) << m << "x" << n << "x" << k << " accumulate=" << accumulate;
    }
}

// Ragged edges in every dimension, k spanning several chunks, and the
// encoder's real shape.
INSTANTIATE_TEST_SUITE_P(Shapes, GemmShapes,
                         ::testing::Values(std::tuple{1, 1, 1}, std::tuple{3, 5, 7}, std::tuple{8, 32, 16},
                                           std::tuple{9, 33, 129}, std::tuple{17, 70, 300}, std::tuple{64, 2048, 576},
                                           std::tuple{7, 31, 1}, std::tuple{1, 100, 257}));

TEST(Gemm, SameBitsForAnyThreadCount) {
    const kernels::GemmDims d{37, 101, 203};
    const auto a = random_values(d.m * d.k, 4), b = random_values(d.k * d.n, 5);
    const int before = kernels::thread_count();
    std::vector<float> first;
    for (int threads : {1, 2, 3}) {
        kernels::set_thread_count(threads);
        std::vector<float> c(d.m * d.n);
        kp::gemm(d, a, b, c, false);
        if (first.empty())
            first = c;
        else
            EXPECT_EQ(first, c) << threads << " threads";
    }
    kernels::set_thread_count(before);
}

TEST(Gemm, EmptyInnerDimensionClearsOrKeeps) {
    std::vector<float> a, b, c = {1, 2, 3, 4};
    kp::gemm({2, 2, 0}, a, b, c, true);
    EXPECT_EQ(c, (std::vector<float>{1, 2, 3, 4}));
    kp::gemm({2, 2, 0}, a, b, c, false);
    EXPECT_EQ(c, (std::vector<float>{0, 0, 0, 0}));
}

namespace {

kernels::ConvGeometry geometries[] = {
    {2, 3, 4, 2, 3, 2, 3, 1, 2},  // decoder-like: kh 2, stride (1, 2)
    {1, 1, 1, 1, 1, 2, 2, 2, 2},  // kernel replication
    {3, 64, 32, 3, 7, 2, 3, 1, 2},
    {2, 5, 3, 4, 5, 3, 4, 2, 3},
    {1, 2, 2, 3, 3, 1, 1, 1, 1},
};

}  // namespace

class ConvGeometries : public ::testing::TestWithParam<std::size_t> {};

TEST_P(ConvGeometries, ParallelAgreesWithReference) {
    const auto& g = geometries[GetParam()];
    const auto small = random_values(g.small_size(), 6), large = random_values(g.large_size(), 7),
               w = random_values(g.weight_size(), 8);
    // Reordered sums: compare relative to the output scale.
    auto check = [](const std::vector<float>& ref, const std::vector<float>& got, const char* what) {
        const double tol = 1e-5 * std::max(1.0, max_abs(ref));
        for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(ref[i], got[i], tol) << what << " at " << i;
    };
    {
        auto ref = random_values(g.large_size(), 9), got = ref;
        ks::conv_transpose(g, small, w, ref);
        kp::conv_transpose(g, small, w, got);
        check(ref, got, "conv_transpose");
    }
    {
        auto ref = random_values(g.small_size(), 10), got = ref;
        ks::conv(g, large, w, ref);
        kp::conv(g, large, w, got);
        check(ref, got, "conv");
    }
    {
        auto ref = random_values(g.weight_size(), 11), got = ref;
        ks::conv_weight_grad(g, small, large, ref);
        kp::conv_weight_grad(g, small, large, got);
        check(ref, got, "conv_weight_grad");
    }
}

INSTANTIATE_TEST_SUITE_P(Geometries, ConvGeometries, ::testing::Range<std::size_t>(0, std::size(geometries)));

TEST(Conv, SameBitsForAnyThreadCount) {
    const kernels::ConvGeometry g{4, 8, 6, 3, 7, 2, 3, 1, 2};
    const auto small = random_values(g.small_size(), 12), w = random_values(g.weight_size(), 13);
    const int before = kernels::thread_count();
    std::vector<float> first;
    for (int threads : {1, 2, 4}) {
        kernels::set_thread_count(threads);
        std::vector<float> out(g.large_size());
        kp::conv_transpose(g, small, w, out);
        if (first.empty())
            first = out;
        else
            EXPECT_EQ(first, out) << threads << " threads";
    }
    kernels::set_thread_count(before);
}

TEST(Transpose, RoundTrip) {
    const auto a = random_values(5 * 9, 14);
    std::vector<float> t(a.size()), back(a.size());
    kernels::transpose(5, 9, a, t);
    EXPECT_EQ(t[1 * 5 + 2], a[2 * 9 + 1]);
    kernels::transpose(9, 5, t, back);
    EXPECT_EQ(a, back);
}

TEST(Activations, MatchStandardLibrary) {
    std::vector<float> x;
    for (int i = -4000; i <= 4000; ++i) x.push_back(static_cast<float>(i) * 0.01f);
    x.push_back(-100.0f);
    x.push_back(100.0f);
    std::vector<float> s(x.size()), t(x.size());
    kernels::sigmoid(x, s);
    kernels::tanh(x, t);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xd = x[i];
        const double sig = 1.0 / (1.0 + std::exp(-xd));
        EXPECT_NEAR(s[i], sig, 1e-6 * std::max(1e-3, sig)) << x[i];
        EXPECT_NEAR(t[i], std::tanh(xd), 1e-6) << x[i];
    }
}

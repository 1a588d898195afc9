// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "malk/linalg/kernels.hpp"
#include "malk/linalg/matrix.hpp"
#include "malk/linalg/random.hpp"

namespace malk::kernels {
namespace {

std::vector<double> draw(std::size_t len, Rng& rng) {
    std::vector<double> v(len);
    for (double& x : v) x = rng.uniform(-3.0, 3.0);
    return v;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

class Avx2Equivalence : public ::testing::Test {
protected:
    void SetUp() override {
        simd_ = avx2_table();
        if (simd_ == nullptr) GTEST_SKIP() << "AVX2 kernels unavailable on this host";
    }
    const KernelTable& ref_ = scalar_table();
    const KernelTable* simd_ = nullptr;
};

TEST_F(Avx2Equivalence, GemmBitwise) {
    Rng rng(21);
    const std::size_t dims[] = {1, 2, 3, 4, 5, 7, 8, 9, 13, 16, 31, 64, 257, 300};
    for (std::size_t m : {1, 3, 4, 9, 33}) {
        for (std::size_t k : dims) {
            for (std::size_t n : {1, 3, 4, 8, 11, 17, 260}) {
                const auto a = draw(m * k, rng);
                const auto b = draw(k * n, rng);
                std::vector<double> c1(m * n, 7.0), c2(m * n, -7.0);
                ref_.gemm(a.data(), b.data(), c1.data(), m, k, n);
                simd_->gemm(a.data(), b.data(), c2.data(), m, k, n);
                ASSERT_TRUE(same_bits(c1, c2)) << m << "x" << k << "x" << n;
            }
        }
    }
}

TEST_F(Avx2Equivalence, ElementwiseBitwise) {
    Rng rng(22);
    for (std::size_t len : {1, 2, 3, 4, 5, 7, 8, 15, 16, 17, 1000}) {
        const auto x = draw(len, rng);
        const auto y = draw(len, rng);
        std::vector<double> o1(len), o2(len);
        ref_.add(x.data(), y.data(), o1.data(), len);
        simd_->add(x.data(), y.data(), o2.data(), len);
        ASSERT_TRUE(same_bits(o1, o2));
        ref_.sub(x.data(), y.data(), o1.data(), len);
        simd_->sub(x.data(), y.data(), o2.data(), len);
        ASSERT_TRUE(same_bits(o1, o2));
        ref_.mul(x.data(), y.data(), o1.data(), len);
        simd_->mul(x.data(), y.data(), o2.data(), len);
        ASSERT_TRUE(same_bits(o1, o2));
        ref_.scale(0.37, x.data(), o1.data(), len);
        simd_->scale(0.37, x.data(), o2.data(), len);
        ASSERT_TRUE(same_bits(o1, o2));
        std::vector<double> y1 = y, y2 = y;
        ref_.axpy(-1.3, x.data(), y1.data(), len);
        simd_->axpy(-1.3, x.data(), y2.data(), len);
        ASSERT_TRUE(same_bits(y1, y2));
    }
}

TEST_F(Avx2Equivalence, AdamwBitwise) {
    Rng rng(23);
    for (std::size_t len : {1, 3, 4, 9, 128, 131}) {
        const auto g = draw(len, rng);
        std::vector<double> p1 = draw(len, rng), p2 = p1;
        std::vector<double> m1(len, 0.0), m2(len, 0.0), v1(len, 0.0), v2(len, 0.0);
        for (int step = 1; step <= 5; ++step) {
            const AdamwParams hp{1e-3, 0.9, 0.999, 1e-8, 0.01, 1.0 - std::pow(0.9, step),
                                 1.0 - std::pow(0.999, step)};
            ref_.adamw(hp, g.data(), p1.data(), m1.data(), v1.data(), len);
            simd_->adamw(hp, g.data(), p2.data(), m2.data(), v2.data(), len);
        }
        ASSERT_TRUE(same_bits(p1, p2));
        ASSERT_TRUE(same_bits(m1, m2));
        ASSERT_TRUE(same_bits(v1, v2));
    }
}

TEST_F(Avx2Equivalence, MatrixLevelProductsAgreeAcrossBackends) {
    Rng rng(24);
    const Matrix a = uniform_matrix(37, 70, -1, 1, rng);
    const Matrix b = uniform_matrix(70, 29, -1, 1, rng);
    ASSERT_TRUE(select_backend(Backend::Scalar));
    const Matrix c1 = matmul(a, b);
    ASSERT_TRUE(select_backend(Backend::Avx2));
    const Matrix c2 = matmul(a, b);
    select_backend(Backend::Auto);
    EXPECT_TRUE(c1.identical(c2));
}

TEST(Kernels, ScalarGemmSumsInOrder) {
    // 1e16 + 1 - 1e16 evaluated left to right is 0; any reordering gives 1.
    const double a[] = {1e16, 1.0, -1e16};
    const double b[] = {1.0, 1.0, 1.0};
    double c = 5.0;
    scalar_table().gemm(a, b, &c, 1, 3, 1);
    EXPECT_EQ(c, 0.0);
    if (const KernelTable* t = avx2_table()) {
        double c2 = 5.0;
        t->gemm(a, b, &c2, 1, 3, 1);
        EXPECT_EQ(c2, 0.0);
    }
}

TEST(Kernels, AutoSelection) {
    EXPECT_TRUE(select_backend(Backend::Scalar));
    EXPECT_EQ(active().name, scalar_table().name);
    EXPECT_TRUE(select_backend(Backend::Auto));
    if (avx2_table() != nullptr) {
        EXPECT_EQ(active().name, avx2_table()->name);
    }
}

}  // namespace
}  // namespace malk::kernels

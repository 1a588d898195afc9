// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//
// AVX2 variants of the reference kernels. This translation unit is compiled
// with -mavx2 but without -mfma: products and sums stay separate so each lane
// reproduces the scalar rounding sequence exactly.

#include "malk/linalg/kernels.hpp"

#if defined(MALK_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace malk::kernels {
namespace {

constexpr std::size_t kDepthBlock = 256;
constexpr std::size_t kColBlock = 256;

// b holds kc rows of 8 values each, ldb apart; a rows are lda apart and
// already offset to the first depth index.
inline void micro_4x8(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                      std::size_t ldc, std::size_t kc) {
    double* c0 = c;
    double* c1 = c + ldc;
    double* c2 = c + 2 * ldc;
    double* c3 = c + 3 * ldc;
    __m256d c0a = _mm256_loadu_pd(c0), c0b = _mm256_loadu_pd(c0 + 4);
    __m256d c1a = _mm256_loadu_pd(c1), c1b = _mm256_loadu_pd(c1 + 4);
    __m256d c2a = _mm256_loadu_pd(c2), c2b = _mm256_loadu_pd(c2 + 4);
    __m256d c3a = _mm256_loadu_pd(c3), c3b = _mm256_loadu_pd(c3 + 4);
    for (std::size_t p = 0; p < kc; ++p) {
        const double* brow = b + p * ldb;
        const __m256d ba = _mm256_loadu_pd(brow);
        const __m256d bb = _mm256_loadu_pd(brow + 4);
        __m256d av = _mm256_broadcast_sd(a + p);
        c0a = _mm256_add_pd(c0a, _mm256_mul_pd(av, ba));
        c0b = _mm256_add_pd(c0b, _mm256_mul_pd(av, bb));
        av = _mm256_broadcast_sd(a + lda + p);
        c1a = _mm256_add_pd(c1a, _mm256_mul_pd(av, ba));
        c1b = _mm256_add_pd(c1b, _mm256_mul_pd(av, bb));
        av = _mm256_broadcast_sd(a + 2 * lda + p);
        c2a = _mm256_add_pd(c2a, _mm256_mul_pd(av, ba));
        c2b = _mm256_add_pd(c2b, _mm256_mul_pd(av, bb));
        av = _mm256_broadcast_sd(a + 3 * lda + p);
        c3a = _mm256_add_pd(c3a, _mm256_mul_pd(av, ba));
        c3b = _mm256_add_pd(c3b, _mm256_mul_pd(av, bb));
    }
    _mm256_storeu_pd(c0, c0a);
    _mm256_storeu_pd(c0 + 4, c0b);
    _mm256_storeu_pd(c1, c1a);
    _mm256_storeu_pd(c1 + 4, c1b);
    _mm256_storeu_pd(c2, c2a);
    _mm256_storeu_pd(c2 + 4, c2b);
    _mm256_storeu_pd(c3, c3a);
    _mm256_storeu_pd(c3 + 4, c3b);
}

inline void micro_1x8(const double* a, const double* b, std::size_t ldb, double* c, std::size_t kc) {
    __m256d ca = _mm256_loadu_pd(c), cb = _mm256_loadu_pd(c + 4);
    for (std::size_t p = 0; p < kc; ++p) {
        const double* brow = b + p * ldb;
        const __m256d av = _mm256_broadcast_sd(a + p);
        ca = _mm256_add_pd(ca, _mm256_mul_pd(av, _mm256_loadu_pd(brow)));
        cb = _mm256_add_pd(cb, _mm256_mul_pd(av, _mm256_loadu_pd(brow + 4)));
    }
    _mm256_storeu_pd(c, ca);
    _mm256_storeu_pd(c + 4, cb);
}

inline void micro_1x4(const double* a, const double* b, double* c, std::size_t n, std::size_t p0,
                      std::size_t p1) {
    __m256d ca = _mm256_loadu_pd(c);
    for (std::size_t p = p0; p < p1; ++p) {
        const __m256d av = _mm256_broadcast_sd(a + p);
        ca = _mm256_add_pd(ca, _mm256_mul_pd(av, _mm256_loadu_pd(b + p * n)));
    }
    _mm256_storeu_pd(c, ca);
}

inline void micro_1x1(const double* a, const double* b, double* c, std::size_t n, std::size_t p0,
                      std::size_t p1) {
    double acc = *c;
    for (std::size_t p = p0; p < p1; ++p) acc = acc + a[p] * b[p * n];
    *c = acc;
}

// Blocked over depth and columns. Within a block, each 8-column strip of b is
// copied into a contiguous panel first: reading it in place strides by n
// doubles per depth step, which for power-of-two n maps every load to the same
// cache set. Every output element still sums its depth terms in ascending
// order, so results match the scalar kernel bit for bit.
void gemm_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
    std::fill(c, c + m * n, 0.0);
    thread_local std::vector<double> panel;
    panel.resize(kDepthBlock * 8);
    for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
        const std::size_t p1 = std::min(k, p0 + kDepthBlock);
        const std::size_t kc = p1 - p0;
        for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
            const std::size_t j1 = std::min(n, j0 + kColBlock);
            std::size_t j = j0;
            for (; j + 8 <= j1; j += 8) {
                for (std::size_t p = 0; p < kc; ++p)
                    std::copy_n(b + (p0 + p) * n + j, 8, panel.data() + p * 8);
                std::size_t i = 0;
                for (; i + 4 <= m; i += 4) micro_4x8(a + i * k + p0, k, panel.data(), 8, c + i * n + j, n, kc);
                for (; i < m; ++i) micro_1x8(a + i * k + p0, panel.data(), 8, c + i * n + j, kc);
            }
            for (std::size_t i = 0; i < m; ++i) {
                const double* arow = a + i * k;
                double* crow = c + i * n;
                std::size_t jt = j;
                for (; jt + 4 <= j1; jt += 4) micro_1x4(arow, b + jt, crow + jt, n, p0, p1);
                for (; jt < j1; ++jt) micro_1x1(arow, b + jt, crow + jt, n, p0, p1);
            }
        }
    }
}

void add_avx2(const double* x, const double* y, double* out, std::size_t len) {
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < len; ++i) out[i] = x[i] + y[i];
}

void sub_avx2(const double* x, const double* y, double* out, std::size_t len) {
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < len; ++i) out[i] = x[i] - y[i];
}

void mul_avx2(const double* x, const double* y, double* out, std::size_t len) {
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < len; ++i) out[i] = x[i] * y[i];
}

void scale_avx2(double alpha, const double* x, double* out, std::size_t len) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    for (; i < len; ++i) out[i] = alpha * x[i];
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t len) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4) {
        const __m256d yv = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(y + i, _mm256_add_pd(yv, _mm256_mul_pd(av, _mm256_loadu_pd(x + i))));
    }
    for (; i < len; ++i) y[i] = y[i] + alpha * x[i];
}

void adamw_avx2(const AdamwParams& p, const double* grad, double* param, double* m, double* v,
                std::size_t len) {
    const __m256d b1 = _mm256_set1_pd(p.beta1);
    const __m256d b2 = _mm256_set1_pd(p.beta2);
    const __m256d omb1 = _mm256_set1_pd(1.0 - p.beta1);
    const __m256d omb2 = _mm256_set1_pd(1.0 - p.beta2);
    const __m256d bc1 = _mm256_set1_pd(p.bias_correction1);
    const __m256d bc2 = _mm256_set1_pd(p.bias_correction2);
    const __m256d eps = _mm256_set1_pd(p.eps);
    const __m256d wd = _mm256_set1_pd(p.weight_decay);
    const __m256d lr = _mm256_set1_pd(p.lr);
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        const __m256d mi =
            _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(omb1, g));
        const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                         _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d mhat = _mm256_div_pd(mi, bc1);
        const __m256d vhat = _mm256_div_pd(vi, bc2);
        const __m256d pv = _mm256_loadu_pd(param + i);
        const __m256d step = _mm256_add_pd(
            _mm256_div_pd(mhat, _mm256_add_pd(_mm256_sqrt_pd(vhat), eps)), _mm256_mul_pd(wd, pv));
        _mm256_storeu_pd(param + i, _mm256_sub_pd(pv, _mm256_mul_pd(lr, step)));
    }
    const double one_m_b1 = 1.0 - p.beta1;
    const double one_m_b2 = 1.0 - p.beta2;
    for (; i < len; ++i) {
        const double g = grad[i];
        const double mi = p.beta1 * m[i] + one_m_b1 * g;
        const double vi = p.beta2 * v[i] + one_m_b2 * (g * g);
        m[i] = mi;
        v[i] = vi;
        const double mhat = mi / p.bias_correction1;
        const double vhat = vi / p.bias_correction2;
        const double step = mhat / (std::sqrt(vhat) + p.eps) + p.weight_decay * param[i];
        param[i] = param[i] - p.lr * step;
    }
}

}  // namespace

const KernelTable* avx2_table() noexcept {
    static const KernelTable table{"avx2",   gemm_avx2,  add_avx2,  sub_avx2,
                                   mul_avx2, scale_avx2, axpy_avx2, adamw_avx2};
    static const bool supported = __builtin_cpu_supports("avx2");
    return supported ? &table : nullptr;
}

}  // namespace malk::kernels

#else

namespace malk::kernels {
const KernelTable* avx2_table() noexcept { return nullptr; }
}  // namespace malk::kernels

#endif

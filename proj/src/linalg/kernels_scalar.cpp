// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/linalg/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace malk::kernels {
namespace {

void gemm_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
    std::fill(c, c + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] = crow[j] + av * brow[j];
            }
        }
    }
}

void add_scalar(const double* x, const double* y, double* out, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) out[i] = x[i] + y[i];
}

void sub_scalar(const double* x, const double* y, double* out, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) out[i] = x[i] - y[i];
}

void mul_scalar(const double* x, const double* y, double* out, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) out[i] = x[i] * y[i];
}

void scale_scalar(double alpha, const double* x, double* out, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) out[i] = alpha * x[i];
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) y[i] = y[i] + alpha * x[i];
}

void adamw_scalar(const AdamwParams& p, const double* grad, double* param, double* m, double* v,
                  std::size_t len) {
    const double one_m_b1 = 1.0 - p.beta1;
    const double one_m_b2 = 1.0 - p.beta2;
    for (std::size_t i = 0; i < len; ++i) {
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

const KernelTable& scalar_table() noexcept {
    static const KernelTable table{"scalar",   gemm_scalar,  add_scalar,  sub_scalar,
                                   mul_scalar, scale_scalar, axpy_scalar, adamw_scalar};
    return table;
}

}  // namespace malk::kernels

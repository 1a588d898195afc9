// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel inner loops behind Matrix arithmetic and the optimizer.
//
// Every kernel exists as a portable scalar reference and, where the host
// supports it, an AVX2 variant. The variants are required to be bitwise
// identical to the reference: gemm accumulates each output element over k in
// ascending order starting from +0.0, elementwise kernels use separate
// multiply and add (no FMA contraction), and sqrt/div are IEEE correctly
// rounded in both paths. Checkpoints are therefore independent of the
// backend that produced them.

#pragma once

#include <cstddef>
#include <string_view>

namespace malk::kernels {

struct AdamwParams {
    double lr;
    double beta1;
    double beta2;
    double eps;
    double weight_decay;
    double bias_correction1;  // 1 - beta1^t
    double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
    std::string_view name;
    // c[m x n] = a[m x k] * b[k x n], all row-major, c overwritten.
    void (*gemm)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n);
    void (*add)(const double* x, const double* y, double* out, std::size_t len);
    void (*sub)(const double* x, const double* y, double* out, std::size_t len);
    void (*mul)(const double* x, const double* y, double* out, std::size_t len);
    void (*scale)(double alpha, const double* x, double* out, std::size_t len);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t len);
    // Decoupled-weight-decay Adam update of one parameter block in place.
    void (*adamw)(const AdamwParams& p, const double* grad, double* param, double* m, double* v,
                  std::size_t len);
};

enum class Backend { Auto, Scalar, Avx2 };

const KernelTable& scalar_table() noexcept;

// nullptr when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_table() noexcept;

// The table used by Matrix operations. Initialised from MALK_KERNELS
// (scalar|avx2|auto, default auto) on first use.
const KernelTable& active() noexcept;

// Returns false (and leaves the selection unchanged) if the backend is
// unavailable on this host.
bool select_backend(Backend backend) noexcept;

}  // namespace malk::kernels

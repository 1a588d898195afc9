// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <vector>

#include "malk/linalg/matrix.hpp"

namespace malk {

/// Thin SVD m = u * diag(sigma) * v with k = min(rows, cols).
/// u is rows x k with orthonormal columns, v is k x cols with orthonormal rows,
/// sigma is non-increasing. Each row of v has its first nonzero entry >= 0.
struct SvdResult {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
};

/// One-sided (Hestenes) Jacobi SVD. Throws InvalidInput on non-finite input.
SvdResult svd_thin(const Matrix& m);

/// u[:, :k] * diag(sigma[:k]) * v[:k, :]
Matrix svd_reconstruct(const SvdResult& svd, std::size_t k);
Matrix svd_reconstruct(const SvdResult& svd);

/// Count of singular values above rel_tol * sigma_max.
std::size_t numerical_rank(const std::vector<double>& sigma, double rel_tol);

/// Orthonormal rows spanning the row space of m, via Householder QR with
/// column pivoting on m^T. Throws RankDeficient when m does not have full row
/// rank within rel_tol.
Matrix orthonormal_basis(const Matrix& m, double rel_tol = 1e-10);

}  // namespace malk

// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/linalg/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "malk/errors.hpp"
#include "malk/linalg/kernels.hpp"

namespace malk {
namespace {

void require_dims(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
        throw InvalidInput("matrix dimensions must be positive, got " + std::to_string(rows) +
                           "x" + std::to_string(cols));
    }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
    }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : Matrix(rows, cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols) {
    require_dims(rows, cols);
    data_.assign(rows * cols, fill);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require_dims(rows, cols);
    if (data_.size() != rows * cols) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " does not match " + shape());
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged initializer for Matrix::from_rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::string Matrix::shape() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::identical(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_ &&
           (data_.empty() ||
            std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: shape mismatch " + a.shape() + " * " + b.shape());
    }
    Matrix c(a.rows(), b.cols());
    kernels::active().gemm(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: shape mismatch " + a.shape() + " * (" + b.shape() + ")^T");
    }
    return matmul(a, transpose(b));
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: shape mismatch (" + a.shape() + ")^T * " + b.shape());
    }
    return matmul(transpose(a), b);
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    constexpr std::size_t kTile = 32;
    for (std::size_t i0 = 0; i0 < m.rows(); i0 += kTile) {
        const std::size_t i1 = std::min(m.rows(), i0 + kTile);
        for (std::size_t j0 = 0; j0 < m.cols(); j0 += kTile) {
            const std::size_t j1 = std::min(m.cols(), j0 + kTile);
            for (std::size_t i = i0; i < i1; ++i)
                for (std::size_t j = j0; j < j1; ++j) t(j, i) = m(i, j);
        }
    }
    return t;
}

Matrix scale(const Matrix& m, double alpha) {
    Matrix out(m.rows(), m.cols());
    kernels::active().scale(alpha, m.data(), out.data(), m.size());
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out(a.rows(), a.cols());
    kernels::active().add(a.data(), b.data(), out.data(), a.size());
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix out(a.rows(), a.cols());
    kernels::active().sub(a.data(), b.data(), out.data(), a.size());
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out(a.rows(), a.cols());
    kernels::active().mul(a.data(), b.data(), out.data(), a.size());
    return out;
}

void axpy_inplace(double alpha, const Matrix& x, Matrix& y) {
    require_same_shape(x, y, "axpy");
    kernels::active().axpy(alpha, x.data(), y.data(), x.size());
}

double frobenius_norm(const Matrix& m) {
    // Scaled accumulation so very large or tiny entries do not overflow.
    double scale_v = 0.0;
    double ssq = 1.0;
    for (double v : m.values()) {
        if (v == 0.0) continue;
        const double a = std::fabs(v);
        if (scale_v < a) {
            ssq = 1.0 + ssq * (scale_v / a) * (scale_v / a);
            scale_v = a;
        } else {
            ssq += (a / scale_v) * (a / scale_v);
        }
    }
    return scale_v * std::sqrt(ssq);
}

double max_abs(const Matrix& m) {
    double best = 0.0;
    for (double v : m.values()) best = std::max(best, std::fabs(v));
    return best;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double best = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        best = std::max(best, std::fabs(a.data()[i] - b.data()[i]));
    return best;
}

bool all_finite(const Matrix& m) noexcept {
    return std::all_of(m.values().begin(), m.values().end(),
                       [](double v) { return std::isfinite(v); });
}

Matrix concat_rows(std::span<const Matrix> parts) {
    if (parts.empty()) throw InvalidInput("concat_rows: no parts");
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const Matrix& p : parts) {
        if (p.cols() != cols) {
            throw ShapeError("concat_rows: column mismatch " + parts.front().shape() + " vs " +
                             p.shape());
        }
        rows += p.rows();
    }
    std::vector<double> data;
    data.reserve(rows * cols);
    for (const Matrix& p : parts) data.insert(data.end(), p.values().begin(), p.values().end());
    return Matrix(rows, cols, std::move(data));
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t count) {
    if (begin + count > m.rows()) {
        throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " + m.shape());
    }
    std::vector<double> data(m.data() + begin * m.cols(), m.data() + (begin + count) * m.cols());
    return Matrix(count, m.cols(), std::move(data));
}

Matrix take_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m.rows()) {
            throw ShapeError("take_rows: row " + std::to_string(rows[i]) + " out of range for " +
                             m.shape());
        }
        std::copy_n(m.data() + rows[i] * m.cols(), m.cols(), out.data() + i * m.cols());
    }
    return out;
}

}  // namespace malk

// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode differentiation over Matrix values. A Tape is
// built fresh for every forward pass: each op appends a node holding its
// forward value and a closure that pulls the output gradient back into its
// parents. Nodes only carry gradients when some trainable parameter feeds
// them, so frozen weights and raw inputs cost nothing on the backward sweep.

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "malk/linalg/matrix.hpp"

namespace malk {
class Rng;
}

namespace malk::ad {

class Tape;

enum class OpKind {
    Constant,
    Parameter,
    Add,
    Sub,
    Matmul,
    MatmulNT,
    MatmulConst,
    Scale,
    Hadamard,
    SoftmaxRows,
    Relu,
    MaskSelect,
    RowNormalize,
    ConcatRows,
    GatherRows,
    ScaleRowsByGate,
    ScatterAdd,
    Dropout,
    SumAll,
    WeightedSum,
    MseLoss,
    SoftmaxCrossEntropy,
};

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

using GradientMap = std::map<std::string, Matrix>;

class Tape {
public:
    using BackwardFn =
        std::function<void(Tape&, std::size_t self, const Matrix& out_grad)>;

    struct Node {
        OpKind kind;
        std::vector<std::size_t> parents;
        Matrix value;
        Matrix grad;  // empty until something flows in
        bool requires_grad = false;
        BackwardFn backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    /// Registers a named leaf. Names must be unique per tape.
    Var parameter(const std::string& name, const Matrix& value, bool trainable);

    /// Reverse sweep from a 1x1 loss. Returns one gradient per trainable
    /// parameter (zeros when the loss does not depend on it); frozen
    /// parameters never appear. Throws NotScalarLoss for a non-1x1 root.
    GradientMap backward(Var loss);

    const Node& node(std::size_t id) const { return nodes_.at(id); }
    std::size_t size() const noexcept { return nodes_.size(); }
    const std::map<std::string, std::size_t>& parameters() const noexcept { return params_; }
    bool trainable(const std::string& name) const;

    // Used by op implementations.
    Var push(OpKind kind, std::vector<std::size_t> parents, Matrix value, BackwardFn backward);
    void accumulate(std::size_t id, const Matrix& grad);
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

private:
    std::vector<Node> nodes_;
    std::map<std::string, std::size_t> params_;
    std::map<std::string, bool> trainable_;
};

// ---- ops ---------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
/// x * w for a matrix that lives outside the tape (frozen weights). The
/// referenced matrix must outlive the tape.
Var matmul_const(Var x, const Matrix& w);
Var scale(Var a, double c);
Var hadamard(Var a, Var b);
Var softmax_rows(Var a);
Var relu(Var a);
/// a * mask with a 0/1 mask; gradients only flow through selected entries.
Var mask_select(Var a, const Matrix& mask);
/// Divides each row by its sum. Rows must have a positive sum.
Var row_normalize(Var a);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const std::size_t> rows);
/// out[i, :] = v[i, :] * gates[rows[i], col]
Var scale_rows_by_gate(Var v, Var gates, std::span<const std::size_t> rows, std::size_t col);
/// base plus each part scattered (added) into the listed rows.
Var scatter_add(Var base, std::span<const Var> parts,
                std::span<const std::vector<std::size_t>> rows);
/// Inverted dropout with a mask drawn from rng; identity when rate == 0.
Var dropout(Var a, double rate, Rng& rng);
Var sum_all(Var a);
/// sum(a .* w) for a constant weight matrix.
Var weighted_sum(Var a, const Matrix& w);
/// mean((pred - target)^2) over every entry.
Var mse_loss(Var pred, const Matrix& target);
/// Mean negative log-likelihood of softmax(logits) at the given labels.
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);

}  // namespace malk::ad

// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>

#include "malk/errors.hpp"
#include "malk/linalg/random.hpp"

namespace malk::ad {
namespace {

Tape& same_tape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || a.tape != b.tape) {
        throw InvalidInput(std::string(op) + ": operands live on different tapes");
    }
    return *a.tape;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
    }
}

Matrix scalar(double v) { return Matrix(1, 1, v); }

}  // namespace

const Matrix& Var::value() const { return tape->node(id).value; }

Var Tape::constant(Matrix value) {
    return push(OpKind::Constant, {}, std::move(value), nullptr);
}

Var Tape::parameter(const std::string& name, const Matrix& value, bool trainable) {
    if (params_.count(name)) throw InvalidInput("parameter '" + name + "' registered twice");
    nodes_.push_back(Node{OpKind::Parameter, {}, value, Matrix(), trainable, nullptr});
    const std::size_t id = nodes_.size() - 1;
    params_.emplace(name, id);
    trainable_.emplace(name, trainable);
    return Var{this, id};
}

bool Tape::trainable(const std::string& name) const {
    const auto it = trainable_.find(name);
    return it != trainable_.end() && it->second;
}

Var Tape::push(OpKind kind, std::vector<std::size_t> parents, Matrix value, BackwardFn backward) {
    bool needs = false;
    for (std::size_t p : parents) needs = needs || nodes_.at(p).requires_grad;
    nodes_.push_back(Node{kind, std::move(parents), std::move(value), Matrix(), needs,
                          needs ? std::move(backward) : BackwardFn{}});
    return Var{this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Matrix& grad) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
        n.grad = grad;
    } else {
        axpy_inplace(1.0, grad, n.grad);
    }
}

GradientMap Tape::backward(Var loss) {
    if (loss.tape != this) throw InvalidInput("backward: loss lives on another tape");
    const Matrix& lv = nodes_.at(loss.id).value;
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw NotScalarLoss("backward: loss must be 1x1, got " + lv.shape());
    }
    for (Node& n : nodes_) n.grad = Matrix();
    if (nodes_[loss.id].requires_grad) nodes_[loss.id].grad = scalar(1.0);
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
        // accumulate() writes into other nodes; keep our own gradient stable.
        const Matrix g = n.grad;
        n.backward(*this, id, g);
    }
    GradientMap out;
    for (const auto& [name, id] : params_) {
        if (!trainable(name)) continue;
        const Node& n = nodes_[id];
        out.emplace(name, n.grad.empty() ? Matrix(n.value.rows(), n.value.cols()) : n.grad);
    }
    return out;
}

// ---- ops ---------------------------------------------------------------

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b, "add");
    Matrix v = malk::add(a.value(), b.value());
    const std::size_t ia = a.id, ib = b.id;
    return t.push(OpKind::Add, {ia, ib}, std::move(v), [ia, ib](Tape& tp, std::size_t, const Matrix& g) {
        tp.accumulate(ia, g);
        tp.accumulate(ib, g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b, "sub");
    Matrix v = malk::sub(a.value(), b.value());
    const std::size_t ia = a.id, ib = b.id;
    return t.push(OpKind::Sub, {ia, ib}, std::move(v), [ia, ib](Tape& tp, std::size_t, const Matrix& g) {
        tp.accumulate(ia, g);
        if (tp.requires_grad(ib)) tp.accumulate(ib, malk::scale(g, -1.0));
    });
}

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b, "matmul");
    Matrix v = malk::matmul(a.value(), b.value());
    const std::size_t ia = a.id, ib = b.id;
    return t.push(OpKind::Matmul, {ia, ib}, std::move(v), [ia, ib](Tape& tp, std::size_t, const Matrix& g) {
        if (tp.requires_grad(ia)) tp.accumulate(ia, malk::matmul_nt(g, tp.node(ib).value));
        if (tp.requires_grad(ib)) tp.accumulate(ib, malk::matmul_tn(tp.node(ia).value, g));
    });
}

Var matmul_nt(Var a, Var b) {
    Tape& t = same_tape(a, b, "matmul_nt");
    Matrix v = malk::matmul_nt(a.value(), b.value());
    const std::size_t ia = a.id, ib = b.id;
    return t.push(OpKind::MatmulNT, {ia, ib}, std::move(v), [ia, ib](Tape& tp, std::size_t, const Matrix& g) {
        if (tp.requires_grad(ia)) tp.accumulate(ia, malk::matmul(g, tp.node(ib).value));
        if (tp.requires_grad(ib)) tp.accumulate(ib, malk::matmul_tn(g, tp.node(ia).value));
    });
}

Var matmul_const(Var x, const Matrix& w) {
    Matrix v = malk::matmul(x.value(), w);
    const std::size_t ix = x.id;
    const Matrix* wp = &w;
    return x.tape->push(OpKind::MatmulConst, {ix}, std::move(v),
                        [ix, wp](Tape& tp, std::size_t, const Matrix& g) { tp.accumulate(ix, malk::matmul_nt(g, *wp)); });
}

Var scale(Var a, double c) {
    Matrix v = malk::scale(a.value(), c);
    const std::size_t ia = a.id;
    return a.tape->push(OpKind::Scale, {ia}, std::move(v),
                        [ia, c](Tape& tp, std::size_t, const Matrix& g) { tp.accumulate(ia, malk::scale(g, c)); });
}

Var hadamard(Var a, Var b) {
    Tape& t = same_tape(a, b, "hadamard");
    Matrix v = malk::hadamard(a.value(), b.value());
    const std::size_t ia = a.id, ib = b.id;
    return t.push(OpKind::Hadamard, {ia, ib}, std::move(v), [ia, ib](Tape& tp, std::size_t, const Matrix& g) {
        if (tp.requires_grad(ia)) tp.accumulate(ia, malk::hadamard(g, tp.node(ib).value));
        if (tp.requires_grad(ib)) tp.accumulate(ib, malk::hadamard(g, tp.node(ia).value));
    });
}

Var softmax_rows(Var a) {
    const Matrix& x = a.value();
    Matrix y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto row = x.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            y(r, c) = std::exp(row[c] - mx);
            sum += y(r, c);
        }
        for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) /= sum;
    }
    const std::size_t ia = a.id;
    return a.tape->push(OpKind::SoftmaxRows, {ia}, std::move(y), [ia](Tape& tp, std::size_t self, const Matrix& g) {
        const Matrix& p = tp.node(self).value;
        Matrix dx(p.rows(), p.cols());
        for (std::size_t r = 0; r < p.rows(); ++r) {
            double dotv = 0.0;
            for (std::size_t c = 0; c < p.cols(); ++c) dotv += g(r, c) * p(r, c);
            for (std::size_t c = 0; c < p.cols(); ++c) dx(r, c) = p(r, c) * (g(r, c) - dotv);
        }
        tp.accumulate(ia, dx);
    });
}

Var relu(Var a) {
    const Matrix& x = a.value();
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
    const std::size_t ia = a.id;
    return a.tape->push(OpKind::Relu, {ia}, std::move(y), [ia](Tape& tp, std::size_t, const Matrix& g) {
        const Matrix& x = tp.node(ia).value;
        Matrix dx(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) dx.data()[i] = x.data()[i] > 0.0 ? g.data()[i] : 0.0;
        tp.accumulate(ia, dx);
    });
}

Var mask_select(Var a, const Matrix& mask) {
    require_same_shape(a.value(), mask, "mask_select");
    Matrix y(a.rows(), a.cols());
    for (std::size_t i = 0; i < y.size(); ++i)
        y.data()[i] = mask.data()[i] != 0.0 ? a.value().data()[i] : 0.0;
    const std::size_t ia = a.id;
    return a.tape->push(OpKind::MaskSelect, {ia}, std::move(y), [ia, mask](Tape& tp, std::size_t, const Matrix& g) {
        Matrix dx(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) dx.data()[i] = mask.data()[i] != 0.0 ? g.data()[i] : 0.0;
        tp.accumulate(ia, dx);
    });
}

Var row_normalize(Var a) {
    const Matrix& x = a.value();
    Matrix y(x.rows(), x.cols());
    std::vector<double> sums(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (double v : x.row(r)) s += v;
        if (!(s > 0.0)) throw InvalidInput("row_normalize: row " + std::to_string(r) + " has non-positive sum");
        sums[r] = s;
        for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = x(r, c) / s;
    }
    const std::size_t ia = a.id;
    return a.tape->push(OpKind::RowNormalize, {ia}, std::move(y),
                        [ia, sums](Tape& tp, std::size_t self, const Matrix& g) {
                            const Matrix& y = tp.node(self).value;
                            Matrix dx(y.rows(), y.cols());
                            for (std::size_t r = 0; r < y.rows(); ++r) {
                                double dotv = 0.0;
                                for (std::size_t c = 0; c < y.cols(); ++c) dotv += g(r, c) * y(r, c);
                                for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = (g(r, c) - dotv) / sums[r];
                            }
                            tp.accumulate(ia, dx);
                        });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw InvalidInput("concat_rows: no parts");
    std::vector<Matrix> values;
    std::vector<std::size_t> ids;
    for (const Var& p : parts) {
        if (p.tape != parts.front().tape) throw InvalidInput("concat_rows: mixed tapes");
        values.push_back(p.value());
        ids.push_back(p.id);
    }
    Matrix v = malk::concat_rows(values);
    return parts.front().tape->push(OpKind::ConcatRows, ids, std::move(v), [ids](Tape& tp, std::size_t, const Matrix& g) {
        std::size_t offset = 0;
        for (std::size_t id : ids) {
            const std::size_t r = tp.node(id).value.rows();
            if (tp.requires_grad(id)) tp.accumulate(id, slice_rows(g, offset, r));
            offset += r;
        }
    });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
    Matrix v = take_rows(a.value(), rows);
    const std::size_t ia = a.id;
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return a.tape->push(OpKind::GatherRows, {ia}, std::move(v), [ia, idx](Tape& tp, std::size_t, const Matrix& g) {
        const Matrix& src = tp.node(ia).value;
        Matrix dx(src.rows(), src.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            double* dst = dx.row(idx[i]).data();
            const double* gr = g.row(i).data();
            for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += gr[c];
        }
        tp.accumulate(ia, dx);
    });
}

Var scale_rows_by_gate(Var v, Var gates, std::span<const std::size_t> rows, std::size_t col) {
    Tape& t = same_tape(v, gates, "scale_rows_by_gate");
    const Matrix& vv = v.value();
    const Matrix& gv = gates.value();
    if (rows.size() != vv.rows() || col >= gv.cols()) {
        throw ShapeError("scale_rows_by_gate: " + std::to_string(rows.size()) + " row ids for " +
                         vv.shape() + ", gate column " + std::to_string(col) + " of " + gv.shape());
    }
    Matrix out(vv.rows(), vv.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= gv.rows()) throw ShapeError("scale_rows_by_gate: row id out of range");
        const double gate = gv(rows[i], col);
        for (std::size_t c = 0; c < vv.cols(); ++c) out(i, c) = vv(i, c) * gate;
    }
    const std::size_t iv = v.id, ig = gates.id;
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return t.push(OpKind::ScaleRowsByGate, {iv, ig}, std::move(out),
                  [iv, ig, idx, col](Tape& tp, std::size_t, const Matrix& g) {
                      const Matrix& vv = tp.node(iv).value;
                      const Matrix& gv = tp.node(ig).value;
                      if (tp.requires_grad(iv)) {
                          Matrix dv(vv.rows(), vv.cols());
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                              const double gate = gv(idx[i], col);
                              for (std::size_t c = 0; c < vv.cols(); ++c) dv(i, c) = g(i, c) * gate;
                          }
                          tp.accumulate(iv, dv);
                      }
                      if (tp.requires_grad(ig)) {
                          Matrix dg(gv.rows(), gv.cols());
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                              double s = 0.0;
                              for (std::size_t c = 0; c < vv.cols(); ++c) s += g(i, c) * vv(i, c);
                              dg(idx[i], col) += s;
                          }
                          tp.accumulate(ig, dg);
                      }
                  });
}

Var scatter_add(Var base, std::span<const Var> parts, std::span<const std::vector<std::size_t>> rows) {
    if (parts.size() != rows.size()) throw ShapeError("scatter_add: parts and row lists differ in length");
    Matrix v = base.value();
    std::vector<std::size_t> parents{base.id};
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const Matrix& pv = parts[p].value();
        if (parts[p].tape != base.tape) throw InvalidInput("scatter_add: mixed tapes");
        if (pv.cols() != v.cols() || pv.rows() != rows[p].size()) {
            throw ShapeError("scatter_add: part " + pv.shape() + " does not fit " +
                             std::to_string(rows[p].size()) + " rows of " + v.shape());
        }
        for (std::size_t i = 0; i < rows[p].size(); ++i) {
            if (rows[p][i] >= v.rows()) throw ShapeError("scatter_add: row id out of range");
            double* dst = v.row(rows[p][i]).data();
            const double* src = pv.row(i).data();
            for (std::size_t c = 0; c < v.cols(); ++c) dst[c] += src[c];
        }
        parents.push_back(parts[p].id);
    }
    std::vector<std::vector<std::size_t>> idx(rows.begin(), rows.end());
    return base.tape->push(OpKind::ScatterAdd, parents, std::move(v),
                           [parents, idx](Tape& tp, std::size_t, const Matrix& g) {
                               tp.accumulate(parents[0], g);
                               for (std::size_t p = 0; p < idx.size(); ++p) {
                                   if (!tp.requires_grad(parents[p + 1])) continue;
                                   tp.accumulate(parents[p + 1], take_rows(g, idx[p]));
                               }
                           });
}

Var dropout(Var a, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw InvalidInput("dropout: rate must be in [0, 1)");
    if (rate == 0.0) return a;
    const double keep = 1.0 - rate;
    Matrix mask(a.rows(), a.cols());
    for (double& m : mask.values()) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    Matrix v = malk::hadamard(a.value(), mask);
    const std::size_t ia = a.id;
    return a.tape->push(OpKind::Dropout, {ia}, std::move(v),
                        [ia, mask](Tape& tp, std::size_t, const Matrix& g) { tp.accumulate(ia, malk::hadamard(g, mask)); });
}

Var sum_all(Var a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    const std::size_t ia = a.id;
    return a.tape->push(OpKind::SumAll, {ia}, scalar(s), [ia](Tape& tp, std::size_t, const Matrix& g) {
        const Matrix& x = tp.node(ia).value;
        tp.accumulate(ia, Matrix(x.rows(), x.cols(), g(0, 0)));
    });
}

Var weighted_sum(Var a, const Matrix& w) {
    require_same_shape(a.value(), w, "weighted_sum");
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += a.value().data()[i] * w.data()[i];
    const std::size_t ia = a.id;
    return a.tape->push(OpKind::WeightedSum, {ia}, scalar(s),
                        [ia, w](Tape& tp, std::size_t, const Matrix& g) { tp.accumulate(ia, malk::scale(w, g(0, 0))); });
}

Var mse_loss(Var pred, const Matrix& target) {
    require_same_shape(pred.value(), target, "mse_loss");
    const Matrix diff = malk::sub(pred.value(), target);
    double s = 0.0;
    for (double d : diff.values()) s += d * d;
    const double count = static_cast<double>(diff.size());
    const std::size_t ip = pred.id;
    return pred.tape->push(OpKind::MseLoss, {ip}, scalar(s / count),
                           [ip, diff, count](Tape& tp, std::size_t, const Matrix& g) {
                               tp.accumulate(ip, malk::scale(diff, 2.0 * g(0, 0) / count));
                           });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
    const Matrix& x = logits.value();
    if (labels.size() != x.rows()) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + x.shape());
    }
    Matrix p(x.rows(), x.cols());
    double loss = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        if (labels[r] >= x.cols()) {
            throw InvalidInput("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                               " out of range for " + std::to_string(x.cols()) + " classes");
        }
        const auto row = x.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            p(r, c) = std::exp(row[c] - mx);
            sum += p(r, c);
        }
        for (std::size_t c = 0; c < x.cols(); ++c) p(r, c) /= sum;
        loss += -(row[labels[r]] - mx - std::log(sum));
    }
    const double n = static_cast<double>(x.rows());
    std::vector<std::size_t> lab(labels.begin(), labels.end());
    const std::size_t il = logits.id;
    return logits.tape->push(OpKind::SoftmaxCrossEntropy, {il}, scalar(loss / n),
                             [il, p, lab, n](Tape& tp, std::size_t, const Matrix& g) {
                                 Matrix dx = p;
                                 for (std::size_t r = 0; r < lab.size(); ++r) dx(r, lab[r]) -= 1.0;
                                 tp.accumulate(il, malk::scale(dx, g(0, 0) / n));
                             });
}

}  // namespace malk::ad

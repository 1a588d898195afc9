// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/linalg/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "malk/errors.hpp"

namespace malk {
namespace {

constexpr double kJacobiTol = 1e-15;
constexpr int kMaxSweeps = 100;

double dot(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

// Replaces row `target` of basis (rows x len) with a unit vector orthogonal to
// every row in `keep`. Tries canonical directions until one survives.
void complete_row(Matrix& basis, std::size_t target, const std::vector<std::size_t>& keep) {
    const std::size_t len = basis.cols();
    std::vector<double> cand(len);
    for (std::size_t e = 0; e < len; ++e) {
        std::fill(cand.begin(), cand.end(), 0.0);
        cand[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k : keep) {
                const double* q = basis.row(k).data();
                const double proj = dot(q, cand.data(), len);
                for (std::size_t i = 0; i < len; ++i) cand[i] -= proj * q[i];
            }
        }
        const double norm = std::sqrt(dot(cand.data(), cand.data(), len));
        if (norm > 1e-6) {
            for (std::size_t i = 0; i < len; ++i) basis(target, i) = cand[i] / norm;
            return;
        }
    }
}

// Jacobi on a matrix with at least as many rows as columns. `cols_t` holds the
// columns of the input as rows (k x p).
SvdResult svd_tall(Matrix cols_t) {
    const std::size_t k = cols_t.rows();
    const std::size_t p = cols_t.cols();
    Matrix vt = Matrix::identity(k);  // rows are right singular vectors

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < k; ++i) {
            for (std::size_t j = i + 1; j < k; ++j) {
                double* wi = cols_t.row(i).data();
                double* wj = cols_t.row(j).data();
                const double alpha = dot(wi, wi, p);
                const double beta = dot(wj, wj, p);
                const double gamma = dot(wi, wj, p);
                if (gamma == 0.0 || std::fabs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) {
                    continue;
                }
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t r = 0; r < p; ++r) {
                    const double a = wi[r];
                    const double b = wj[r];
                    wi[r] = c * a - s * b;
                    wj[r] = s * a + c * b;
                }
                double* vi = vt.row(i).data();
                double* vj = vt.row(j).data();
                for (std::size_t r = 0; r < k; ++r) {
                    const double a = vi[r];
                    const double b = vj[r];
                    vi[r] = c * a - s * b;
                    vj[r] = s * a + c * b;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> norms(k);
    for (std::size_t i = 0; i < k; ++i) norms[i] = std::sqrt(dot(cols_t.row(i).data(), cols_t.row(i).data(), p));
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

    SvdResult out{Matrix(p, k), std::vector<double>(k), Matrix(k, k)};
    Matrix ut(k, p);  // left vectors as rows while assembling
    const double smax = norms[order[0]];
    std::vector<std::size_t> good;
    std::vector<std::size_t> weak;
    for (std::size_t pos = 0; pos < k; ++pos) {
        const std::size_t src = order[pos];
        out.sigma[pos] = norms[src];
        std::copy_n(vt.row(src).data(), k, out.v.row(pos).data());
        if (smax > 0.0 && norms[src] > smax * 1e-13) {
            for (std::size_t r = 0; r < p; ++r) ut(pos, r) = cols_t(src, r) / norms[src];
            good.push_back(pos);
        } else {
            weak.push_back(pos);
        }
    }
    for (std::size_t pos : weak) {
        complete_row(ut, pos, good);
        good.push_back(pos);
    }

    for (std::size_t pos = 0; pos < k; ++pos) {
        auto vrow = out.v.row(pos);
        const auto first = std::find_if(vrow.begin(), vrow.end(),
                                         [](double x) { return std::fabs(x) > 1e-12; });
        if (first != vrow.end() && *first < 0.0) {
            for (double& x : vrow) x = -x;
            for (std::size_t r = 0; r < p; ++r) ut(pos, r) = -ut(pos, r);
        }
    }
    out.u = transpose(ut);
    return out;
}

}  // namespace

SvdResult svd_thin(const Matrix& m) {
    if (m.empty()) throw InvalidInput("svd_thin: empty matrix");
    if (!all_finite(m)) throw InvalidInput("svd_thin: non-finite input " + m.shape());
    if (m.rows() >= m.cols()) return svd_tall(transpose(m));

    // Wide: factor m^T = U' S V' and swap roles, m = V'^T S U'^T.
    SvdResult wide = svd_tall(Matrix(m));
    SvdResult out{transpose(wide.v), std::move(wide.sigma), transpose(wide.u)};
    for (std::size_t pos = 0; pos < out.sigma.size(); ++pos) {
        auto vrow = out.v.row(pos);
        const auto first = std::find_if(vrow.begin(), vrow.end(),
                                        [](double x) { return std::fabs(x) > 1e-12; });
        if (first != vrow.end() && *first < 0.0) {
            for (double& x : vrow) x = -x;
            for (std::size_t r = 0; r < out.u.rows(); ++r) out.u(r, pos) = -out.u(r, pos);
        }
    }
    return out;
}

Matrix svd_reconstruct(const SvdResult& svd, std::size_t k) {
    k = std::min(k, svd.sigma.size());
    Matrix out(svd.u.rows(), svd.v.cols());
    for (std::size_t s = 0; s < k; ++s) {
        for (std::size_t i = 0; i < svd.u.rows(); ++i) {
            const double us = svd.u(i, s) * svd.sigma[s];
            if (us == 0.0) continue;
            for (std::size_t j = 0; j < svd.v.cols(); ++j) out(i, j) += us * svd.v(s, j);
        }
    }
    return out;
}

Matrix svd_reconstruct(const SvdResult& svd) { return svd_reconstruct(svd, svd.sigma.size()); }

std::size_t numerical_rank(const std::vector<double>& sigma, double rel_tol) {
    if (sigma.empty()) return 0;
    const double smax = *std::max_element(sigma.begin(), sigma.end());
    if (smax == 0.0) return 0;
    return static_cast<std::size_t>(std::count_if(
        sigma.begin(), sigma.end(), [&](double s) { return s > rel_tol * smax; }));
}

Matrix orthonormal_basis(const Matrix& m, double rel_tol) {
    if (m.empty()) throw InvalidInput("orthonormal_basis: empty matrix");
    if (!all_finite(m)) throw InvalidInput("orthonormal_basis: non-finite input " + m.shape());
    const std::size_t r = m.rows();
    const std::size_t n = m.cols();
    // Work on the rows of m as columns of the QR input; store them as rows.
    Matrix work(m);
    std::vector<double> tau(std::min(r, n), 0.0);
    std::vector<std::size_t> perm(r);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<double> colnorm(r);
    for (std::size_t j = 0; j < r; ++j) colnorm[j] = std::sqrt(dot(work.row(j).data(), work.row(j).data(), n));

    const std::size_t steps = std::min(r, n);
    std::vector<double> diag(steps, 0.0);
    for (std::size_t j = 0; j < steps; ++j) {
        // Pivot: largest remaining norm, recomputed exactly to avoid drift.
        std::size_t best = j;
        double best_norm = -1.0;
        for (std::size_t c = j; c < r; ++c) {
            double s = 0.0;
            for (std::size_t i = j; i < n; ++i) s += work(c, i) * work(c, i);
            colnorm[c] = std::sqrt(s);
            if (colnorm[c] > best_norm) {
                best_norm = colnorm[c];
                best = c;
            }
        }
        if (best != j) {
            std::swap_ranges(work.row(j).begin(), work.row(j).end(), work.row(best).begin());
            std::swap(perm[j], perm[best]);
            std::swap(colnorm[j], colnorm[best]);
        }
        double* x = work.row(j).data();
        const double alpha = colnorm[j];
        if (alpha == 0.0) {
            diag[j] = 0.0;
            tau[j] = 0.0;
            continue;
        }
        const double beta = x[j] >= 0.0 ? -alpha : alpha;
        // Householder vector stored in x[j..n), with v_j = x_j - beta.
        x[j] -= beta;
        const double vnorm2 = dot(x + j, x + j, n - j);
        tau[j] = 2.0 / vnorm2;
        diag[j] = beta;
        for (std::size_t c = j + 1; c < r; ++c) {
            double* y = work.row(c).data();
            const double proj = tau[j] * dot(x + j, y + j, n - j);
            for (std::size_t i = j; i < n; ++i) y[i] -= proj * x[i];
        }
    }

    const double dmax = steps ? std::fabs(diag[0]) : 0.0;
    std::size_t rank = 0;
    for (std::size_t j = 0; j < steps; ++j)
        if (dmax > 0.0 && std::fabs(diag[j]) > rel_tol * dmax) ++rank;
    if (rank < r) {
        throw RankDeficient("orthonormal_basis: input " + m.shape() + " is not full row rank",
                            rank);
    }

    // Accumulate Q e_c for c < r by applying reflectors in reverse.
    Matrix q(r, n);
    for (std::size_t c = 0; c < r; ++c) {
        double* e = q.row(c).data();
        e[c] = 1.0;
        for (std::size_t jj = steps; jj-- > 0;) {
            const double* v = work.row(jj).data();
            if (tau[jj] == 0.0) continue;
            const double proj = tau[jj] * dot(v + jj, e + jj, n - jj);
            for (std::size_t i = jj; i < n; ++i) e[i] -= proj * v[i];
        }
    }
    return q;
}

}  // namespace malk

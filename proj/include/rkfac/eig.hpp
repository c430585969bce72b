#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rkfac/errors.hpp"
#include "rkfac/matrix.hpp"

namespace rkfac {

struct SymEigResult {
    DenseMatrix p;          // orthonormal eigenvectors, column i <-> d[i]
    std::vector<double> d;  // eigenvalues, sorted decreasingly
};

struct SvdResult {
    DenseMatrix u;
    std::vector<double> s;  // decreasing, nonnegative
    DenseMatrix v;
};

namespace detail {

// Householder reduction of a symmetric matrix to tridiagonal form with
// accumulated transformations (EISPACK tred2 lineage, restructured for
// row-major cache behaviour: the reduction applies full symmetric rank-2
// updates so every inner loop walks contiguous rows, and the accumulated
// orthogonal matrix is kept TRANSPOSED -- eigenvector i is ROW i of v on
// exit -- so tql2's Givens rotations also act on contiguous rows).
// d holds the diagonal, e the subdiagonal (e[0] unused).
inline void tred2(DenseMatrix& v, std::vector<double>& d, std::vector<double>& e) {
    const std::size_t n = v.rows();
    for (std::size_t j = 0; j < n; ++j) d[j] = v(n - 1, j);

    for (std::size_t i = n - 1; i > 0; --i) {
        double scale = 0.0, h = 0.0;
        for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
        if (scale == 0.0) {
            e[i] = d[i - 1];
            for (std::size_t j = 0; j < i; ++j) {
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
                v(j, i) = 0.0;
            }
        } else {
            for (std::size_t k = 0; k < i; ++k) {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            double f = d[i - 1];
            double g = std::sqrt(h);
            if (f > 0.0) g = -g;
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;

            // e = A d over the full symmetric active block (row-contiguous),
            // stashing the Householder vector in column i.
            for (std::size_t j = 0; j < i; ++j) {
                v(j, i) = d[j];
                const double* row = v.row_ptr(j);
                double s = 0.0;
                for (std::size_t k = 0; k < i; ++k) s += row[k] * d[k];
                e[j] = s;
            }
            f = 0.0;
            for (std::size_t j = 0; j < i; ++j) {
                e[j] /= h;
                f += e[j] * d[j];
            }
            const double hh = f / (h + h);
            for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];

            // Symmetric rank-2 update A -= d e^T + e d^T on both triangles,
            // each row updated contiguously.
            for (std::size_t r = 0; r < i; ++r) {
                const double dr = d[r], er = e[r];
                double* row = v.row_ptr(r);
                for (std::size_t c = 0; c < i; ++c) row[c] -= dr * e[c] + er * d[c];
            }
            for (std::size_t j = 0; j < i; ++j) {
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate transformations into the transposed layout: w = Q^T, so
    // the Householder vector (stashed in column i+1 of v, i.e. row i+1 of w)
    // and every updated vector are contiguous rows.
    DenseMatrix w(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) w(r, c) = v(c, r);
    std::vector<double> diag(n);

    for (std::size_t i = 0; i + 1 < n; ++i) {
        diag[i] = w(i, i);
        w(i, i) = 1.0;
        const double h = d[i + 1];
        if (h != 0.0) {
            const double* hv = w.row_ptr(i + 1);  // Householder vector / h below
            for (std::size_t k = 0; k <= i; ++k) d[k] = hv[k] / h;
            for (std::size_t j = 0; j <= i; ++j) {
                double* row = w.row_ptr(j);
                double g = 0.0;
                for (std::size_t k = 0; k <= i; ++k) g += hv[k] * row[k];
                for (std::size_t k = 0; k <= i; ++k) row[k] -= g * d[k];
            }
        }
        double* next = w.row_ptr(i + 1);
        for (std::size_t k = 0; k <= i; ++k) next[k] = 0.0;
    }
    diag[n - 1] = w(n - 1, n - 1);
    for (std::size_t j = 0; j < n; ++j) {
        d[j] = diag[j];
        w(j, n - 1) = 0.0;
    }
    w(n - 1, n - 1) = 1.0;
    e[0] = 0.0;
    v = std::move(w);
}

// Implicit-shift QL on the tridiagonal form (EISPACK tql2 lineage).
// Eigenvectors are accumulated in the transposed layout produced by tred2:
// on exit ROW i of v is the eigenvector for d[i], and each Givens rotation
// mixes two contiguous rows. Throws NoConvergence past the per-eigenvalue
// iteration cap.
inline void tql2(DenseMatrix& v, std::vector<double>& d, std::vector<double>& e,
                 int max_iter = 60) {
    const std::size_t n = v.rows();
    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;

    double f = 0.0, tst1 = 0.0;
    const double eps = std::pow(2.0, -52.0);
    for (std::size_t l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
        std::size_t m = l;
        while (m < n && std::abs(e[m]) > eps * tst1) ++m;

        if (m > l) {
            int iter = 0;
            do {
                if (++iter > max_iter)
                    throw NoConvergence("sym_eig: QL iteration cap exceeded");

                double g = d[l];
                double p = (d[l + 1] - g) / (2.0 * e[l]);
                double r = std::hypot(p, 1.0);
                if (p < 0.0) r = -r;
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                const double dl1 = d[l + 1];
                double h = g - d[l];
                for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
                f += h;

                p = d[m];
                double c = 1.0, c2 = c, c3 = c;
                const double el1 = e[l + 1];
                double s = 0.0, s2 = 0.0;
                for (std::size_t i = m; i-- > l;) {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = std::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    double* vi = v.row_ptr(i);
                    double* vi1 = v.row_ptr(i + 1);
                    for (std::size_t k = 0; k < n; ++k) {
                        h = vi1[k];
                        vi1[k] = s * vi[k] + c * h;
                        vi[k] = c * vi[k] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
            } while (std::abs(e[l]) > eps * tst1);
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

// Indices sorting key decreasingly; stable, so equal values keep the
// pre-sort order (determinism on degenerate spectra).
inline std::vector<std::size_t> sort_desc_stable(const std::vector<double>& key) {
    std::vector<std::size_t> idx(key.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
    return idx;
}

}  // namespace detail

/// Symmetric eigendecomposition S = P diag(d) P^T with d sorted
/// decreasingly. S is symmetrized as (S + S^T)/2 internally; asymmetry
/// beyond 1e-8 max-entry is rejected.
inline SymEigResult sym_eig(const DenseMatrix& s) {
    if (s.rows() != s.cols()) throw DimensionMismatch("sym_eig: matrix not square");
    const std::size_t n = s.rows();
    const double scale_ref = std::max(1.0, max_abs(s));
    if (max_asymmetry(s) > 1e-8 * scale_ref)
        throw DimensionMismatch("sym_eig: input asymmetry exceeds tolerance");

    DenseMatrix v = s;
    symmetrize_in_place(v);
    std::vector<double> d(n), e(n, 0.0);
    if (n == 1) {
        return {DenseMatrix::identity(1), {v(0, 0)}};
    }
    detail::tred2(v, d, e);
    detail::tql2(v, d, e);

    // tred2/tql2 keep eigenvectors as rows; transpose into columns while
    // applying the stable descending sort.
    const auto idx = detail::sort_desc_stable(d);
    DenseMatrix p(n, n);
    std::vector<double> ds(n);
    for (std::size_t j = 0; j < n; ++j) {
        ds[j] = d[idx[j]];
        const double* row = v.row_ptr(idx[j]);
        for (std::size_t i = 0; i < n; ++i) p(i, j) = row[i];
    }
    return {std::move(p), std::move(ds)};
}

/// SVD of a small matrix via symmetric eigendecomposition of the Gram
/// matrix of the narrower side, intended for the sketch core matrices
/// (min(m,n) up to a few hundred). Returns the thin factorization with
/// min(m,n) modes; zero modes get an orthonormal-completion basis column.
inline SvdResult svd_small(const DenseMatrix& x) {
    const std::size_t m = x.rows(), n = x.cols();
    if (m < n) {
        SvdResult t = svd_small(transpose(x));
        return {std::move(t.v), std::move(t.s), std::move(t.u)};
    }

    // Gram route: X^T X = V diag(s^2) V^T, then U = X V / s.
    DenseMatrix gram = matmul_at_b(x, x);
    symmetrize_in_place(gram);
    SymEigResult eig = sym_eig(gram);

    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = std::sqrt(std::max(0.0, eig.d[i]));
    const double smax = n ? s[0] : 0.0;
    const double tiny = std::max(smax * 1e-13, 1e-300);

    DenseMatrix xv = matmul(x, eig.p);  // m x n
    DenseMatrix u(m, n);
    std::vector<std::size_t> zero_modes;
    for (std::size_t j = 0; j < n; ++j) {
        if (s[j] > tiny) {
            for (std::size_t i = 0; i < m; ++i) u(i, j) = xv(i, j) / s[j];
        } else {
            s[j] = 0.0;
            zero_modes.push_back(j);
        }
    }

    // Orthonormal completion for zero singular values: canonical vectors
    // re-orthogonalized against the columns already placed.
    std::size_t cand = 0;
    for (std::size_t j : zero_modes) {
        for (; cand < m; ++cand) {
            std::vector<double> w(m, 0.0);
            w[cand] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t jj = 0; jj < n; ++jj) {
                    if (s[jj] == 0.0 && jj >= j) continue;  // not yet placed
                    double dot = 0.0;
                    for (std::size_t i = 0; i < m; ++i) dot += w[i] * u(i, jj);
                    for (std::size_t i = 0; i < m; ++i) w[i] -= dot * u(i, jj);
                }
            }
            double norm = 0.0;
            for (double e : w) norm += e * e;
            norm = std::sqrt(norm);
            if (norm > 1e-8) {
                for (std::size_t i = 0; i < m; ++i) u(i, j) = w[i] / norm;
                ++cand;
                break;
            }
        }
    }

    return {std::move(u), std::move(s), std::move(eig.p)};
}

}  // namespace rkfac

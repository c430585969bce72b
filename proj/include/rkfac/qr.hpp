#pragma once

#include <cmath>
#include <vector>

#include "rkfac/errors.hpp"
#include "rkfac/matrix.hpp"

namespace rkfac {

struct QrResult {
    DenseMatrix q;  // m x n, orthonormal columns
    DenseMatrix r;  // n x n, upper-triangular
};

/// Thin QR via Householder reflections, X is m x n with m >= n.
///
/// A pivot column whose norm underflows below 1e-300 is numerically zero.
/// With strict=true that raises RankDeficient; the default skips the
/// reflection (H = I), which still yields orthonormal Q and QR = X with a
/// zero row in R -- the behaviour the randomized sketches rely on when the
/// input rank is below the sketch width.
inline QrResult qr_thin(const DenseMatrix& x, bool strict = false) {
    const std::size_t m = x.rows(), n = x.cols();
    if (m < n) throw DimensionMismatch("qr_thin: requires rows >= cols");

    DenseMatrix a = x;                         // becomes R in its upper triangle
    std::vector<std::vector<double>> vs(n);    // Householder vectors
    std::vector<double> betas(n, 0.0);

    for (std::size_t k = 0; k < n; ++k) {
        double norm = 0.0;
        for (std::size_t i = k; i < m; ++i) norm += a(i, k) * a(i, k);
        norm = std::sqrt(norm);
        if (norm < 1e-300) {
            if (strict) throw RankDeficient("qr_thin: pivot column numerically zero");
            continue;  // H = I; R keeps its (numerically zero) entries
        }
        std::vector<double> v(m - k);
        for (std::size_t i = k; i < m; ++i) v[i - k] = a(i, k);
        const double alpha = (v[0] >= 0.0) ? -norm : norm;
        v[0] -= alpha;
        double vtv = 0.0;
        for (double e : v) vtv += e * e;
        if (vtv < 1e-300) continue;  // column already aligned with e_k
        const double beta = 2.0 / vtv;

        // Apply H = I - beta v v^T to the trailing block of a.
        for (std::size_t j = k; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += v[i - k] * a(i, j);
            s *= beta;
            for (std::size_t i = k; i < m; ++i) a(i, j) -= s * v[i - k];
        }
        a(k, k) = alpha;
        for (std::size_t i = k + 1; i < m; ++i) a(i, k) = 0.0;
        vs[k] = std::move(v);
        betas[k] = beta;
    }

    // Q = H_0 ... H_{n-1} applied to the first n columns of I.
    DenseMatrix q(m, n);
    for (std::size_t j = 0; j < n; ++j) q(j, j) = 1.0;
    for (std::size_t k = n; k-- > 0;) {
        if (vs[k].empty()) continue;
        const std::vector<double>& v = vs[k];
        const double beta = betas[k];
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += v[i - k] * q(i, j);
            s *= beta;
            for (std::size_t i = k; i < m; ++i) q(i, j) -= s * v[i - k];
        }
    }

    DenseMatrix r(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) r(i, j) = a(i, j);

    // Fix the sign convention: diag(R) >= 0, so qr_thin(I) = (I, I).
    for (std::size_t k = 0; k < n; ++k) {
        if (r(k, k) >= 0.0) continue;
        for (std::size_t j = k; j < n; ++j) r(k, j) = -r(k, j);
        for (std::size_t i = 0; i < m; ++i) q(i, k) = -q(i, k);
    }
    return {std::move(q), std::move(r)};
}

}  // namespace rkfac

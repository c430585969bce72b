#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "rkfac/eig.hpp"
#include "rkfac/matrix.hpp"
#include "rkfac/qr.hpp"
#include "rkfac/rng.hpp"

namespace rkfac {

enum class DecompMethod { RSVD, SREVD, EXACT };

/// Rank-r approximate eigenpair set (U, d) of a symmetric PSD matrix.
struct LowRankEig {
    DenseMatrix u;          // d_M x r, orthonormal columns
    std::vector<double> d;  // r approximate eigenvalues, decreasing
    DecompMethod method = DecompMethod::RSVD;

    std::size_t rank() const { return d.size(); }
    std::size_t dim() const { return u.rows(); }
};

struct SketchParams {
    std::size_t target_rank = 1;   // r
    std::size_t oversampling = 0;  // r_l
    std::size_t power_iters = 0;   // n_pwr_it
};

namespace detail {

// If r + r_l exceeds the target dimension, shrink r_l first, then r.
inline SketchParams clamp_sketch(SketchParams p, std::size_t dim) {
    if (p.target_rank > dim) {
        p.target_rank = dim;
        p.oversampling = 0;
    } else if (p.target_rank + p.oversampling > dim) {
        p.oversampling = dim - p.target_rank;
    }
    return p;
}

// Range finder: Q spans X*Omega, refined by n_pwr_it rounds of
// Q <- orth(X * orth(X^T Q)), re-orthonormalizing every half-step.
inline DenseMatrix randomized_range(const DenseMatrix& x, std::size_t width,
                                    std::size_t power_iters, RngState& rng) {
    DenseMatrix omega = sample_gaussian(rng, x.cols(), width);
    DenseMatrix q = qr_thin(matmul(x, omega)).q;
    for (std::size_t t = 0; t < power_iters; ++t) {
        DenseMatrix z = qr_thin(matmul_at_b(x, q)).q;
        q = qr_thin(matmul(x, z)).q;
    }
    return q;
}

}  // namespace detail

/// Randomized SVD: sketch the range of X, decompose the small core
/// B = Q^T X through the SVD of B^T, slice to the target rank.
inline SvdResult rsvd(const DenseMatrix& x, const SketchParams& params, RngState& rng) {
    const std::size_t dim = std::min(x.rows(), x.cols());
    const SketchParams p = detail::clamp_sketch(params, dim);
    const std::size_t width = p.target_rank + p.oversampling;
    const std::size_t r = p.target_rank;

    DenseMatrix q = detail::randomized_range(x, width, p.power_iters, rng);
    DenseMatrix b = matmul_at_b(q, x);  // width x n

    // SVD of B^T: B^T = Ub S Vb^T, so B = Vb S Ub^T.
    SvdResult core = svd_small(transpose(b));
    DenseMatrix u_x = matmul(q, first_cols(core.v, r));
    std::vector<double> s(core.s.begin(), core.s.begin() + r);
    DenseMatrix v_x = first_cols(core.u, r);
    return {std::move(u_x), std::move(s), std::move(v_x)};
}

/// RSVD specialization for square symmetric PSD input: keep the V-side
/// basis, whose projection error is near zero.
inline LowRankEig rsvd_psd(const DenseMatrix& x, const SketchParams& params,
                           RngState& rng) {
    SvdResult r = rsvd(x, params, rng);
    return {std::move(r.v), std::move(r.s), DecompMethod::RSVD};
}

/// Symmetric randomized EVD: project both sides onto the sketch range
/// (C = Q^T X Q), eigendecompose the small core. Cheaper than rsvd_psd
/// by a constant factor, at the price of projection error.
inline LowRankEig srevd(const DenseMatrix& x, const SketchParams& params,
                        RngState& rng) {
    const SketchParams p = detail::clamp_sketch(params, x.rows());
    const std::size_t width = p.target_rank + p.oversampling;
    const std::size_t r = p.target_rank;

    DenseMatrix q = detail::randomized_range(x, width, p.power_iters, rng);
    DenseMatrix c = matmul_at_b(q, matmul(x, q));
    symmetrize_in_place(c);
    SymEigResult eig = sym_eig(c);

    DenseMatrix u = matmul(q, first_cols(eig.p, r));
    std::vector<double> d(eig.d.begin(), eig.d.begin() + r);
    for (double& v : d) v = std::max(0.0, v);  // round-off negatives
    return {std::move(u), std::move(d), DecompMethod::SREVD};
}

/// U diag(d) U^T for a LowRankEig (test/diagnostic helper).
inline DenseMatrix lowrank_reconstruct(const LowRankEig& lr) {
    return matmul_a_bt(scale_cols(lr.u, lr.d), lr.u);
}

}  // namespace rkfac

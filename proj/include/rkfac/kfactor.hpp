#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "rkfac/eig.hpp"
#include "rkfac/errors.hpp"
#include "rkfac/matrix.hpp"
#include "rkfac/rnla.hpp"
#include "rkfac/rng.hpp"

namespace rkfac {

/// Exponential-average Kronecker factor: Mbar <- rho*Mbar + (1-rho)*M M^T.
struct EAKFactor {
    DenseMatrix mbar;
    double rho = 0.95;
    std::size_t steps = 0;

    EAKFactor() = default;

    /// Identity initialization (the optimizer default); zero_init is used
    /// by the closed-form EA oracle tests.
    EAKFactor(std::size_t dim, double rho_, bool zero_init = false)
        : mbar(zero_init ? DenseMatrix(dim, dim) : DenseMatrix::identity(dim)),
          rho(rho_) {}

    std::size_t dim() const { return mbar.rows(); }
};

inline void ea_update(EAKFactor& f, const DenseMatrix& m) {
    if (m.rows() != f.dim())
        throw DimensionMismatch("ea_update: update row count != factor dimension");
    DenseMatrix outer = matmul_a_bt(m, m);
    for (std::size_t i = 0; i < f.mbar.size(); ++i)
        f.mbar.data()[i] = f.rho * f.mbar.data()[i] + (1.0 - f.rho) * outer.data()[i];
    symmetrize_in_place(f.mbar);  // keep asymmetry from drifting across updates
    ++f.steps;
}

struct SpectrumReport {
    std::vector<double> eigenvalues;  // decreasing, clamped at 0
    double lambda_max = 0.0;

    std::size_t count_above(double epsilon) const {
        const double threshold = epsilon * lambda_max;
        std::size_t c = 0;
        for (double v : eigenvalues)
            if (v >= threshold) ++c;
        return c;
    }
};

inline SpectrumReport spectrum(const EAKFactor& f) {
    SymEigResult eig = sym_eig(f.mbar);
    SpectrumReport rep;
    rep.eigenvalues.reserve(eig.d.size());
    for (double v : eig.d) rep.eigenvalues.push_back(std::max(0.0, v));
    rep.lambda_max = rep.eigenvalues.empty() ? 0.0 : rep.eigenvalues.front();
    return rep;
}

/// Inputs for the spectrum-decay bound: with sigma_max(M_i) <= sigma_M and
/// lambda_max >= alpha*sigma_M^2, at most min(r_eps*n_M, d_M) eigenvalues
/// of the EA factor exceed epsilon*lambda_max.
struct Prop31Inputs {
    double epsilon = 0.03;  // in (0,1)
    double alpha = 0.1;     // in (0,1)
    double rho = 0.95;      // in (0,1)
    std::size_t n_m = 256;  // columns per update, ~ batch size
    std::size_t d_m = 1;    // factor dimension
};

struct Prop31Result {
    std::size_t r_eps = 0;
    std::size_t mode_bound = 0;
};

inline Prop31Result prop31_r_epsilon(const Prop31Inputs& p) {
    const double ratio = std::log(p.alpha * p.epsilon) / std::log(p.rho);
    // Nudge guards the exact-integer boundary (alpha*epsilon == rho^k).
    const auto r_eps = static_cast<std::size_t>(std::ceil(ratio - 1e-9));
    return {r_eps, std::min(r_eps * p.n_m, p.d_m)};
}

struct Prop31CheckReport {
    std::size_t trials = 0;
    std::size_t assumption_satisfied = 0;
    std::size_t violations = 0;
    std::size_t r_eps = 0;
    std::size_t mode_bound = 0;
};

/// Empirical verification of the decay bound: build EA factors from
/// rescaled Gaussian updates (sigma_max(M_i) = sigma_M exactly) and check
/// count_above(epsilon) <= mode_bound whenever lambda_max >= alpha*sigma_M^2.
inline Prop31CheckReport prop31_empirical_check(const Prop31Inputs& p,
                                                std::size_t trials, RngState& rng) {
    const Prop31Result bound = prop31_r_epsilon(p);
    const double sigma_m = 1.0;
    const std::size_t updates = 3 * std::max<std::size_t>(1, bound.r_eps);

    Prop31CheckReport rep;
    rep.trials = trials;
    rep.r_eps = bound.r_eps;
    rep.mode_bound = bound.mode_bound;

    for (std::size_t t = 0; t < trials; ++t) {
        EAKFactor f(p.d_m, p.rho);
        for (std::size_t k = 0; k < updates; ++k) {
            DenseMatrix m = sample_gaussian(rng, p.d_m, p.n_m);
            const SvdResult sv = svd_small(m);
            const double smax = sv.s.empty() ? 0.0 : sv.s[0];
            if (smax > 0.0) m = scale(m, sigma_m / smax);
            ea_update(f, m);
        }
        const SpectrumReport spec = spectrum(f);
        if (spec.lambda_max >= p.alpha * sigma_m * sigma_m) {
            ++rep.assumption_satisfied;
            if (spec.count_above(p.epsilon) > bound.mode_bound) ++rep.violations;
        }
    }
    return rep;
}

enum class ApplySide { LEFT, RIGHT };

/// Damped low-rank inverse application:
///   LEFT:  (U D U^T + lambda I)^{-1} V = U[(D+lambda I)^{-1} - I/lambda]U^T V + V/lambda
///   RIGHT: V (U D U^T + lambda I)^{-1}, the transpose-dual form.
/// Never forms the dense d x d inverse.
inline DenseMatrix apply_lowrank_damped_inverse(const LowRankEig& lr, double lambda,
                                                const DenseMatrix& v, ApplySide side) {
    if (lambda <= 0.0)
        throw DampingNonpositive("apply_lowrank_damped_inverse: lambda must be > 0");
    const std::size_t d = lr.dim();

    std::vector<double> bracket(lr.rank());
    for (std::size_t i = 0; i < lr.rank(); ++i)
        bracket[i] = 1.0 / (lr.d[i] + lambda) - 1.0 / lambda;

    if (side == ApplySide::LEFT) {
        if (v.rows() != d)
            throw DimensionMismatch("apply_lowrank_damped_inverse: rows(V) != dim");
        DenseMatrix w = matmul_at_b(lr.u, v);  // r x cols
        w = scale_rows(w, bracket);
        DenseMatrix out = matmul(lr.u, w);
        for (std::size_t i = 0; i < out.size(); ++i)
            out.data()[i] += v.data()[i] / lambda;
        return out;
    }
    if (v.cols() != d)
        throw DimensionMismatch("apply_lowrank_damped_inverse: cols(V) != dim");
    DenseMatrix w = matmul(v, lr.u);  // rows x r
    w = scale_cols(w, bracket);
    DenseMatrix out = matmul_a_bt(w, lr.u);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += v.data()[i] / lambda;
    return out;
}

/// Exact damped inverse application through a full eigendecomposition:
///   LEFT:  U (D+lambda I)^{-1} U^T V,   RIGHT: V U (D+lambda I)^{-1} U^T.
inline DenseMatrix apply_eig_damped_inverse(const DenseMatrix& u,
                                            const std::vector<double>& d, double lambda,
                                            const DenseMatrix& v, ApplySide side) {
    if (lambda <= 0.0)
        throw DampingNonpositive("apply_eig_damped_inverse: lambda must be > 0");
    std::vector<double> inv(d.size());
    for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / (d[i] + lambda);

    if (side == ApplySide::LEFT) {
        DenseMatrix w = matmul_at_b(u, v);
        w = scale_rows(w, inv);
        return matmul(u, w);
    }
    DenseMatrix w = matmul(v, u);
    w = scale_cols(w, inv);
    return matmul_a_bt(w, u);
}

inline DenseMatrix apply_eig_damped_inverse(const SymEigResult& eig, double lambda,
                                            const DenseMatrix& v, ApplySide side) {
    return apply_eig_damped_inverse(eig.p, eig.d, lambda, v, side);
}

}  // namespace rkfac

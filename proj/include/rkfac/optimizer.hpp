#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "rkfac/errors.hpp"
#include "rkfac/kfactor.hpp"
#include "rkfac/network.hpp"
#include "rkfac/rnla.hpp"
#include "rkfac/rng.hpp"

namespace rkfac {

enum class Method { KFAC, RS_KFAC, SRE_KFAC };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::KFAC: return "kfac";
        case Method::RS_KFAC: return "rs-kfac";
        case Method::SRE_KFAC: return "sre-kfac";
    }
    return "?";
}

/// Epoch-scheduled hyperparameters. Defaults follow the indicator-function
/// schedules used for all three step rules; any field can be pinned to a
/// constant through the overrides.
struct ScheduleOverrides {
    std::optional<double> lambda;
    std::optional<double> alpha;
    std::optional<std::size_t> target_rank;
    std::optional<std::size_t> oversampling;
    std::optional<std::size_t> t_ki;
};

struct OptimizerConfig {
    Method method = Method::KFAC;
    double rho = 0.95;
    std::size_t t_ku = 10;       // factor-update period
    std::size_t n_pwr_it = 4;    // sketch power iterations
    std::size_t n_bs = 256;      // batch size
    double weight_decay = 7e-4;  // decoupled, applied on parameters
    ScheduleOverrides overrides;

    void validate() const {
        if (t_ku < 1) throw ConfigError("OptimizerConfig: T_KU must be >= 1");
        if (rho <= 0.0 || rho >= 1.0)
            throw ConfigError("OptimizerConfig: rho must be in (0,1)");
    }
};

struct ResolvedSchedule {
    double alpha = 0.3;
    double lambda = 0.1;
    std::size_t target_rank = 220;
    std::size_t oversampling = 10;
    std::size_t t_ki = 50;
};

namespace detail {
inline double ind(std::size_t epoch, std::size_t at) { return epoch >= at ? 1.0 : 0.0; }
}  // namespace detail

inline ResolvedSchedule run_schedules(const OptimizerConfig& cfg, std::size_t epoch) {
    using detail::ind;
    ResolvedSchedule s;
    s.t_ki = cfg.overrides.t_ki
                 ? *cfg.overrides.t_ki
                 : static_cast<std::size_t>(50 - 20 * ind(epoch, 20));
    s.lambda = cfg.overrides.lambda
                   ? *cfg.overrides.lambda
                   : 0.1 - 0.05 * ind(epoch, 25) - 0.04 * ind(epoch, 35);
    s.alpha = cfg.overrides.alpha
                  ? *cfg.overrides.alpha
                  : 0.3 - 0.1 * ind(epoch, 2) - 0.1 * ind(epoch, 3) -
                        0.07 * ind(epoch, 13) - 0.02 * ind(epoch, 18) -
                        0.007 * ind(epoch, 27) - 0.002 * ind(epoch, 40);
    s.target_rank = cfg.overrides.target_rank
                        ? *cfg.overrides.target_rank
                        : static_cast<std::size_t>(220 + 10 * ind(epoch, 15));
    s.oversampling = cfg.overrides.oversampling
                         ? *cfg.overrides.oversampling
                         : static_cast<std::size_t>(10 + ind(epoch, 22) + ind(epoch, 30));
    if (s.t_ki < cfg.t_ku) throw ConfigError("schedule: T_KI must be >= T_KU");
    if (s.lambda <= 0.0) throw ConfigError("schedule: lambda must be > 0");
    return s;
}

struct StepTimings {
    double factor_update = 0.0;  // filled by the training loop
    double decomposition = 0.0;
    double inverse_apply = 0.0;
};

struct StepResult {
    std::vector<DenseMatrix> updates;  // per-layer S^(l), shaped like W^(l)
    StepTimings timings;

    std::vector<double> flattened() const {
        std::vector<double> s;
        for (const DenseMatrix& m : updates)
            s.insert(s.end(), m.data(), m.data() + m.size());
        return s;
    }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline bool needs_recompute(const std::optional<LowRankEig>& cached, std::size_t step,
                            std::size_t t_ki, DecompMethod want) {
    return !cached || cached->method != want || step % t_ki == 0;
}

inline LowRankEig exact_decomp(const EAKFactor& f) {
    SymEigResult eig = sym_eig(f.mbar);
    return {std::move(eig.p), std::move(eig.d), DecompMethod::EXACT};
}

inline DenseMatrix apply_damped_inverse(const LowRankEig& lr, double lambda,
                                        const DenseMatrix& v, ApplySide side) {
    if (lr.method == DecompMethod::EXACT)
        return apply_eig_damped_inverse(lr.u, lr.d, lambda, v, side);
    return apply_lowrank_damped_inverse(lr, lambda, v, side);
}

// Shared skeleton of the three step rules: refresh cached per-layer
// decompositions on the T_KI schedule, then precondition each gradient by
// applying the damped inverse of the A-factor from the right and of the
// Gamma-factor from the left.
template <typename DecompFn>
StepResult preconditioned_step(Mlp& net, const std::vector<DenseMatrix>& gradients,
                               const ResolvedSchedule& sch, std::size_t step,
                               DecompMethod want, DecompFn make_decomp) {
    if (gradients.size() != net.n_layers())
        throw DimensionMismatch("step: gradient count != layer count");

    StepResult result;
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        LayerState& layer = net.layers()[l];

        if (needs_recompute(layer.cached_a_decomp, step, sch.t_ki, want) ||
            needs_recompute(layer.cached_g_decomp, step, sch.t_ki, want)) {
            const auto t0 = Clock::now();
            layer.cached_a_decomp = make_decomp(layer.a_factor, l, 0);
            layer.cached_g_decomp = make_decomp(layer.g_factor, l, 1);
            result.timings.decomposition += seconds_since(t0);
        }

        const auto t0 = Clock::now();
        DenseMatrix m = apply_damped_inverse(*layer.cached_a_decomp, sch.lambda,
                                             gradients[l], ApplySide::RIGHT);
        DenseMatrix s = apply_damped_inverse(*layer.cached_g_decomp, sch.lambda, m,
                                             ApplySide::LEFT);
        result.timings.inverse_apply += seconds_since(t0);
        result.updates.push_back(std::move(s));
    }
    return result;
}

}  // namespace detail

/// Exact K-FAC step: full eigendecompositions cached per T_KI, damped
/// inverses applied through the cached eigenbases every step.
inline StepResult kfac_step(Mlp& net, const std::vector<DenseMatrix>& gradients,
                            const ResolvedSchedule& sch, std::size_t step) {
    return detail::preconditioned_step(
        net, gradients, sch, step, DecompMethod::EXACT,
        [](const EAKFactor& f, std::size_t, int) { return detail::exact_decomp(f); });
}

/// RS-KFAC step: rank-r RSVD (V-side basis) of each factor on the T_KI
/// schedule, damped inverses via the low-rank identity.
inline StepResult rs_kfac_step(Mlp& net, const std::vector<DenseMatrix>& gradients,
                               const OptimizerConfig& cfg, const ResolvedSchedule& sch,
                               std::size_t step, const RngState& rng) {
    const SketchParams sk{sch.target_rank, sch.oversampling, cfg.n_pwr_it};
    return detail::preconditioned_step(
        net, gradients, sch, step, DecompMethod::RSVD,
        [&](const EAKFactor& f, std::size_t l, int which) {
            RngState sub = rng.substream(step, 2 * l + which);
            return rsvd_psd(f.mbar, sk, sub);
        });
}

/// SRE-KFAC step: as rs_kfac_step with SREVD decompositions (U basis).
inline StepResult sre_kfac_step(Mlp& net, const std::vector<DenseMatrix>& gradients,
                                const OptimizerConfig& cfg, const ResolvedSchedule& sch,
                                std::size_t step, const RngState& rng) {
    const SketchParams sk{sch.target_rank, sch.oversampling, cfg.n_pwr_it};
    return detail::preconditioned_step(
        net, gradients, sch, step, DecompMethod::SREVD,
        [&](const EAKFactor& f, std::size_t l, int which) {
            RngState sub = rng.substream(step, 2 * l + which);
            return srevd(f.mbar, sk, sub);
        });
}

inline StepResult optimizer_step(Mlp& net, const std::vector<DenseMatrix>& gradients,
                                 const OptimizerConfig& cfg, const ResolvedSchedule& sch,
                                 std::size_t step, const RngState& rng) {
    switch (cfg.method) {
        case Method::KFAC: return kfac_step(net, gradients, sch, step);
        case Method::RS_KFAC: return rs_kfac_step(net, gradients, cfg, sch, step, rng);
        case Method::SRE_KFAC: return sre_kfac_step(net, gradients, cfg, sch, step, rng);
    }
    throw ConfigError("optimizer_step: unknown method");
}

}  // namespace rkfac

// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Each check is self-contained and uses independent oracles where
// the expected value is not a hand-derived constant.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "rkfac/harness.hpp"
#include "test_util.hpp"

using namespace rkfac;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail, double elapsed) {
    std::printf("[%s] criterion %d: %s (%.2fs)\n", pass ? "PASS" : "FAIL", criterion,
                detail.c_str(), elapsed);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string out_dir(const std::string& tag) {
    namespace fs = std::filesystem;
    fs::path p = fs::temp_directory_path() / ("rkfac_acceptance_" + tag);
    fs::create_directories(p);
    return p.string();
}

// 1. Spectrum-bound arithmetic reproduces the worked numbers exactly.
void criterion1() {
    const auto t0 = Clock::now();
    Prop31Result a = prop31_r_epsilon({0.03, 0.1, 0.95, 256, 1000000});
    Prop31Result b = prop31_r_epsilon({0.03, 0.1, 0.5, 256, 1000000});
    const double elapsed = seconds_since(t0);
    const bool pass =
        a.r_eps == 114 && a.mode_bound == 29184 && b.mode_bound == 2304 &&
        elapsed < 1e-3;
    report(1, pass,
           "mode bounds " + std::to_string(a.mode_bound) + "/" +
               std::to_string(b.mode_bound) + " (want 29184/2304)",
           elapsed);
}

// 2. Empirical spectrum-bound check: zero violations over 50 trials.
void criterion2() {
    const auto t0 = Clock::now();
    Prop31Inputs p{0.1, 0.5, 0.5, 4, 64};
    RngState rng(2024);
    Prop31CheckReport rep = prop31_empirical_check(p, 50, rng);
    const double elapsed = seconds_since(t0);
    const bool pass = rep.violations == 0 && rep.assumption_satisfied > 0 &&
                      elapsed < 30.0;
    report(2, pass,
           std::to_string(rep.violations) + " violations / " +
               std::to_string(rep.assumption_satisfied) + " qualifying trials",
           elapsed);
}

// 3. Low-rank damped inverse identity vs a dense LU-solve oracle.
void criterion3() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    int instances = 0;
    for (double lambda : {1e-3, 0.1, 1.0, 10.0}) {
        for (std::uint64_t seed = 0; seed < 25; ++seed, ++instances) {
            RngState rng(seed * 4 + static_cast<std::uint64_t>(lambda * 1000));
            DenseMatrix basis = qr_thin(sample_gaussian(rng, 20, 5)).q;
            std::vector<double> d(5);
            for (double& v : d) v = rng.next_uniform() * 3.0;
            std::sort(d.rbegin(), d.rend());
            LowRankEig lr{basis, d, DecompMethod::RSVD};
            DenseMatrix v = sample_gaussian(rng, 20, 6);

            DenseMatrix oracle = test_util::damped_lowrank_solve(basis, d, lambda, v);
            DenseMatrix fast =
                apply_lowrank_damped_inverse(lr, lambda, v, ApplySide::LEFT);
            worst = std::max(worst, max_abs_diff(fast, oracle));
        }
    }
    const double elapsed = seconds_since(t0);
    report(3, worst <= 1e-10 && instances == 100 && elapsed < 10.0,
           "max-entry error " + detail::fmt(worst) + " over 100 instances", elapsed);
}

// 4 + 5. Randomized decomposition quality and rsvd-vs-srevd ordering on the
// shared 512x512 geometric-spectrum ensemble.
void criteria4and5() {
    const auto t0 = Clock::now();
    const auto eigs = test_util::geometric_spectrum(512);
    const DenseMatrix x = test_util::psd_with_spectrum(eigs, 512);
    const double optimal = test_util::truncation_error(eigs, 50);
    const SketchParams sk{50, 10, 4};

    std::size_t good = 0;
    double sum_rsvd = 0.0, sum_srevd = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RngState r1(seed), r2(seed);
        const double e_rsvd =
            frobenius_norm(subtract(x, lowrank_reconstruct(rsvd_psd(x, sk, r1))));
        const double e_srevd =
            frobenius_norm(subtract(x, lowrank_reconstruct(srevd(x, sk, r2))));
        if (e_rsvd <= 1.05 * optimal) ++good;
        sum_rsvd += e_rsvd;
        sum_srevd += e_srevd;
    }
    const double elapsed = seconds_since(t0);
    report(4, good >= 19 && elapsed < 60.0,
           std::to_string(good) + "/20 seeds within 1.05x optimal error", elapsed);
    report(5, sum_rsvd <= sum_srevd,
           "mean error rsvd " + detail::fmt(sum_rsvd / 20.0) + " <= srevd " +
               detail::fmt(sum_srevd / 20.0),
           elapsed);
}

// 6. Full-width sketches make the randomized step identical to the exact one.
void criterion6() {
    const auto t0 = Clock::now();
    RngState rng(66);
    Mlp net(6, {8, 7}, 4, 0.95, rng);  // 3 layers, max factor dim 9

    OptimizerConfig cfg;
    cfg.method = Method::RS_KFAC;
    ResolvedSchedule sch;
    sch.lambda = 0.1;
    sch.target_rank = 16;  // > every factor dimension: clamps to full rank
    sch.oversampling = 8;
    sch.t_ki = 1;  // recompute every step

    bool pass = true;
    double worst_rel = 0.0;
    for (std::size_t step = 0; step < 10; ++step) {
        // Evolve the factors with a real batch so each step sees new ones.
        Batch b;
        b.x = sample_gaussian(rng, 6, 16);
        b.y.resize(16);
        for (auto& y : b.y) y = static_cast<int>(rng.next_u64() % 4);
        ForwardResult fwd = net.forward(b);
        BackwardResult bwd = net.backward(b);
        net.accumulate_factors(fwd.a_matrices, bwd.g_matrices);

        StepResult exact = kfac_step(net, bwd.gradients, sch, step);
        for (LayerState& l : net.layers()) {
            l.cached_a_decomp.reset();
            l.cached_g_decomp.reset();
        }
        RngState step_rng(step + 1);
        StepResult rs = rs_kfac_step(net, bwd.gradients, cfg, sch, step, step_rng);

        for (std::size_t l = 0; l < net.n_layers(); ++l) {
            const DenseMatrix& a = rs.updates[l];
            const DenseMatrix& b2 = exact.updates[l];
            const double floor = 1e-9 * max_abs(b2);
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double rel = std::abs(a.data()[i] - b2.data()[i]) /
                                   (std::abs(b2.data()[i]) + floor);
                worst_rel = std::max(worst_rel, rel);
            }
        }
        for (LayerState& l : net.layers()) {
            l.cached_a_decomp.reset();
            l.cached_g_decomp.reset();
        }
    }
    pass = worst_rel <= 1e-6;
    report(6, pass, "worst relative entry gap " + detail::fmt(worst_rel),
           seconds_since(t0));
}

// 7. Analytic gradients vs central finite differences, 100 clean draws.
void criterion7() {
    const auto t0 = Clock::now();
    const double h = 1e-6;
    std::size_t draws = 0, checked = 0;
    std::uint64_t seed = 0;
    double worst = 0.0;
    bool pass = true;
    while (draws < 100 && seed < 1000) {
        RngState rng(seed++);
        Mlp net(4, {6, 5}, 3, 0.95, rng);
        Batch b;
        b.x = sample_gaussian(rng, 4, 8);
        b.y.resize(8);
        for (auto& y : b.y) y = static_cast<int>(rng.next_u64() % 3);
        net.forward(b);
        if (net.min_abs_preactivation() < 1e-4) continue;  // ReLU kink: resample
        ++draws;
        BackwardResult br = net.backward(b);

        for (int k = 0; k < 3; ++k) {
            const std::size_t l = rng.next_u64() % net.n_layers();
            DenseMatrix& w = net.layers()[l].w;
            const std::size_t idx = rng.next_u64() % w.size();
            const double orig = w.data()[idx];
            w.data()[idx] = orig + h;
            const double lp = net.forward(b).loss;
            w.data()[idx] = orig - h;
            const double lm = net.forward(b).loss;
            w.data()[idx] = orig;
            net.forward(b);

            const double fd = (lp - lm) / (2.0 * h);
            const double an = br.gradients[l].data()[idx];
            const double err = std::abs(fd - an);
            worst = std::max(worst, err);
            if (err > std::max(1e-7, 1e-5 * std::abs(an))) pass = false;
            ++checked;
        }
    }
    pass = pass && draws == 100;
    report(7, pass,
           std::to_string(draws) + " draws, " + std::to_string(checked) +
               " coordinates, worst abs gap " + detail::fmt(worst),
           seconds_since(t0));
}

// 8. Inverse-path scaling: exact slope >= 2.5, randomized <= 2.4, randomized
// strictly faster at the largest dimension.
void criterion8() {
    const auto t0 = Clock::now();
    ExperimentConfig cfg;
    cfg.seed = 8;
    cfg.out_dir = out_dir("bench");
    BenchResult res = cmd_bench_inverse(cfg);
    const double elapsed = seconds_since(t0);

    const double s_exact = res.slopes.at("exact");
    const double s_rsvd = res.slopes.at("rsvd");
    const double s_srevd = res.slopes.at("srevd");
    const double t_exact = res.medians.at("exact").at(2048);
    const double t_rsvd = res.medians.at("rsvd").at(2048);
    const double t_srevd = res.medians.at("srevd").at(2048);

    const bool pass = s_exact >= 2.5 && s_rsvd <= 2.4 && s_srevd <= 2.4 &&
                      t_rsvd < t_exact && t_srevd < t_exact && elapsed < 600.0;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "slopes exact=%.2f rsvd=%.2f srevd=%.2f; d=2048 medians "
                  "exact=%.2fs rsvd=%.2fs srevd=%.2fs",
                  s_exact, s_rsvd, s_srevd, t_exact, t_rsvd, t_srevd);
    report(8, pass, buf, elapsed);
}

// 9. End-to-end direction: randomized epochs are cheaper and both methods
// solve the separable task.
void criterion9() {
    const auto t0 = Clock::now();
    ExperimentConfig cfg;
    cfg.seed = 9;
    cfg.out_dir = out_dir("compare");
    cfg.hidden = {1024, 1024};
    cfg.dataset.n_samples = 2048;
    cfg.dataset.n_test = 512;
    cfg.epochs = 5;
    cfg.compare_seeds = 3;
    cfg.compare_methods = {Method::KFAC, Method::RS_KFAC};
    cfg.targets = {0.95};
    CompareResult res = cmd_compare(cfg);
    const double elapsed = seconds_since(t0);

    double t_kfac = 0.0, t_rs = 0.0;
    std::size_t hits_kfac = 0, hits_rs = 0, runs = 0;
    for (const CompareRow& r : res.rows) {
        if (r.method == Method::KFAC) {
            t_kfac = r.t_epoch.mean;
            hits_kfac = r.hits;
            runs = r.runs;
        } else if (r.method == Method::RS_KFAC) {
            t_rs = r.t_epoch.mean;
            hits_rs = r.hits;
        }
    }
    const bool pass = t_rs < t_kfac && hits_kfac == runs && hits_rs == runs;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "mean t_epoch rs-kfac=%.2fs < kfac=%.2fs; 95%% accuracy hits "
                  "%zu/%zu and %zu/%zu",
                  t_rs, t_kfac, hits_rs, runs, hits_kfac, runs);
    report(9, pass, buf, elapsed);
}

// 10. Spectrum decay of hidden-layer forward factors after >= 500 steps.
void criterion10() {
    const auto t0 = Clock::now();
    ExperimentConfig cfg;
    cfg.seed = 10;
    cfg.out_dir = out_dir("spectrum");
    cfg.hidden = {256, 256};
    cfg.epochs = 32;  // 4096/256 = 16 steps per epoch -> 512 steps
    cfg.snapshots = true;
    cfg.cadence.every_late = 100;  // final snapshot at step 500
    SpectrumResult res = cmd_spectrum(cfg);
    const double elapsed = seconds_since(t0);

    std::size_t last_step = 0;
    for (const auto& s : res.log.snapshots) last_step = std::max(last_step, s.step);

    bool pass = last_step >= 500 && res.layers.size() == 3;
    std::string detail_str = "final decay orders:";
    // Layer 0 sees raw inputs; hidden-layer forward factors are layers 1+.
    for (std::size_t l = 1; l < res.layers.size(); ++l) {
        detail_str += " L" + std::to_string(l) + "=" +
                      detail::fmt(res.layers[l].final_decay_orders);
        if (res.layers[l].final_decay_orders < 1.0) pass = false;
    }
    detail_str += " at step " + std::to_string(last_step);
    report(10, pass, detail_str, elapsed);
}

}  // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();
    criteria4and5();
    criterion6();
    criterion7();
    criterion8();
    criterion9();
    criterion10();
    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all 10 criteria passed\n");
    return 0;
}

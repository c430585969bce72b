#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "rkfac/dataset.hpp"
#include "rkfac/errors.hpp"
#include "rkfac/kfactor.hpp"
#include "rkfac/network.hpp"
#include "rkfac/optimizer.hpp"

namespace rkfac {

struct SpectrumCadence {
    std::size_t every_early = 30;
    std::size_t early_until = 300;
    std::size_t every_late = 300;

    bool hits(std::size_t step) const {
        if (step < early_until) return step % every_early == 0;
        return step % every_late == 0;
    }
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    DatasetSpec dataset;
    std::vector<std::size_t> hidden = {512, 512};
    OptimizerConfig opt;
    std::size_t epochs = 5;
    bool snapshots = false;
    SpectrumCadence cadence;

    // compare
    std::vector<Method> compare_methods = {Method::KFAC, Method::RS_KFAC};
    std::vector<double> targets = {0.9};
    std::size_t compare_seeds = 3;

    // bench-inverse
    std::vector<std::size_t> bench_dims = {256, 512, 1024, 2048};
    std::size_t bench_reps = 5;

    // prop31
    Prop31Inputs prop31;
    std::size_t prop31_trials = 0;
};

struct StepRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double loss = 0.0;
    double acc = -1.0;  // test accuracy, filled on the last step of each epoch
    StepTimings timings;
};

struct SpectrumSnapshot {
    std::size_t step = 0;
    std::size_t layer = 0;
    std::vector<double> eigenvalues;  // forward-factor spectrum, decreasing
};

struct RunLog {
    std::vector<StepRecord> steps;
    std::vector<SpectrumSnapshot> snapshots;
    std::vector<double> epoch_seconds;
    std::vector<double> epoch_accuracy;
};

inline Method parse_method(const std::string& s) {
    if (s == "kfac") return Method::KFAC;
    if (s == "rs-kfac") return Method::RS_KFAC;
    if (s == "sre-kfac") return Method::SRE_KFAC;
    throw ConfigError("unknown method: " + s);
}

// ---------------------------------------------------------------------------
// config file (JSON); unspecified fields keep the defaults above
// ---------------------------------------------------------------------------

inline ExperimentConfig parse_config_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out", cfg.out_dir);
    if (j.contains("method")) cfg.opt.method = parse_method(j.at("method"));

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        cfg.dataset.n_classes = d.value("n_classes", cfg.dataset.n_classes);
        cfg.dataset.d_in = d.value("d_in", cfg.dataset.d_in);
        cfg.dataset.n_samples = d.value("n_samples", cfg.dataset.n_samples);
        cfg.dataset.n_test = d.value("n_test", cfg.dataset.n_test);
        cfg.dataset.spread = d.value("spread", cfg.dataset.spread);
        cfg.dataset.separation = d.value("separation", cfg.dataset.separation);
        cfg.dataset.csv_path = d.value("csv_path", cfg.dataset.csv_path);
    }
    if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        cfg.opt.rho = o.value("rho", cfg.opt.rho);
        cfg.opt.t_ku = o.value("t_ku", cfg.opt.t_ku);
        cfg.opt.n_pwr_it = o.value("n_pwr_it", cfg.opt.n_pwr_it);
        cfg.opt.n_bs = o.value("n_bs", cfg.opt.n_bs);
        cfg.opt.weight_decay = o.value("weight_decay", cfg.opt.weight_decay);
        if (o.contains("lambda")) cfg.opt.overrides.lambda = o.at("lambda").get<double>();
        if (o.contains("alpha")) cfg.opt.overrides.alpha = o.at("alpha").get<double>();
        if (o.contains("r"))
            cfg.opt.overrides.target_rank = o.at("r").get<std::size_t>();
        if (o.contains("r_l"))
            cfg.opt.overrides.oversampling = o.at("r_l").get<std::size_t>();
        if (o.contains("t_ki")) cfg.opt.overrides.t_ki = o.at("t_ki").get<std::size_t>();
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        cfg.epochs = t.value("epochs", cfg.epochs);
        cfg.snapshots = t.value("snapshots", cfg.snapshots);
    }
    if (j.contains("compare")) {
        const auto& c = j.at("compare");
        if (c.contains("methods")) {
            cfg.compare_methods.clear();
            for (const auto& m : c.at("methods"))
                cfg.compare_methods.push_back(parse_method(m));
        }
        if (c.contains("targets"))
            cfg.targets = c.at("targets").get<std::vector<double>>();
        cfg.compare_seeds = c.value("seeds", cfg.compare_seeds);
    }
    if (j.contains("bench")) {
        const auto& b = j.at("bench");
        if (b.contains("dims"))
            cfg.bench_dims = b.at("dims").get<std::vector<std::size_t>>();
        cfg.bench_reps = b.value("reps", cfg.bench_reps);
    }
    if (j.contains("prop31")) {
        const auto& p = j.at("prop31");
        cfg.prop31.epsilon = p.value("epsilon", cfg.prop31.epsilon);
        cfg.prop31.alpha = p.value("alpha", cfg.prop31.alpha);
        cfg.prop31.rho = p.value("rho", cfg.prop31.rho);
        cfg.prop31.n_m = p.value("n_m", cfg.prop31.n_m);
        cfg.prop31.d_m = p.value("d_m", cfg.prop31.d_m);
        cfg.prop31_trials = p.value("trials", cfg.prop31_trials);
    }
    cfg.opt.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    return parse_config_json(j);
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

inline RunLog train_run(const ExperimentConfig& cfg, std::uint64_t seed, Method method) {
    using Clock = std::chrono::steady_clock;

    OptimizerConfig opt = cfg.opt;
    opt.method = method;

    Dataset ds = make_dataset(cfg.dataset, seed);
    RngState init_rng = RngState(seed).substream(0x1717);
    Mlp net(cfg.dataset.d_in, cfg.hidden, cfg.dataset.n_classes, opt.rho, init_rng);
    const RngState step_rng(seed);

    const std::size_t n_bs = std::min<std::size_t>(opt.n_bs, ds.train.y.size());
    const std::size_t steps_per_epoch = std::max<std::size_t>(1, ds.train.y.size() / n_bs);

    RunLog log;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const ResolvedSchedule sch = run_schedules(opt, epoch);
        const auto epoch_t0 = Clock::now();

        for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
            const Batch batch = slice_batch(ds.train, b * n_bs, n_bs);

            ForwardResult fwd = net.forward(batch);
            BackwardResult bwd = net.backward(batch);

            StepTimings timings;
            if (step % opt.t_ku == 0) {
                const auto t0 = Clock::now();
                net.accumulate_factors(fwd.a_matrices, bwd.g_matrices);
                timings.factor_update = std::chrono::duration<double>(Clock::now() - t0).count();
            }

            StepResult res = optimizer_step(net, bwd.gradients, opt, sch, step, step_rng);
            timings.decomposition = res.timings.decomposition;
            timings.inverse_apply = res.timings.inverse_apply;

            // theta <- theta - alpha (S + wd * theta), decoupled weight decay
            for (std::size_t l = 0; l < net.n_layers(); ++l) {
                DenseMatrix& w = net.layers()[l].w;
                const DenseMatrix& s = res.updates[l];
                for (std::size_t i = 0; i < w.size(); ++i)
                    w.data()[i] -= sch.alpha *
                                   (s.data()[i] + opt.weight_decay * w.data()[i]);
            }

            if (cfg.snapshots && cfg.cadence.hits(step)) {
                for (std::size_t l = 0; l < net.n_layers(); ++l) {
                    SpectrumReport rep = spectrum(net.layers()[l].a_factor);
                    log.snapshots.push_back({step, l, std::move(rep.eigenvalues)});
                }
            }

            log.steps.push_back({step, epoch, fwd.loss, -1.0, timings});
        }

        log.epoch_seconds.push_back(
            std::chrono::duration<double>(Clock::now() - epoch_t0).count());
        const double acc = net.accuracy(ds.test);
        log.epoch_accuracy.push_back(acc);
        log.steps.back().acc = acc;
    }
    return log;
}

// ---------------------------------------------------------------------------
// CSV artifacts
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::ofstream open_out(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / name);
    if (!out) throw ConfigError("cannot write " + name + " under " + dir);
    return out;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
    if (v.empty()) return {};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    s = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
    return {m, s};
}

inline std::string fmt_pm(const MeanStd& ms) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.4g±%.2g", ms.mean, ms.std);
    return buf;
}

}  // namespace detail

inline void write_runlog_csv(const std::string& dir, const RunLog& log) {
    auto out = detail::open_out(dir, "runlog.csv");
    out << "step,epoch,loss,acc,t_factor,t_decomp,t_apply\n";
    for (const StepRecord& r : log.steps)
        out << r.step << ',' << r.epoch << ',' << detail::fmt(r.loss) << ','
            << detail::fmt(r.acc) << ',' << detail::fmt(r.timings.factor_update) << ','
            << detail::fmt(r.timings.decomposition) << ','
            << detail::fmt(r.timings.inverse_apply) << '\n';
}

inline void write_spectrum_csv(const std::string& dir, const RunLog& log) {
    auto out = detail::open_out(dir, "spectrum.csv");
    out << "step,layer,idx,eigenvalue\n";
    for (const SpectrumSnapshot& s : log.snapshots)
        for (std::size_t i = 0; i < s.eigenvalues.size(); ++i)
            out << s.step << ',' << s.layer << ',' << i << ','
                << detail::fmt(s.eigenvalues[i]) << '\n';
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

inline RunLog cmd_train(const ExperimentConfig& cfg) {
    RunLog log = train_run(cfg, cfg.seed, cfg.opt.method);
    write_runlog_csv(cfg.out_dir, log);
    if (cfg.snapshots) write_spectrum_csv(cfg.out_dir, log);
    return log;
}

/// Orders of magnitude decayed within the first `modes` eigenvalues.
inline double decay_orders(const std::vector<double>& eigenvalues, std::size_t modes) {
    if (eigenvalues.empty()) return 0.0;
    const std::size_t m = std::min(modes, eigenvalues.size());
    const double head = eigenvalues.front();
    const double tail = eigenvalues[m - 1];
    if (head <= 0.0) return 0.0;
    if (tail <= 0.0) return 300.0;  // decayed to numeric zero
    return std::log10(head / tail);
}

struct SpectrumLayerReport {
    std::size_t layer = 0;
    std::size_t d_m = 0;
    double final_decay_orders = 0.0;
    long long first_step_strong_decay = -1;  // first snapshot with >= 1.5 orders
};

struct SpectrumResult {
    RunLog log;
    std::vector<SpectrumLayerReport> layers;
};

inline SpectrumResult cmd_spectrum(const ExperimentConfig& cfg) {
    if (!cfg.snapshots)
        throw MissingSnapshots("cmd_spectrum: snapshots disabled in config");
    SpectrumResult result;
    result.log = train_run(cfg, cfg.seed, cfg.opt.method);
    if (result.log.snapshots.empty())
        throw MissingSnapshots("cmd_spectrum: run produced no snapshots");
    write_runlog_csv(cfg.out_dir, result.log);
    write_spectrum_csv(cfg.out_dir, result.log);

    std::size_t n_layers = 0;
    for (const auto& s : result.log.snapshots)
        n_layers = std::max(n_layers, s.layer + 1);
    result.layers.resize(n_layers);

    for (const SpectrumSnapshot& s : result.log.snapshots) {
        SpectrumLayerReport& rep = result.layers[s.layer];
        rep.layer = s.layer;
        rep.d_m = s.eigenvalues.size();
        const std::size_t modes = std::min<std::size_t>(200, s.eigenvalues.size());
        const double orders = decay_orders(s.eigenvalues, modes);
        rep.final_decay_orders = orders;  // snapshots arrive in step order
        if (rep.first_step_strong_decay < 0 && orders >= 1.5)
            rep.first_step_strong_decay = static_cast<long long>(s.step);
    }

    auto out = detail::open_out(cfg.out_dir, "spectrum_report.csv");
    out << "layer,d_m,final_decay_orders,first_step_strong_decay\n";
    for (const SpectrumLayerReport& r : result.layers)
        out << r.layer << ',' << r.d_m << ',' << detail::fmt(r.final_decay_orders)
            << ',' << r.first_step_strong_decay << '\n';
    return result;
}

struct Prop31CommandResult {
    Prop31Result bound;
    Prop31CheckReport check;  // trials == 0 when the empirical run is skipped
};

inline Prop31CommandResult cmd_prop31(const ExperimentConfig& cfg) {
    Prop31CommandResult res;
    res.bound = prop31_r_epsilon(cfg.prop31);
    if (cfg.prop31_trials > 0) {
        if (cfg.prop31.d_m > 512)
            throw ConfigError("cmd_prop31: empirical check needs d_m <= 512");
        RngState rng = RngState(cfg.seed).substream(0x9317);
        res.check = prop31_empirical_check(cfg.prop31, cfg.prop31_trials, rng);
    } else {
        res.check.r_eps = res.bound.r_eps;
        res.check.mode_bound = res.bound.mode_bound;
    }

    nlohmann::json j{{"epsilon", cfg.prop31.epsilon},
                     {"alpha", cfg.prop31.alpha},
                     {"rho", cfg.prop31.rho},
                     {"n_m", cfg.prop31.n_m},
                     {"d_m", cfg.prop31.d_m},
                     {"r_eps", res.bound.r_eps},
                     {"mode_bound", res.bound.mode_bound},
                     {"trials", res.check.trials},
                     {"assumption_satisfied", res.check.assumption_satisfied},
                     {"violations", res.check.violations}};
    auto out = detail::open_out(cfg.out_dir, "prop31.json");
    out << j.dump(2) << '\n';
    return res;
}

struct BenchResult {
    // medians[method][dim] = seconds; slopes[method] = fitted log-log exponent
    std::map<std::string, std::map<std::size_t, double>> medians;
    std::map<std::string, double> slopes;
};

inline BenchResult cmd_bench_inverse(const ExperimentConfig& cfg) {
    using Clock = std::chrono::steady_clock;
    const double lambda = 0.1;
    const SketchParams sketch{220, 10, 4};

    BenchResult result;
    RngState rng = RngState(cfg.seed).substream(0xBE7C);

    for (std::size_t d : cfg.bench_dims) {
        // Random PSD test matrix with a decaying bulk spectrum.
        DenseMatrix g = sample_gaussian(rng, d, std::min<std::size_t>(d, 512));
        DenseMatrix x = scale(matmul_a_bt(g, g), 1.0 / static_cast<double>(g.cols()));
        for (std::size_t i = 0; i < d; ++i) x(i, i) += 0.01;
        DenseMatrix v = sample_gaussian(rng, d, d);

        std::vector<double> t_exact, t_rsvd, t_srevd;
        for (std::size_t rep = 0; rep < cfg.bench_reps; ++rep) {
            {
                const auto t0 = Clock::now();
                SymEigResult eig = sym_eig(x);
                DenseMatrix z = apply_eig_damped_inverse(eig, lambda, v, ApplySide::LEFT);
                t_exact.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
                (void)z;
            }
            {
                RngState r = rng.substream(d, 2 * rep);
                const auto t0 = Clock::now();
                LowRankEig lr = rsvd_psd(x, sketch, r);
                DenseMatrix z = apply_lowrank_damped_inverse(lr, lambda, v, ApplySide::LEFT);
                t_rsvd.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
                (void)z;
            }
            {
                RngState r = rng.substream(d, 2 * rep + 1);
                const auto t0 = Clock::now();
                LowRankEig lr = srevd(x, sketch, r);
                DenseMatrix z = apply_lowrank_damped_inverse(lr, lambda, v, ApplySide::LEFT);
                t_srevd.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
                (void)z;
            }
        }
        auto median = [](std::vector<double> t) {
            std::sort(t.begin(), t.end());
            return t[t.size() / 2];
        };
        result.medians["exact"][d] = median(t_exact);
        result.medians["rsvd"][d] = median(t_rsvd);
        result.medians["srevd"][d] = median(t_srevd);
    }

    for (auto& [method, series] : result.medians) {
        // least-squares slope of log(t) vs log(d)
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(series.size());
        for (const auto& [d, t] : series) {
            const double lx = std::log(static_cast<double>(d));
            const double ly = std::log(t);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        result.slopes[method] = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }

    auto out = detail::open_out(cfg.out_dir, "bench.csv");
    out << "d,method,median_seconds\n";
    for (const auto& [method, series] : result.medians)
        for (const auto& [d, t] : series)
            out << d << ',' << method << ',' << detail::fmt(t) << '\n';

    auto fit = detail::open_out(cfg.out_dir, "bench_slopes.csv");
    fit << "method,slope\n";
    for (const auto& [method, slope] : result.slopes)
        fit << method << ',' << detail::fmt(slope) << '\n';
    return result;
}

struct CompareRow {
    Method method = Method::KFAC;
    double target = 0.9;
    detail::MeanStd t_to_target;      // over runs that hit the target
    detail::MeanStd t_epoch;          // over epochs x runs
    detail::MeanStd t_total;          // over runs
    detail::MeanStd epochs_to_target; // over runs that hit the target
    std::size_t hits = 0;
    std::size_t runs = 0;
};

struct CompareResult {
    std::vector<CompareRow> rows;
};

inline CompareResult cmd_compare(const ExperimentConfig& cfg) {
    if (cfg.compare_methods.size() < 2)
        throw ConfigError("cmd_compare: need at least two methods");

    CompareResult result;
    for (Method method : cfg.compare_methods) {
        std::vector<RunLog> logs;
        for (std::size_t s = 0; s < cfg.compare_seeds; ++s)
            logs.push_back(train_run(cfg, cfg.seed + s, method));

        std::vector<double> epoch_times, total_times;
        for (const RunLog& log : logs) {
            double total = 0.0;
            for (double t : log.epoch_seconds) {
                epoch_times.push_back(t);
                total += t;
            }
            total_times.push_back(total);
        }

        for (double target : cfg.targets) {
            CompareRow row;
            row.method = method;
            row.target = target;
            row.runs = logs.size();
            row.t_epoch = detail::mean_std(epoch_times);
            row.t_total = detail::mean_std(total_times);

            std::vector<double> hit_times, hit_epochs;
            for (const RunLog& log : logs) {
                double cumulative = 0.0;
                for (std::size_t e = 0; e < log.epoch_accuracy.size(); ++e) {
                    cumulative += log.epoch_seconds[e];
                    if (log.epoch_accuracy[e] >= target) {
                        hit_times.push_back(cumulative);
                        hit_epochs.push_back(static_cast<double>(e + 1));
                        break;
                    }
                }
            }
            row.hits = hit_times.size();
            row.t_to_target = detail::mean_std(hit_times);
            row.epochs_to_target = detail::mean_std(hit_epochs);
            result.rows.push_back(row);
        }
    }

    auto out = detail::open_out(cfg.out_dir, "compare.csv");
    out << "method,target,t_to_target,t_epoch,t_total,epochs_to_target,hits,runs\n";
    for (const CompareRow& r : result.rows)
        out << method_name(r.method) << ',' << detail::fmt(r.target) << ','
            << detail::fmt_pm(r.t_to_target) << ',' << detail::fmt_pm(r.t_epoch) << ','
            << detail::fmt_pm(r.t_total) << ',' << detail::fmt_pm(r.epochs_to_target)
            << ',' << r.hits << ',' << r.runs << '\n';
    return result;
}

}  // namespace rkfac

// Command-line front end: train / spectrum / prop31 / bench-inverse / compare.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rkfac/harness.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> method;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON experiment config");
    cmd->add_option("--seed", flags.seed, "RNG seed (overrides config)");
    cmd->add_option("--out", flags.out_dir, "output directory (overrides config)");
    cmd->add_option("--method", flags.method, "kfac | rs-kfac | sre-kfac")
        ->check(CLI::IsMember({"kfac", "rs-kfac", "sre-kfac"}));
}

rkfac::ExperimentConfig resolve(const CommonFlags& flags) {
    rkfac::ExperimentConfig cfg = flags.config_path.empty()
                                      ? rkfac::ExperimentConfig{}
                                      : rkfac::load_config(flags.config_path);
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.out_dir) cfg.out_dir = *flags.out_dir;
    if (flags.method) cfg.opt.method = rkfac::parse_method(*flags.method);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Randomized K-FAC optimizers: training and study harness"};
    app.require_subcommand(1);

    CommonFlags train_flags, spectrum_flags, prop31_flags, bench_flags, compare_flags;
    CLI::App* train = app.add_subcommand("train", "train the MLP with one method");
    CLI::App* spectrum =
        app.add_subcommand("spectrum", "train with spectrum snapshots, emit curves");
    CLI::App* prop31 = app.add_subcommand("prop31", "spectrum-decay bound arithmetic "
                                                    "and empirical check");
    CLI::App* bench =
        app.add_subcommand("bench-inverse", "time exact vs randomized inversion");
    CLI::App* compare = app.add_subcommand("compare", "multi-seed method comparison");
    add_common(train, train_flags);
    add_common(spectrum, spectrum_flags);
    add_common(prop31, prop31_flags);
    add_common(bench, bench_flags);
    add_common(compare, compare_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            rkfac::ExperimentConfig cfg = resolve(train_flags);
            rkfac::RunLog log = rkfac::cmd_train(cfg);
            std::printf("trained %zu steps; final loss %.6f, final test acc %.4f\n",
                        log.steps.size(), log.steps.back().loss,
                        log.epoch_accuracy.back());
        } else if (spectrum->parsed()) {
            rkfac::ExperimentConfig cfg = resolve(spectrum_flags);
            cfg.snapshots = true;
            rkfac::SpectrumResult res = rkfac::cmd_spectrum(cfg);
            for (const auto& r : res.layers)
                std::printf("layer %zu (d_M=%zu): final decay %.2f orders; "
                            "first step with >=1.5 orders: %lld\n",
                            r.layer, r.d_m, r.final_decay_orders,
                            r.first_step_strong_decay);
        } else if (prop31->parsed()) {
            rkfac::ExperimentConfig cfg = resolve(prop31_flags);
            rkfac::Prop31CommandResult res = rkfac::cmd_prop31(cfg);
            std::printf("r_eps=%zu mode_bound=%zu trials=%zu satisfied=%zu "
                        "violations=%zu\n",
                        res.bound.r_eps, res.bound.mode_bound, res.check.trials,
                        res.check.assumption_satisfied, res.check.violations);
        } else if (bench->parsed()) {
            rkfac::ExperimentConfig cfg = resolve(bench_flags);
            rkfac::BenchResult res = rkfac::cmd_bench_inverse(cfg);
            for (const auto& [method, slope] : res.slopes)
                std::printf("%s: fitted log-log slope %.3f\n", method.c_str(), slope);
        } else if (compare->parsed()) {
            rkfac::ExperimentConfig cfg = resolve(compare_flags);
            rkfac::CompareResult res = rkfac::cmd_compare(cfg);
            for (const auto& r : res.rows)
                std::printf("%s @ %.0f%%: t_epoch %.4g±%.2g s, hits %zu/%zu\n",
                            rkfac::method_name(r.method).c_str(), 100.0 * r.target,
                            r.t_epoch.mean, r.t_epoch.std, r.hits, r.runs);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

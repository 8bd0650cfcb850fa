#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bpm/config.hpp"
#include "bpm/harness.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out;
    std::vector<std::string> seeds;
    std::string algorithm;
    std::string fault_mode;
    int degree = -1;
    long episodes = -1;
};

// Every override funnels through the config parser, so a flag behaves
// exactly like the matching line in a config file.
bpm::config::ExperimentConfig resolve_config(const CommonArgs& args) {
    bpm::config::ExperimentConfig cfg;
    if (!args.config_path.empty())
        cfg = bpm::config::load_config_file(args.config_path);
    if (!args.seeds.empty()) {
        std::string joined;
        for (std::size_t i = 0; i < args.seeds.size(); ++i) {
            if (i) joined += ",";
            joined += args.seeds[i];
        }
        bpm::config::apply_key(cfg, "seeds", joined);
    }
    if (!args.algorithm.empty())
        bpm::config::apply_key(cfg, "algorithm", args.algorithm);
    if (!args.fault_mode.empty())
        bpm::config::apply_key(cfg, "fault.mode", args.fault_mode);
    if (args.degree >= 0)
        bpm::config::apply_key(cfg, "fault.degree", std::to_string(args.degree));
    if (args.episodes >= 0)
        bpm::config::apply_key(cfg, "episodes", std::to_string(args.episodes));
    return cfg;
}

void add_common_flags(CLI::App* cmd, CommonArgs& args, const char* default_out) {
    cmd->add_option("--config", args.config_path,
                    "config file of dotted `key = value` lines");
    cmd->add_option("--out", args.out, "output directory")
        ->default_val(default_out);
    cmd->add_option("--seed", args.seeds,
                    "run seed; repeat the flag for several seeds");
    cmd->add_option("--episodes", args.episodes, "training episodes");
}

void add_run_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--algorithm", args.algorithm,
                    "ddpg | bpm | bpm_nofilter");
    cmd->add_option("--fault-mode", args.fault_mode,
                    "none | frozen | offset | jitter");
    cmd->add_option("--degree", args.degree,
                    "number of faulty joints, drawn per seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fault-recovery experiment driver for a redundant arm"};
    app.require_subcommand(1);

    CommonArgs pretrain_args;
    CLI::App* pre = app.add_subcommand(
        "pretrain", "train healthy-arm checkpoints, one per seed");
    add_common_flags(pre, pretrain_args, "runs/pretrain");

    CommonArgs run_args;
    CLI::App* run = app.add_subcommand(
        "run", "one experiment cell: algorithm x fault over the seeds");
    add_common_flags(run, run_args, "runs/run");
    add_run_flags(run, run_args);

    CommonArgs sweep_args;
    CLI::App* swp = app.add_subcommand(
        "sweep", "full grid of fault modes, degrees and algorithms");
    add_common_flags(swp, sweep_args, "runs/sweep");

    std::string sum_dir = "runs/sweep";
    int sum_resamples = 10000;
    std::uint64_t sum_seed = 1;
    CLI::App* sum = app.add_subcommand(
        "summarize", "aggregate success_table.csv into summary.csv");
    sum->add_option("--out", sum_dir,
                    "run directory holding success_table.csv");
    sum->add_option("--resamples", sum_resamples,
                    "bootstrap resamples per group");
    sum->add_option("--seed", sum_seed, "bootstrap seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (pre->parsed()) {
            bpm::harness::pretrain(resolve_config(pretrain_args),
                                   pretrain_args.out);
        } else if (run->parsed()) {
            bpm::harness::run_experiment(resolve_config(run_args), run_args.out);
        } else if (swp->parsed()) {
            bpm::harness::sweep(resolve_config(sweep_args), sweep_args.out);
        } else if (sum->parsed()) {
            const auto rows =
                bpm::harness::summarize(sum_dir, sum_resamples, sum_seed);
            std::cerr << "[summarize] wrote " << rows.size() << " group(s) to "
                      << sum_dir << "/summary.csv\n";
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

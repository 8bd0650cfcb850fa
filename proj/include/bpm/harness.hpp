#pragma once
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bpm/config.hpp"
#include "bpm/train.hpp"

namespace bpm::harness {

// A pretraining seed counts as healthy when its final-window noise-free eval
// success reaches this rate.
inline constexpr double kPretrainSuccessThreshold = 0.8;

// The fault actually injected for one run. When cfg pins
// fault.affected_joints it is used as-is; otherwise fault.degree joints are
// drawn without replacement from 1..n-1 (the base joint never fails) by a
// partial Fisher-Yates shuffle on the "faultpick" substream of `seed`, then
// sorted ascending. Zero magnitudes resolve to the defaults: 45 degree
// offset, +-10 degree jitter.
FaultSpec resolve_fault(const config::ExperimentConfig& cfg,
                        std::uint64_t seed);

struct PretrainOutcome {
    std::uint64_t seed = 0;
    std::filesystem::path dir;
    double eval_success = 0.0;
    bool reached_threshold = false;
};

// Healthy-arm training (cfg.fault is ignored) for every seed, each saved as
// a checkpoint under <out>/seed_<seed>/. A seed ending below the success
// threshold is still saved, with the shortfall recorded in its manifest and
// reported on stderr. Identical cfg and seed give byte-identical checkpoints.
std::vector<PretrainOutcome> pretrain(const config::ExperimentConfig& cfg,
                                      const std::filesystem::path& out);

struct RunOutcome {
    std::uint64_t seed = 0;
    train::LearningCurve curve;
    double final_success = 0.0;  // eval success over the final window
};

// One (algorithm, fault) cell over all cfg.seeds. Per seed writes
// curve_<algorithm>_<mode>_<degree>_<seed>.csv (and, when cfg.step_log,
// steps_<algorithm>_<mode>_<degree>_<seed>.csv), appends one row per seed to
// success_table.csv, and writes manifest.txt, all under `out`.
// cfg.pretrain_checkpoint is either a single checkpoint directory (resumed
// by every seed) or a pretrain output directory with seed_<seed>/ entries;
// a missing checkpoint is a config error. Resumed runs skip the random-action
// warmup: the agent arrives with a full policy, and the paired resumed
// baselines must see the exact same schedule.
std::vector<RunOutcome> run_experiment(const config::ExperimentConfig& cfg,
                                       const std::filesystem::path& out);

// Full grid {frozen, offset, jitter} x degree {1..4} x algorithm
// {ddpg, bpm, bpm_nofilter} over cfg.seeds, sharing one flat output
// directory and one success_table.csv. ddpg cells train from scratch; the
// bpm variants resume cfg.pretrain_checkpoint. cfg.algorithm is ignored and
// fault.affected_joints must be empty (joints are drawn per seed).
void sweep(const config::ExperimentConfig& cfg,
           const std::filesystem::path& out);

struct SummaryRow {
    std::string mode;
    int degree = 0;
    std::string algorithm;
    int n_seeds = 0;
    double median_success = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::vector<std::uint64_t> outlier_seeds;  // success outside [ci_lo, ci_hi]
};

// Aggregates <runs_dir>/success_table.csv into <runs_dir>/summary.csv: per
// (mode, degree, algorithm) the median seed success, a 95% bootstrap
// confidence interval of the median, and the seeds falling outside it.
// Every group needs at least two seeds. Each group draws its resamples from
// its own named substream of `seed`, so results do not depend on group
// order. Returns the rows in the order written.
std::vector<SummaryRow> summarize(const std::filesystem::path& runs_dir,
                                  int resamples, std::uint64_t seed);

}  // namespace bpm::harness

#include "bpm/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <utility>

#include "bpm/checkpoint.hpp"
#include "bpm/ddpg.hpp"
#include "bpm/morph.hpp"
#include "bpm/rng.hpp"
#include "bpm/stats.hpp"

namespace bpm::harness {
namespace {

namespace fs = std::filesystem;

std::string fmt(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

bool same_env(const ArmConfig& a, const ArmConfig& b) {
    return a.n_joints == b.n_joints && a.link_lengths == b.link_lengths &&
           a.joint_limit_lo == b.joint_limit_lo &&
           a.joint_limit_hi == b.joint_limit_hi && a.axes == b.axes &&
           a.max_delta == b.max_delta &&
           a.episode_max_steps == b.episode_max_steps &&
           a.success_tolerance == b.success_tolerance && a.w_pos == b.w_pos &&
           a.w_rot == b.w_rot;
}

void write_manifest(const config::ExperimentConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    std::ofstream mf(out / "manifest.txt", std::ios::binary | std::ios::trunc);
    if (!mf)
        throw std::runtime_error("harness: cannot write manifest in " +
                                 out.string());
    mf << config::render_manifest(cfg);
}

void append_table_row(const fs::path& out, const std::string& mode, int degree,
                      const std::string& algorithm, std::uint64_t seed,
                      double success_rate) {
    const fs::path table = out / "success_table.csv";
    const bool fresh = !fs::exists(table);
    std::ofstream tf(table, std::ios::binary | std::ios::app);
    if (!tf)
        throw std::runtime_error("harness: cannot append to " + table.string());
    if (fresh) tf << "mode,degree,algorithm,seed,success_rate\n";
    tf << mode << "," << degree << "," << algorithm << "," << seed << ","
       << fmt(success_rate) << "\n";
}

std::string run_tag(const std::string& algorithm, const FaultSpec& fault,
                    std::uint64_t seed) {
    return algorithm + "_" + std::string(fault_mode_name(fault.mode)) + "_" +
           std::to_string(fault.degree()) + "_" + std::to_string(seed);
}

void write_curve_csv(const fs::path& path, const train::LearningCurve& curve) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("harness: cannot write " + path.string());
    out << "episode,return,success,steps,beta_end,accept_count\n";
    for (const train::EpisodeRecord& r : curve.episodes)
        out << r.episode << "," << fmt(r.ret) << "," << r.success << ","
            << r.steps << "," << fmt(r.beta_end) << "," << r.accept_count
            << "\n";
}

void write_step_csv(const fs::path& path,
                    const std::vector<train::StepInfo>& steps) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("harness: cannot write " + path.string());
    out << "episode,step,reward,beta,likelihood,proposal_flag,rho,"
           "accepted_flag\n";
    for (const train::StepInfo& s : steps)
        out << s.episode << "," << s.step << "," << fmt(s.reward) << ","
            << fmt(s.beta) << "," << fmt(s.likelihood) << ","
            << (s.proposal ? 1 : 0) << "," << fmt(s.rho) << ","
            << (s.accepted ? 1 : 0) << "\n";
}

// Checkpoint directory for one seed: either cfg.pretrain_checkpoint itself
// or its seed_<seed>/ subdirectory. A pretrain output root also carries a
// manifest.txt, so the discriminating file is the saved actor net.
fs::path checkpoint_dir_for_seed(const std::string& root, std::uint64_t seed) {
    const fs::path base(root);
    if (fs::exists(base / "actor.bin")) return base;
    const fs::path per_seed = base / ("seed_" + std::to_string(seed));
    if (fs::exists(per_seed / "actor.bin")) return per_seed;
    throw std::invalid_argument("config: pretrain_checkpoint '" + root +
                                "' has no checkpoint for seed " +
                                std::to_string(seed));
}

RunOutcome run_one_seed(const config::ExperimentConfig& cfg, const fs::path& out,
                        std::uint64_t seed) {
    const FaultSpec fault = resolve_fault(cfg, seed);

    ddpg::Agent agent;
    std::vector<std::pair<nn::ParamVector, nn::ParamVector>> snapshots;
    if (cfg.pretrain_checkpoint == "fresh") {
        RngStream init_rng(seed, "init");
        agent = ddpg::make_agent(cfg.env, cfg.hyper, init_rng);
    } else {
        ckpt::Checkpoint ck = ckpt::load_checkpoint(
            checkpoint_dir_for_seed(cfg.pretrain_checkpoint, seed));
        if (!same_env(ck.pretrain.env, cfg.env))
            throw std::invalid_argument(
                "config: checkpoint was trained on a different arm than the "
                "run requests");
        agent = std::move(ck.agent);
        snapshots = std::move(ck.snapshots);
        agent.hp = cfg.hyper;
        // a resumed agent already has a policy worth acting with, and paired
        // resumed baselines must see the exact same action schedule
        agent.hp.warmup_steps = 0;
    }

    std::unique_ptr<morph::Morpher> morpher;
    if (cfg.algorithm != "ddpg") {
        if (snapshots.size() < 2)
            throw std::invalid_argument(
                "config: algorithm '" + cfg.algorithm +
                "' needs a checkpoint with at least two snapshots");
        morph::MorphConfig mc = cfg.morph;
        if (cfg.algorithm == "bpm_nofilter") mc.filter_enabled = false;
        morph::BehaviorEnsemble ensemble;
        if (mc.proposals_enabled)
            ensemble = morph::build_ensemble(snapshots, mc.floor_std);
        morpher = std::make_unique<morph::Morpher>(mc, ensemble, seed);
    }

    train::RunSetup setup;
    setup.env = cfg.env;
    setup.fault = fault;
    setup.episodes = cfg.episodes;
    setup.seed = seed;
    setup.eval_every = cfg.eval_every;

    std::vector<train::StepInfo> steps;
    train::RunResult res =
        train::run_training(setup, std::move(agent), morpher.get(),
                            cfg.step_log ? &steps : nullptr);

    const std::string tag = run_tag(cfg.algorithm, fault, seed);
    write_curve_csv(out / ("curve_" + tag + ".csv"), res.curve);
    if (cfg.step_log) write_step_csv(out / ("steps_" + tag + ".csv"), steps);

    RunOutcome outcome;
    outcome.seed = seed;
    outcome.final_success = stats::eval_success_rate(res.curve, cfg.eval_window);
    outcome.curve = std::move(res.curve);
    append_table_row(out, std::string(fault_mode_name(fault.mode)),
                     fault.degree(), cfg.algorithm, seed,
                     outcome.final_success);
    return outcome;
}

std::vector<RunOutcome> run_cell(const config::ExperimentConfig& cfg,
                                 const fs::path& out) {
    std::vector<RunOutcome> outcomes;
    outcomes.reserve(cfg.seeds.size());
    for (std::uint64_t seed : cfg.seeds) {
        const auto t0 = std::chrono::steady_clock::now();
        outcomes.push_back(run_one_seed(cfg, out, seed));
        std::cerr << "[run] " << run_tag(cfg.algorithm, resolve_fault(cfg, seed),
                                         seed)
                  << ": final eval success " << outcomes.back().final_success
                  << " (" << fmt(seconds_since(t0)) << " s)\n";
    }
    return outcomes;
}

}  // namespace

FaultSpec resolve_fault(const config::ExperimentConfig& cfg,
                        std::uint64_t seed) {
    FaultSpec fault = cfg.fault;
    if (fault.mode == FaultMode::None) return fault;

    if (fault.affected_joints.empty()) {
        const int n = cfg.env.n_joints;
        std::vector<int> pool;
        for (int j = 1; j < n; ++j) pool.push_back(j);
        RngStream pick(seed, "faultpick");
        const int degree = cfg.fault_degree;
        if (degree < 1 || degree > static_cast<int>(pool.size()))
            throw std::invalid_argument(
                "resolve_fault: fault.degree out of range for this arm");
        for (int i = 0; i < degree; ++i) {
            const std::size_t j =
                static_cast<std::size_t>(i) +
                pick.index(pool.size() - static_cast<std::size_t>(i));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        }
        fault.affected_joints.assign(pool.begin(), pool.begin() + degree);
        std::sort(fault.affected_joints.begin(), fault.affected_joints.end());
    }

    if (fault.mode == FaultMode::Offset && fault.offset_angle == 0.0)
        fault.offset_angle = 0.7853981633974483;  // 45 degrees
    if (fault.mode == FaultMode::Jitter && fault.jitter_bound == 0.0)
        fault.jitter_bound = 0.17453292519943295;  // 10 degrees
    fault.validate(cfg.env.n_joints);
    return fault;
}

std::vector<PretrainOutcome> pretrain(const config::ExperimentConfig& cfg,
                                      const fs::path& out) {
    config::ExperimentConfig pcfg = cfg;
    pcfg.fault = FaultSpec{};
    pcfg.fault_degree = 0;
    pcfg.algorithm = "ddpg";
    pcfg.pretrain_checkpoint = "fresh";
    pcfg.source_text.clear();
    pcfg.validate();
    if (pcfg.snapshots.count < 2)
        throw std::invalid_argument(
            "config: pretraining must keep at least two snapshots (the "
            "morphing prior is fitted from them)");

    write_manifest(pcfg, out);

    std::vector<PretrainOutcome> outcomes;
    outcomes.reserve(pcfg.seeds.size());
    for (std::uint64_t seed : pcfg.seeds) {
        const auto t0 = std::chrono::steady_clock::now();
        train::RunSetup setup;
        setup.env = pcfg.env;
        setup.episodes = pcfg.episodes;
        setup.seed = seed;
        setup.eval_every = pcfg.eval_every;
        setup.snapshots = pcfg.snapshots;

        RngStream init_rng(seed, "init");
        ddpg::Agent agent = ddpg::make_agent(pcfg.env, pcfg.hyper, init_rng);
        train::RunResult res =
            train::run_training(setup, std::move(agent), nullptr, nullptr);

        PretrainOutcome o;
        o.seed = seed;
        o.dir = out / ("seed_" + std::to_string(seed));
        o.eval_success = stats::eval_success_rate(res.curve, pcfg.eval_window);
        o.reached_threshold = o.eval_success >= kPretrainSuccessThreshold;

        ckpt::Checkpoint ck;
        ck.agent = std::move(res.agent);
        ck.snapshots = std::move(res.snapshots);
        ck.pretrain = pcfg;
        ck.pretrain.seeds = {seed};
        ck.eval_success = o.eval_success;
        if (!o.reached_threshold)
            ck.warning = "pretraining ended below the success threshold (" +
                         fmt(o.eval_success) + " < " +
                         fmt(kPretrainSuccessThreshold) + ")";
        ckpt::save_checkpoint(o.dir, ck);

        std::cerr << "[pretrain] seed " << seed << ": final eval success "
                  << fmt(o.eval_success) << " ("
                  << fmt(seconds_since(t0)) << " s)"
                  << (o.reached_threshold ? "" : "  WARNING: below threshold")
                  << "\n";
        outcomes.push_back(std::move(o));
    }
    return outcomes;
}

std::vector<RunOutcome> run_experiment(const config::ExperimentConfig& cfg,
                                       const fs::path& out) {
    cfg.validate();
    write_manifest(cfg, out);
    return run_cell(cfg, out);
}

void sweep(const config::ExperimentConfig& cfg, const fs::path& out) {
    cfg.validate();
    if (cfg.pretrain_checkpoint == "fresh")
        throw std::invalid_argument(
            "config: sweep needs pretrain_checkpoint for its bpm cells");
    if (!cfg.fault.affected_joints.empty())
        throw std::invalid_argument(
            "config: sweep draws faulty joints per seed; clear "
            "fault.affected_joints");
    write_manifest(cfg, out);

    const FaultMode modes[] = {FaultMode::Frozen, FaultMode::Offset,
                               FaultMode::Jitter};
    const char* algorithms[] = {"ddpg", "bpm", "bpm_nofilter"};
    for (FaultMode mode : modes) {
        for (int degree = 1; degree <= 4; ++degree) {
            for (const char* algorithm : algorithms) {
                config::ExperimentConfig cell = cfg;
                cell.fault = FaultSpec{};
                cell.fault.mode = mode;
                cell.fault.offset_angle = cfg.fault.offset_angle;
                cell.fault.jitter_bound = cfg.fault.jitter_bound;
                cell.fault_degree = degree;
                cell.algorithm = algorithm;
                if (cell.algorithm == "ddpg") cell.pretrain_checkpoint = "fresh";
                cell.validate();
                run_cell(cell, out);
            }
        }
    }
}

std::vector<SummaryRow> summarize(const fs::path& runs_dir, int resamples,
                                  std::uint64_t seed) {
    const fs::path table = runs_dir / "success_table.csv";
    if (!fs::exists(table))
        throw std::invalid_argument("summarize: no success_table.csv in " +
                                    runs_dir.string());
    std::ifstream in(table, std::ios::binary);
    std::string line;
    if (!std::getline(in, line) ||
        line != "mode,degree,algorithm,seed,success_rate")
        throw std::invalid_argument("summarize: bad header in " +
                                    table.string());

    struct Entry {
        std::uint64_t seed;
        double rate;
    };
    std::map<std::tuple<int, int, std::string>, std::vector<Entry>> groups;
    std::map<std::tuple<int, int, std::string>, std::string> mode_names;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string mode, degree_s, algorithm, seed_s, rate_s;
        if (!std::getline(ls, mode, ',') || !std::getline(ls, degree_s, ',') ||
            !std::getline(ls, algorithm, ',') ||
            !std::getline(ls, seed_s, ',') || !std::getline(ls, rate_s))
            throw std::invalid_argument("summarize: bad row at line " +
                                        std::to_string(lineno) + " of " +
                                        table.string());
        try {
            const int mode_rank = static_cast<int>(fault_mode_from_name(mode));
            const int degree = std::stoi(degree_s);
            const std::uint64_t row_seed = std::stoull(seed_s);
            const double rate = std::stod(rate_s);
            const auto key = std::make_tuple(mode_rank, degree, algorithm);
            groups[key].push_back({row_seed, rate});
            mode_names[key] = mode;
        } catch (const std::logic_error&) {
            throw std::invalid_argument("summarize: bad row at line " +
                                        std::to_string(lineno) + " of " +
                                        table.string());
        }
    }

    std::vector<SummaryRow> rows;
    for (const auto& [key, entries] : groups) {
        const auto& [mode_rank, degree, algorithm] = key;
        if (entries.size() < 2)
            throw std::invalid_argument(
                "summarize: group " + mode_names[key] + "/" +
                std::to_string(degree) + "/" + algorithm +
                " has fewer than two seeds");
        std::vector<double> rates;
        rates.reserve(entries.size());
        for (const Entry& e : entries) rates.push_back(e.rate);

        SummaryRow row;
        row.mode = mode_names[key];
        row.degree = degree;
        row.algorithm = algorithm;
        row.n_seeds = static_cast<int>(entries.size());
        row.median_success = stats::median(rates);
        const std::string tag = row.mode + "_" + std::to_string(degree) + "_" +
                                algorithm;
        const stats::Interval ci =
            stats::bootstrap_ci(rates, resamples, 0.95, stream_seed(seed, tag));
        row.ci_lo = ci.lo;
        row.ci_hi = ci.hi;
        for (const Entry& e : entries)
            if (e.rate < ci.lo || e.rate > ci.hi)
                row.outlier_seeds.push_back(e.seed);
        rows.push_back(std::move(row));
    }

    std::ofstream out(runs_dir / "summary.csv",
                      std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("summarize: cannot write summary.csv in " +
                                 runs_dir.string());
    out << "mode,degree,algorithm,n_seeds,median_success,ci_lo,ci_hi,"
           "outlier_seeds\n";
    for (const SummaryRow& row : rows) {
        out << row.mode << "," << row.degree << "," << row.algorithm << ","
            << row.n_seeds << "," << fmt(row.median_success) << ","
            << fmt(row.ci_lo) << "," << fmt(row.ci_hi) << ",";
        for (std::size_t i = 0; i < row.outlier_seeds.size(); ++i) {
            if (i) out << ";";
            out << row.outlier_seeds[i];
        }
        out << "\n";
    }
    return rows;
}

}  // namespace bpm::harness

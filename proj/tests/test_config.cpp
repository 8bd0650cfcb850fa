#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpm/checkpoint.hpp"
#include "bpm/config.hpp"
#include "bpm/ddpg.hpp"
#include "bpm/rng.hpp"
#include "bpm/sha1.hpp"

using namespace bpm;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("bpm_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("config: defaults validate and carry the desk-scale setup") {
    config::ExperimentConfig cfg;
    cfg.validate();
    CHECK(cfg.env.n_joints == 8);
    CHECK(cfg.algorithm == "ddpg");
    CHECK(cfg.episodes == 1000);
    CHECK(cfg.seeds.size() == 10);
    CHECK(cfg.pretrain_checkpoint == "fresh");
    CHECK(cfg.eval_window == 100);
    CHECK(cfg.snapshots.count == 10);
}

TEST_CASE("config: parses a document with comments, lists and broadcasts") {
    const std::string doc =
        "# experiment: frozen fault, pinned joints\n"
        "\n"
        "algorithm = bpm\n"
        "pretrain_checkpoint = runs/pre\n"
        "episodes = 250   # after the fault\n"
        "seeds = 3, 5, 8\n"
        "fault.mode = frozen\n"
        "fault.affected_joints = 2, 4\n"
        "hyper.gamma = 0.98\n"
        "hyper.batch_size = 64\n"
        "morph.sigma_e = 0.5\n"
        "morph.filter_enabled = false\n"
        "snapshots.count = 4\n"
        "eval_every = 5\n"
        "step_log = true\n";
    const config::ExperimentConfig cfg = config::parse_config_text(doc);
    CHECK(cfg.algorithm == "bpm");
    CHECK(cfg.pretrain_checkpoint == "runs/pre");
    CHECK(cfg.episodes == 250);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 5, 8});
    CHECK(cfg.fault.mode == FaultMode::Frozen);
    CHECK(cfg.fault.affected_joints == std::vector<int>{2, 4});
    CHECK(cfg.hyper.gamma == 0.98);
    CHECK(cfg.hyper.batch_size == 64);
    CHECK(cfg.morph.sigma_e == 0.5);
    CHECK_FALSE(cfg.morph.filter_enabled);
    CHECK(cfg.snapshots.count == 4);
    CHECK(cfg.eval_every == 5);
    CHECK(cfg.step_log);
    CHECK(cfg.source_text == doc);
}

TEST_CASE("config: scalar broadcasts and per-joint lists") {
    config::ExperimentConfig cfg;
    config::apply_key(cfg, "env.n_joints", "4");
    CHECK(cfg.env.n_joints == 4);
    CHECK(cfg.env.link_lengths == std::vector<double>(4, 0.1));
    CHECK(cfg.env.axes ==
          std::vector<Axis>{Axis::Z, Axis::Y, Axis::Z, Axis::Y});

    config::apply_key(cfg, "env.link_lengths", "0.25");
    CHECK(cfg.env.link_lengths == std::vector<double>(4, 0.25));
    config::apply_key(cfg, "env.link_lengths", "0.1, 0.2, 0.3, 0.4");
    CHECK(cfg.env.link_lengths == std::vector<double>{0.1, 0.2, 0.3, 0.4});
    config::apply_key(cfg, "env.axes", "x");
    CHECK(cfg.env.axes == std::vector<Axis>(4, Axis::X));

    CHECK_THROWS_AS(config::apply_key(cfg, "env.link_lengths", "0.1, 0.2"),
                    std::invalid_argument);
    CHECK_THROWS_AS(config::apply_key(cfg, "env.axes", "z,y"),
                    std::invalid_argument);
    CHECK_THROWS_AS(config::apply_key(cfg, "env.axes", "w"),
                    std::invalid_argument);
}

TEST_CASE("config: unknown keys and malformed values are loud errors") {
    config::ExperimentConfig cfg;
    CHECK_THROWS_WITH_AS(config::apply_key(cfg, "hyper.gama", "0.9"),
                         doctest::Contains("hyper.gama"),
                         std::invalid_argument);
    CHECK_THROWS_AS(config::apply_key(cfg, "episodes", "many"),
                    std::invalid_argument);
    CHECK_THROWS_AS(config::apply_key(cfg, "episodes", "12x"),
                    std::invalid_argument);
    CHECK_THROWS_AS(config::apply_key(cfg, "step_log", "yes"),
                    std::invalid_argument);
    CHECK_THROWS_AS(config::apply_key(cfg, "seeds", "1,-2"),
                    std::invalid_argument);
    CHECK_THROWS_AS(config::apply_key(cfg, "fault.mode", "melted"),
                    std::invalid_argument);
    CHECK_THROWS_AS(config::apply_key(cfg, "fault.degree", "5"),
                    std::invalid_argument);
    CHECK_THROWS_AS(config::apply_key(cfg, "", "1"), std::invalid_argument);
    CHECK_THROWS_AS(config::parse_config_text("episodes 100\n"),
                    std::invalid_argument);
}

TEST_CASE("config: validation catches inconsistent experiments") {
    using config::ExperimentConfig;
    using config::parse_config_text;

    // duplicate seeds
    CHECK_THROWS_AS(parse_config_text("seeds = 1,2,2\n"),
                    std::invalid_argument);
    // bpm needs a checkpoint to morph from
    CHECK_THROWS_AS(parse_config_text("algorithm = bpm\n"),
                    std::invalid_argument);
    // fault mode without a degree or pinned joints
    CHECK_THROWS_AS(parse_config_text("fault.mode = frozen\n"),
                    std::invalid_argument);
    // pinned joints without a mode
    CHECK_THROWS_AS(parse_config_text("fault.affected_joints = 1\n"),
                    std::invalid_argument);
    // degree disagrees with the pinned joints
    CHECK_THROWS_AS(parse_config_text("fault.mode = frozen\n"
                                      "fault.affected_joints = 1,2\n"
                                      "fault.degree = 3\n"),
                    std::invalid_argument);
    // degree exceeds the redundant joints of a small arm
    CHECK_THROWS_AS(parse_config_text("env.n_joints = 4\n"
                                      "fault.mode = offset\n"
                                      "fault.degree = 4\n"),
                    std::invalid_argument);
    // matching degree and joints is fine
    const ExperimentConfig ok = parse_config_text(
        "fault.mode = frozen\n"
        "fault.affected_joints = 1,2\n"
        "fault.degree = 2\n");
    CHECK(ok.fault_degree == 2);
}

TEST_CASE("config: manifest renders every parameter and reparses to itself") {
    const std::string doc =
        "env.n_joints = 6\n"
        "env.link_lengths = 0.15\n"
        "fault.mode = jitter\n"
        "fault.degree = 3\n"
        "seeds = 11,12\n"
        "algorithm = bpm_nofilter\n"
        "pretrain_checkpoint = /tmp/ck\n"
        "morph.beta_init = 0.625\n";
    const config::ExperimentConfig cfg = config::parse_config_text(doc);
    const std::string manifest = config::render_manifest(cfg);

    // hash line covers the source document, computed the way git would
    CHECK(manifest.find("# config_hash = " + git_blob_hash(doc)) !=
          std::string::npos);

    // a manifest is itself a valid config document and a fixpoint
    const config::ExperimentConfig back = config::parse_config_text(manifest);
    CHECK(config::render_manifest_body(back) ==
          config::render_manifest_body(cfg));

    // spot-check that resolved values survived the roundtrip
    CHECK(back.env.n_joints == 6);
    CHECK(back.env.link_lengths == std::vector<double>(6, 0.15));
    CHECK(back.fault.mode == FaultMode::Jitter);
    CHECK(back.fault_degree == 3);
    CHECK(back.morph.beta_init == 0.625);

    // every configurable key appears in the body
    const std::string body = config::render_manifest_body(cfg);
    for (const char* key :
         {"env.n_joints", "env.link_lengths", "env.joint_limit_lo",
          "env.joint_limit_hi", "env.axes", "env.max_delta",
          "env.episode_max_steps", "env.success_tolerance", "env.w_pos",
          "env.w_rot", "fault.mode", "fault.degree", "fault.affected_joints",
          "fault.offset_angle", "fault.jitter_bound", "algorithm", "episodes",
          "seeds", "pretrain_checkpoint", "eval_every", "eval_window",
          "step_log", "hyper.gamma", "hyper.tau_soft", "hyper.batch_size",
          "hyper.buffer_capacity", "hyper.lr_actor", "hyper.lr_critic",
          "hyper.noise_std_start", "hyper.noise_std_end",
          "hyper.noise_anneal_frac", "hyper.train_every", "hyper.warmup_steps",
          "morph.sigma_e", "morph.likelihood_floor", "morph.floor_std",
          "morph.blend_rate", "morph.beta_init", "morph.proposal_batch",
          "morph.proposals_enabled", "morph.filter_enabled", "snapshots.count",
          "snapshots.stride"}) {
        CAPTURE(key);
        CHECK(body.find(std::string(key) + " = ") != std::string::npos);
    }
}

TEST_CASE("config: doubles render with full round-trip precision") {
    config::ExperimentConfig cfg;
    config::apply_key(cfg, "morph.sigma_e", "0.1");
    const config::ExperimentConfig back =
        config::parse_config_text(config::render_manifest_body(cfg));
    CHECK(back.morph.sigma_e == cfg.morph.sigma_e);
    CHECK(back.hyper.lr_actor == cfg.hyper.lr_actor);
    CHECK(back.env.success_tolerance == cfg.env.success_tolerance);
}

TEST_CASE("config: load_config_file reads what was written") {
    const fs::path dir = fresh_dir("config_file");
    const std::string doc = "episodes = 77\nseeds = 9\n";
    std::ofstream(dir / "exp.cfg") << doc;
    const config::ExperimentConfig cfg =
        config::load_config_file(dir / "exp.cfg");
    CHECK(cfg.episodes == 77);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{9});
    CHECK(cfg.source_text == doc);
    CHECK_THROWS_AS(config::load_config_file(dir / "missing.cfg"),
                    std::invalid_argument);
}

TEST_CASE("checkpoint: adam state round-trips exactly and rejects damage") {
    const fs::path dir = fresh_dir("adam");
    nn::AdamState st;
    RngStream rng(77);
    for (int i = 0; i < 257; ++i) {
        st.m.push_back(rng.normal());
        st.v.push_back(rng.uniform01());
    }
    st.step_count = 12345;
    ckpt::save_adam(st, dir / "a.bin");
    const nn::AdamState back = ckpt::load_adam(dir / "a.bin");
    CHECK(back.m == st.m);
    CHECK(back.v == st.v);
    CHECK(back.step_count == st.step_count);

    // trailing garbage
    std::ofstream(dir / "a.bin", std::ios::binary | std::ios::app) << "x";
    CHECK_THROWS_AS(ckpt::load_adam(dir / "a.bin"), std::runtime_error);

    // truncation
    ckpt::save_adam(st, dir / "b.bin");
    fs::resize_file(dir / "b.bin", fs::file_size(dir / "b.bin") - 9);
    CHECK_THROWS_AS(ckpt::load_adam(dir / "b.bin"), std::runtime_error);
}

namespace {

ckpt::Checkpoint make_test_checkpoint() {
    ckpt::Checkpoint ck;
    ck.pretrain = config::parse_config_text(
        "episodes = 40\nseeds = 21\nsnapshots.count = 3\n"
        "snapshots.stride = 5\n");
    RngStream init(21, "init");
    ck.agent =
        ddpg::make_agent(ck.pretrain.env, ck.pretrain.hyper, init);
    // give the optimizer state some non-trivial content
    ck.agent.actor_opt.step_count = 17;
    for (std::size_t i = 0; i < ck.agent.actor_opt.m.size(); ++i)
        ck.agent.actor_opt.m[i] = 1e-3 * static_cast<double>(i % 13);
    for (int s = 0; s < 3; ++s) {
        auto actor = ck.agent.actor;
        auto critic = ck.agent.critic;
        actor.values[0] += s;
        critic.values[1] -= s;
        ck.snapshots.emplace_back(std::move(actor), std::move(critic));
    }
    ck.eval_success = 0.875;
    ck.warning = "pretraining ended below the success threshold";
    return ck;
}

}  // namespace

TEST_CASE("checkpoint: save/load identity for nets, moments and snapshots") {
    const fs::path dir = fresh_dir("ckpt_identity");
    const ckpt::Checkpoint ck = make_test_checkpoint();
    ckpt::save_checkpoint(dir / "ck", ck);
    const ckpt::Checkpoint back = ckpt::load_checkpoint(dir / "ck");

    CHECK(back.agent.actor.values == ck.agent.actor.values);
    CHECK(back.agent.critic.values == ck.agent.critic.values);
    CHECK(back.agent.actor_target.values == ck.agent.actor_target.values);
    CHECK(back.agent.critic_target.values == ck.agent.critic_target.values);
    CHECK(back.agent.actor.spec == ck.agent.actor.spec);
    CHECK(back.agent.critic.spec == ck.agent.critic.spec);
    CHECK(back.agent.actor_opt.m == ck.agent.actor_opt.m);
    CHECK(back.agent.actor_opt.v == ck.agent.actor_opt.v);
    CHECK(back.agent.actor_opt.step_count == ck.agent.actor_opt.step_count);
    CHECK(back.agent.critic_opt.m == ck.agent.critic_opt.m);

    REQUIRE(back.snapshots.size() == 3);
    for (int s = 0; s < 3; ++s) {
        CHECK(back.snapshots[s].first.values == ck.snapshots[s].first.values);
        CHECK(back.snapshots[s].second.values == ck.snapshots[s].second.values);
    }

    CHECK(config::render_manifest_body(back.pretrain) ==
          config::render_manifest_body(ck.pretrain));
    CHECK(back.eval_success == 0.875);
    CHECK(back.warning == ck.warning);

    // hyper and env travel into the rebuilt agent
    CHECK(back.agent.hp.batch_size == ck.pretrain.hyper.batch_size);
    CHECK(back.agent.env.n_joints == ck.pretrain.env.n_joints);
}

TEST_CASE("checkpoint: saving the same state twice is byte-identical") {
    const fs::path dir = fresh_dir("ckpt_bytes");
    const ckpt::Checkpoint ck = make_test_checkpoint();
    ckpt::save_checkpoint(dir / "a", ck);
    ckpt::save_checkpoint(dir / "b", ck);
    int compared = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
        const fs::path name = entry.path().filename();
        CAPTURE(name.string());
        CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
        ++compared;
    }
    // manifest + 4 nets + 2 optimizer states + 3 snapshot pairs
    CHECK(compared == 13);
}

TEST_CASE("checkpoint: missing or inconsistent directories are rejected") {
    const fs::path dir = fresh_dir("ckpt_missing");
    CHECK_THROWS_AS(ckpt::load_checkpoint(dir / "nope"),
                    std::invalid_argument);

    const ckpt::Checkpoint ck = make_test_checkpoint();
    ckpt::save_checkpoint(dir / "ck", ck);
    // a snapshot missing its critic half
    fs::remove(dir / "ck" / "snap_2_critic.bin");
    CHECK_THROWS_AS(ckpt::load_checkpoint(dir / "ck"), std::runtime_error);
}

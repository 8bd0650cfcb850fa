#pragma once
#include <cstdint>
#include <utility>
#include <vector>

#include "bpm/ddpg.hpp"
#include "bpm/env.hpp"

namespace bpm::train {

struct EpisodeRecord {
    int episode = 0;
    double ret = 0.0;     // undiscounted return
    int success = 0;      // goal reached within tolerance
    int steps = 0;
    // morph confidence after the episode's last step; stays 0 without a
    // morphing layer or when the episode ends in zero steps
    double beta_end = 0.0;
    int accept_count = 0;
    bool eval = false;    // exploration disabled this episode
};

struct LearningCurve {
    std::vector<EpisodeRecord> episodes;
};

// Per-step diagnostics row; plain DDPG leaves the morphing fields zero.
struct StepInfo {
    int episode = 0;
    int step = 0;
    double reward = 0.0;
    double beta = 0.0;
    double likelihood = 0.0;
    bool proposal = false;
    double rho = 0.0;
    bool accepted = false;
};

// Hook for the Bayesian morphing layer. Runs after each transition is pushed
// to the replay buffer and before the gradient step; may mutate the agent.
class StepObserver {
public:
    virtual ~StepObserver() = default;
    virtual void episode_begin(int episode) = 0;
    virtual StepInfo after_transition(ddpg::Agent& agent,
                                      const ddpg::ReplayBuffer& buffer,
                                      const ddpg::Experience& exp, int episode,
                                      int step) = 0;
};

// Take `count` (actor, critic) copies of the online nets at evenly spaced
// late episodes: the last episode, then stepping back by `stride`.
struct SnapshotPlan {
    int count = 0;
    int stride = 20;
};

struct RunSetup {
    ArmConfig env;
    FaultSpec fault;
    int episodes = 1000;
    std::uint64_t seed = 1;
    int eval_every = 10;
    SnapshotPlan snapshots;
};

struct RunResult {
    LearningCurve curve;
    ddpg::Agent agent;
    // late-training (actor, critic) snapshots, oldest first
    std::vector<std::pair<nn::ParamVector, nn::ParamVector>> snapshots;
};

// Full training loop over `setup.episodes` episodes. The agent is taken by
// value (pretrained or fresh); all randomness comes from named substreams of
// setup.seed, so identical inputs give bit-identical results. `observer` and
// `step_log` may be null.
RunResult run_training(const RunSetup& setup, ddpg::Agent agent,
                       StepObserver* observer, std::vector<StepInfo>* step_log);

}  // namespace bpm::train

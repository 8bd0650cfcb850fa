#pragma once
#include <cstddef>
#include <span>
#include <vector>

#include "bpm/env.hpp"
#include "bpm/mlp.hpp"
#include "bpm/rng.hpp"

namespace bpm::ddpg {

struct Hyper {
    double gamma = 0.99;       // discount, in (0,1)
    double tau_soft = 0.005;   // target soft-update rate, in (0,1]
    int batch_size = 128;
    std::size_t buffer_capacity = 100000;
    double lr_actor = 3e-4;
    double lr_critic = 1e-3;
    double noise_std_start = 0.1;    // exploration noise, radians
    double noise_std_end = 0.01;
    double noise_anneal_frac = 0.75; // fraction of the run spent annealing
    int train_every = 2;             // env steps per gradient step
    long warmup_steps = 2000;        // uniform-random action steps before any update

    void validate() const;  // throws std::invalid_argument
};

// Observation fed to the networks: joint angles / pi, end-effector position /
// reach, end-effector quaternion (w >= 0), goal position / reach, goal
// quaternion (w >= 0), then goal-relative error features (positional offset /
// reach and orientation gap / pi). Length = n_joints + 18.
int observation_dim(const ArmConfig& config);
std::vector<double> make_observation(const ArmState& state, const GoalPose& goal,
                                     const ArmConfig& config);

// One stored interaction, already in network coordinates. action_norm is the
// clipped commanded action divided by max_delta, so it lives in [-1,1] like
// the actor output; faults intervene downstream of the command, so the critic
// learns the true (possibly faulty) consequences of commands.
struct Experience {
    std::vector<double> obs;
    std::vector<double> action_norm;
    double reward = 0.0;
    std::vector<double> next_obs;
    bool done = false;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Experience e);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Experience& at(std::size_t i) const { return items_[i]; }

    // Uniform with replacement.
    std::vector<std::size_t> sample_indices(std::size_t batch, RngStream& rng) const;

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Experience> items_;
};

struct Agent {
    nn::ParamVector actor, critic;
    nn::ParamVector actor_target, critic_target;
    nn::AdamState actor_opt, critic_opt;
    Hyper hp;
    ArmConfig env;
    double noise_std = 0.0;  // current exploration scale, radians
};

Agent make_agent(const ArmConfig& config, const Hyper& hp, RngStream& init_rng);

// Actor output in [-1,1] per joint for a given observation.
std::vector<double> policy_action_norm(const nn::ParamVector& actor,
                                       std::span<const double> obs);

// Deterministic policy action scaled to radians; explore adds Gaussian noise
// of std agent.noise_std per dimension, then clips to +-max_delta.
Action act(const Agent& agent, const ArmState& state, const GoalPose& goal,
           bool explore, RngStream& noise_rng);

double critic_value(const nn::ParamVector& critic, std::span<const double> obs,
                    std::span<const double> action_norm);

// Bootstrapped regression targets y = r + gamma * (1-done) *
// Q_target(s', actor_target(s')). Uses target networks only.
std::vector<double> td_targets(const Agent& agent, const ReplayBuffer& buffer,
                               std::span<const std::size_t> idx);

// One mean-squared-error regression step of the online critic toward the
// given targets. Returns the batch loss before the update.
double critic_update(Agent& agent, const ReplayBuffer& buffer,
                     std::span<const std::size_t> idx,
                     std::span<const double> targets);

// One deterministic-policy-gradient ascent step on mean Q(s, actor(s)),
// chaining the critic's action-input gradient through the actor. Leaves the
// critic untouched. Returns the batch mean Q before the update.
double actor_update(Agent& agent, const ReplayBuffer& buffer,
                    std::span<const std::size_t> idx);

// target <- tau * online + (1 - tau) * target, both nets.
void soft_update_targets(Agent& agent);

struct StepLosses {
    double critic_loss = 0.0;
    double actor_objective = 0.0;
};

// Full update: sample a batch, critic regression, actor ascent, soft target
// update. Throws std::runtime_error while the buffer holds fewer than
// batch_size items.
StepLosses train_step(Agent& agent, const ReplayBuffer& buffer,
                      RngStream& replay_rng);

}  // namespace bpm::ddpg

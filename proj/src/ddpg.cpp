#include "bpm/ddpg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bpm::ddpg {

void Hyper::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("gamma must be in (0,1)");
    if (!(tau_soft > 0.0 && tau_soft <= 1.0))
        throw std::invalid_argument("tau_soft must be in (0,1]");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (buffer_capacity < static_cast<std::size_t>(batch_size))
        throw std::invalid_argument("buffer_capacity must hold a batch");
    if (!(lr_actor > 0.0) || !(lr_critic > 0.0))
        throw std::invalid_argument("learning rates must be > 0");
    if (noise_std_start < 0.0 || noise_std_end < 0.0)
        throw std::invalid_argument("noise stds must be >= 0");
    if (!(noise_anneal_frac > 0.0 && noise_anneal_frac <= 1.0))
        throw std::invalid_argument("noise_anneal_frac must be in (0,1]");
    if (train_every < 1) throw std::invalid_argument("train_every must be >= 1");
    if (warmup_steps < 0) throw std::invalid_argument("warmup_steps must be >= 0");
}

int observation_dim(const ArmConfig& config) { return config.n_joints + 18; }

namespace {

void push_quat(std::vector<double>& out, const Quat& q) {
    // q and -q are the same rotation; canonicalize for a unique encoding
    double s = (q.w < 0.0) ? -1.0 : 1.0;
    out.push_back(s * q.w);
    out.push_back(s * q.x);
    out.push_back(s * q.y);
    out.push_back(s * q.z);
}

std::vector<double> critic_input(std::span<const double> obs,
                                 std::span<const double> action_norm) {
    std::vector<double> in;
    in.reserve(obs.size() + action_norm.size());
    in.insert(in.end(), obs.begin(), obs.end());
    in.insert(in.end(), action_norm.begin(), action_norm.end());
    return in;
}

}  // namespace

std::vector<double> make_observation(const ArmState& state, const GoalPose& goal,
                                     const ArmConfig& config) {
    const double reach = config.reach();
    std::vector<double> obs;
    obs.reserve(observation_dim(config));
    for (double a : state.joint_angles) obs.push_back(a / std::numbers::pi);
    obs.push_back(state.ee_position.x / reach);
    obs.push_back(state.ee_position.y / reach);
    obs.push_back(state.ee_position.z / reach);
    push_quat(obs, state.ee_orientation);
    obs.push_back(goal.position.x / reach);
    obs.push_back(goal.position.y / reach);
    obs.push_back(goal.position.z / reach);
    push_quat(obs, goal.orientation);
    // goal-relative error features: positional offset and orientation gap
    obs.push_back((goal.position.x - state.ee_position.x) / reach);
    obs.push_back((goal.position.y - state.ee_position.y) / reach);
    obs.push_back((goal.position.z - state.ee_position.z) / reach);
    obs.push_back(quat_angle(state.ee_orientation, goal.orientation) /
                  std::numbers::pi);
    return obs;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ < 1) throw std::invalid_argument("replay capacity must be >= 1");
    items_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
}

void ReplayBuffer::push(Experience e) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(e));
    } else {
        items_[next_] = std::move(e);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch,
                                                      RngStream& rng) const {
    if (items_.empty()) throw std::runtime_error("replay buffer is empty");
    std::vector<std::size_t> idx(batch);
    for (std::size_t& i : idx) i = rng.index(items_.size());
    return idx;
}

Agent make_agent(const ArmConfig& config, const Hyper& hp, RngStream& init_rng) {
    config.validate();
    hp.validate();
    const int od = observation_dim(config);
    nn::MlpSpec actor_spec{{od, 64, 64, config.n_joints}, nn::OutputActivation::Tanh};
    nn::MlpSpec critic_spec{{od + config.n_joints, 64, 64, 1},
                            nn::OutputActivation::Linear};
    Agent a;
    a.actor = nn::init_params(actor_spec, init_rng);
    a.critic = nn::init_params(critic_spec, init_rng);
    a.actor_target = a.actor;
    a.critic_target = a.critic;
    a.actor_opt = nn::make_adam_state(actor_spec);
    a.critic_opt = nn::make_adam_state(critic_spec);
    a.hp = hp;
    a.env = config;
    a.noise_std = hp.noise_std_start;
    return a;
}

std::vector<double> policy_action_norm(const nn::ParamVector& actor,
                                       std::span<const double> obs) {
    return nn::forward(actor, obs);
}

Action act(const Agent& agent, const ArmState& state, const GoalPose& goal,
           bool explore, RngStream& noise_rng) {
    auto obs = make_observation(state, goal, agent.env);
    auto norm = nn::forward(agent.actor, obs);
    Action a;
    a.delta_angles.resize(norm.size());
    const double md = agent.env.max_delta;
    for (std::size_t j = 0; j < norm.size(); ++j) {
        double v = norm[j] * md;
        if (explore) v += noise_rng.normal(0.0, agent.noise_std);
        a.delta_angles[j] = std::clamp(v, -md, md);
    }
    return a;
}

double critic_value(const nn::ParamVector& critic, std::span<const double> obs,
                    std::span<const double> action_norm) {
    return nn::forward(critic, critic_input(obs, action_norm))[0];
}

std::vector<double> td_targets(const Agent& agent, const ReplayBuffer& buffer,
                               std::span<const std::size_t> idx) {
    const std::size_t B = idx.size();
    const int od = observation_dim(agent.env);
    const int n = agent.env.n_joints;
    std::vector<double> X(B * od);
    for (std::size_t k = 0; k < B; ++k) {
        const Experience& e = buffer.at(idx[k]);
        std::copy(e.next_obs.begin(), e.next_obs.end(), X.begin() + k * od);
    }
    nn::Workspace aws, cws;
    auto an = nn::forward_ws(agent.actor_target, X, aws);
    std::vector<double> cin(B * (od + n));
    for (std::size_t k = 0; k < B; ++k) {
        std::copy(X.begin() + k * od, X.begin() + (k + 1) * od,
                  cin.begin() + k * (od + n));
        std::copy(an.begin() + k * n, an.begin() + (k + 1) * n,
                  cin.begin() + k * (od + n) + od);
    }
    auto q = nn::forward_ws(agent.critic_target, cin, cws);
    std::vector<double> y(B);
    for (std::size_t k = 0; k < B; ++k) {
        const Experience& e = buffer.at(idx[k]);
        y[k] = e.reward + agent.hp.gamma * (e.done ? 0.0 : q[k]);
    }
    return y;
}

double critic_update(Agent& agent, const ReplayBuffer& buffer,
                     std::span<const std::size_t> idx,
                     std::span<const double> targets) {
    if (idx.size() != targets.size())
        throw std::invalid_argument("critic_update: batch/target size mismatch");
    if (idx.empty()) throw std::invalid_argument("critic_update: empty batch");
    const std::size_t B = idx.size();
    const double inv_b = 1.0 / static_cast<double>(B);
    const int od = observation_dim(agent.env);
    const int n = agent.env.n_joints;
    std::vector<double> cin(B * (od + n));
    for (std::size_t k = 0; k < B; ++k) {
        const Experience& e = buffer.at(idx[k]);
        std::copy(e.obs.begin(), e.obs.end(), cin.begin() + k * (od + n));
        std::copy(e.action_norm.begin(), e.action_norm.end(),
                  cin.begin() + k * (od + n) + od);
    }
    nn::Gradient g;
    g.values.assign(agent.critic.spec.param_count(), 0.0);
    nn::Workspace ws;
    auto q = nn::forward_ws(agent.critic, cin, ws);
    double loss = 0.0;
    std::vector<double> og(B);
    for (std::size_t k = 0; k < B; ++k) {
        const double err = q[k] - targets[k];
        loss += err * err * inv_b;
        og[k] = 2.0 * err * inv_b;
    }
    nn::backward_ws(agent.critic, og, ws, g.values, {});
    nn::AdamConfig cfg;
    cfg.lr = agent.hp.lr_critic;
    nn::adam_step(agent.critic, g, agent.critic_opt, cfg);
    return loss;
}

double actor_update(Agent& agent, const ReplayBuffer& buffer,
                    std::span<const std::size_t> idx) {
    if (idx.empty()) throw std::invalid_argument("actor_update: empty batch");
    const std::size_t B = idx.size();
    const double inv_b = 1.0 / static_cast<double>(B);
    const int n = agent.env.n_joints;
    const int od = observation_dim(agent.env);
    std::vector<double> X(B * od);
    for (std::size_t k = 0; k < B; ++k) {
        const Experience& e = buffer.at(idx[k]);
        std::copy(e.obs.begin(), e.obs.end(), X.begin() + k * od);
    }
    nn::Gradient g;
    g.values.assign(agent.actor.spec.param_count(), 0.0);
    // discarded accumulator for critic param grads; never reset because only
    // the input gradient is consumed
    std::vector<double> critic_scratch(agent.critic.spec.param_count(), 0.0);
    std::vector<double> in_grad(B * (od + n));
    nn::Workspace aws, cws;
    auto an = nn::forward_ws(agent.actor, X, aws);
    std::vector<double> cin(B * (od + n));
    for (std::size_t k = 0; k < B; ++k) {
        std::copy(X.begin() + k * od, X.begin() + (k + 1) * od,
                  cin.begin() + k * (od + n));
        std::copy(an.begin() + k * n, an.begin() + (k + 1) * n,
                  cin.begin() + k * (od + n) + od);
    }
    auto q = nn::forward_ws(agent.critic, cin, cws);
    double mean_q = 0.0;
    for (std::size_t k = 0; k < B; ++k) mean_q += q[k] * inv_b;
    // descend on -mean Q; critic parameter grads land in a discarded scratch
    // buffer, only the gradient with respect to the action inputs is kept and
    // chained through the actor
    std::vector<double> og(B, -inv_b);
    nn::backward_ws(agent.critic, og, cws, critic_scratch, in_grad);
    std::vector<double> action_grad(B * n);
    for (std::size_t k = 0; k < B; ++k)
        std::copy(in_grad.begin() + k * (od + n) + od,
                  in_grad.begin() + (k + 1) * (od + n),
                  action_grad.begin() + k * n);
    nn::backward_ws(agent.actor, action_grad, aws, g.values, {});
    nn::AdamConfig cfg;
    cfg.lr = agent.hp.lr_actor;
    nn::adam_step(agent.actor, g, agent.actor_opt, cfg);
    return mean_q;
}

void soft_update_targets(Agent& agent) {
    const double t = agent.hp.tau_soft;
    auto blend = [t](const nn::ParamVector& online, nn::ParamVector& target) {
        for (std::size_t i = 0; i < target.values.size(); ++i)
            target.values[i] = t * online.values[i] + (1.0 - t) * target.values[i];
    };
    blend(agent.actor, agent.actor_target);
    blend(agent.critic, agent.critic_target);
}

StepLosses train_step(Agent& agent, const ReplayBuffer& buffer,
                      RngStream& replay_rng) {
    if (buffer.size() < static_cast<std::size_t>(agent.hp.batch_size))
        throw std::runtime_error("train_step: buffer smaller than batch");
    auto idx = buffer.sample_indices(agent.hp.batch_size, replay_rng);
    auto y = td_targets(agent, buffer, idx);
    StepLosses losses;
    losses.critic_loss = critic_update(agent, buffer, idx, y);
    losses.actor_objective = actor_update(agent, buffer, idx);
    soft_update_targets(agent);
    return losses;
}

}  // namespace bpm::ddpg

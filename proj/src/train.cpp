#include "bpm/train.hpp"

#include <algorithm>
#include <stdexcept>

namespace bpm::train {

RunResult run_training(const RunSetup& setup, ddpg::Agent agent,
                       StepObserver* observer, std::vector<StepInfo>* step_log) {
    setup.env.validate();
    setup.fault.validate(setup.env.n_joints);
    agent.hp.validate();
    if (setup.episodes < 0) throw std::invalid_argument("episodes must be >= 0");
    if (setup.eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");

    RngStream goal_rng(setup.seed, "goal");
    RngStream explore_rng(setup.seed, "explore");
    RngStream jitter_rng(setup.seed, "jitter");
    RngStream replay_rng(setup.seed, "replay");

    ddpg::ReplayBuffer buffer(agent.hp.buffer_capacity);

    const double anneal_span =
        std::max(1.0, agent.hp.noise_anneal_frac * setup.episodes);

    // episodes at which to copy the online nets
    std::vector<int> snap_at;
    for (int i = 0; i < setup.snapshots.count; ++i) {
        int ep = setup.episodes - 1 -
                 (setup.snapshots.count - 1 - i) * setup.snapshots.stride;
        if (ep >= 0) snap_at.push_back(ep);
    }

    RunResult result;
    result.curve.episodes.reserve(setup.episodes);
    long global_step = 0;

    for (int ep = 0; ep < setup.episodes; ++ep) {
        const bool eval = ((ep + 1) % setup.eval_every == 0);
        const double frac = std::min(1.0, static_cast<double>(ep) / anneal_span);
        agent.noise_std = agent.hp.noise_std_start +
                          frac * (agent.hp.noise_std_end - agent.hp.noise_std_start);

        auto [state, goal] = reset(setup.env, goal_rng);
        if (observer != nullptr) observer->episode_begin(ep);

        EpisodeRecord rec;
        rec.episode = ep;
        rec.eval = eval;

        bool finished = pose_distance(state, goal, setup.env) <=
                        setup.env.success_tolerance;
        while (!finished) {
            Action a;
            if (global_step < agent.hp.warmup_steps && !eval) {
                // seed the buffer with uniform-random actions before the first
                // update so the critic never locks onto a degenerate policy
                a.delta_angles.resize(setup.env.n_joints);
                for (double& d : a.delta_angles)
                    d = explore_rng.uniform(-setup.env.max_delta,
                                            setup.env.max_delta);
            } else {
                a = ddpg::act(agent, state, goal, !eval, explore_rng);
            }
            Transition tr =
                step(state, a, goal, setup.fault, setup.env, jitter_rng);

            ddpg::Experience exp;
            exp.obs = ddpg::make_observation(state, goal, setup.env);
            exp.next_obs = ddpg::make_observation(tr.next_state, goal, setup.env);
            exp.action_norm.resize(tr.action.delta_angles.size());
            for (std::size_t j = 0; j < exp.action_norm.size(); ++j)
                exp.action_norm[j] = tr.action.delta_angles[j] / setup.env.max_delta;
            exp.reward = tr.reward;
            // bootstrap through the step-budget truncation: only reaching the
            // goal is a real terminal state
            exp.done = -tr.reward <= setup.env.success_tolerance;
            buffer.push(exp);

            if (observer != nullptr) {
                StepInfo info =
                    observer->after_transition(agent, buffer, exp, ep, rec.steps);
                info.episode = ep;
                info.step = rec.steps;
                info.reward = tr.reward;
                rec.beta_end = info.beta;
                if (info.accepted) rec.accept_count += 1;
                if (step_log != nullptr) step_log->push_back(info);
            } else if (step_log != nullptr) {
                StepInfo info;
                info.episode = ep;
                info.step = rec.steps;
                info.reward = tr.reward;
                step_log->push_back(info);
            }

            ++global_step;
            if (buffer.size() >= static_cast<std::size_t>(agent.hp.batch_size) &&
                global_step >= agent.hp.warmup_steps &&
                global_step % agent.hp.train_every == 0) {
                ddpg::train_step(agent, buffer, replay_rng);
            }

            rec.ret += tr.reward;
            rec.steps += 1;
            state = tr.next_state;
            finished = tr.done;
        }

        rec.success = (pose_distance(state, goal, setup.env) <=
                       setup.env.success_tolerance)
                          ? 1
                          : 0;
        result.curve.episodes.push_back(rec);

        if (!snap_at.empty() && ep == snap_at.front()) {
            result.snapshots.emplace_back(agent.actor, agent.critic);
            snap_at.erase(snap_at.begin());
        }
    }

    result.agent = std::move(agent);
    return result;
}

}  // namespace bpm::train

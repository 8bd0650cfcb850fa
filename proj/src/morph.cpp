#include "bpm/morph.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bpm::morph {

void MorphConfig::validate() const {
    if (!(sigma_e > 0.0) || !std::isfinite(sigma_e))
        throw std::invalid_argument("sigma_e must be positive and finite");
    if (!(likelihood_floor > 0.0) || !std::isfinite(likelihood_floor))
        throw std::invalid_argument("likelihood_floor must be positive and finite");
    if (!(floor_std > 0.0) || !std::isfinite(floor_std))
        throw std::invalid_argument("floor_std must be positive and finite");
    if (!(blend_rate > 0.0) || blend_rate > 1.0)
        throw std::invalid_argument("blend_rate must be in (0, 1]");
    if (!(beta_init >= 0.0) || beta_init > 1.0)
        throw std::invalid_argument("beta_init must be in [0, 1]");
    if (proposal_batch < 1)
        throw std::invalid_argument("proposal_batch must be >= 1");
}

BehaviorEnsemble build_ensemble(
    std::vector<std::pair<nn::ParamVector, nn::ParamVector>> snapshots,
    double floor_std) {
    if (snapshots.size() < 2)
        throw std::invalid_argument("ensemble needs at least 2 snapshots");
    if (!(floor_std > 0.0) || !std::isfinite(floor_std))
        throw std::invalid_argument("floor_std must be positive and finite");
    const nn::MlpSpec& aspec = snapshots.front().first.spec;
    const nn::MlpSpec& cspec = snapshots.front().second.spec;
    const std::size_t an = snapshots.front().first.values.size();
    const std::size_t cn = snapshots.front().second.values.size();
    for (const auto& [actor, critic] : snapshots) {
        if (actor.spec != aspec || critic.spec != cspec ||
            actor.values.size() != an || critic.values.size() != cn)
            throw std::invalid_argument("snapshots have mismatched network specs");
    }

    // componentwise two-pass mean / population std, floored
    auto fit = [&](auto&& get, std::size_t n, nn::ParamVector& mean,
                   std::vector<double>& std_out) {
        const double inv_k = 1.0 / static_cast<double>(snapshots.size());
        mean.values.assign(n, 0.0);
        std_out.assign(n, 0.0);
        for (const auto& snap : snapshots) {
            const std::vector<double>& v = get(snap);
            for (std::size_t i = 0; i < n; ++i) mean.values[i] += v[i];
        }
        for (std::size_t i = 0; i < n; ++i) mean.values[i] *= inv_k;
        for (const auto& snap : snapshots) {
            const std::vector<double>& v = get(snap);
            for (std::size_t i = 0; i < n; ++i) {
                const double d = v[i] - mean.values[i];
                std_out[i] += d * d;
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            std_out[i] = std::max(std::sqrt(std_out[i] * inv_k), floor_std);
    };

    BehaviorEnsemble ens;
    ens.floor_std = floor_std;
    ens.actor_mean.spec = aspec;
    ens.critic_mean.spec = cspec;
    fit([](const auto& s) -> const std::vector<double>& { return s.first.values; },
        an, ens.actor_mean, ens.actor_std);
    fit([](const auto& s) -> const std::vector<double>& { return s.second.values; },
        cn, ens.critic_mean, ens.critic_std);
    ens.snapshots = std::move(snapshots);
    return ens;
}

nn::ParamVector thompson_sample(const BehaviorEnsemble& ensemble,
                                RngStream& rng) {
    const std::size_t n = ensemble.actor_mean.values.size();
    if (n == 0 || ensemble.actor_std.size() != n)
        throw std::invalid_argument("ensemble posterior is not fitted");
    nn::ParamVector candidate;
    candidate.spec = ensemble.actor_mean.spec;
    candidate.values.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        candidate.values[i] =
            rng.normal(ensemble.actor_mean.values[i], ensemble.actor_std[i]);
    return candidate;
}

double gaussian_density(double x, double mean, double stddev) {
    const double z = (x - mean) / stddev;
    return std::exp(-0.5 * z * z) /
           (stddev * std::sqrt(2.0 * std::numbers::pi));
}

double alternative_likelihood(double sigma_e) {
    return gaussian_density(2.0 * sigma_e, 0.0, sigma_e);
}

Confidence make_confidence(const MorphConfig& config) {
    config.validate();
    Confidence conf;
    conf.beta = config.beta_init;
    conf.likelihood_floor = config.likelihood_floor;
    conf.alternative = alternative_likelihood(config.sigma_e);
    return conf;
}

void update_confidence(Confidence& conf, double likelihood) {
    // fmax drops a NaN likelihood in favor of the floor; the upper clamp
    // keeps the renormalization finite for absurdly large inputs
    const double lk =
        std::fmin(std::fmax(likelihood, conf.likelihood_floor), 1e300);
    const double num = lk * conf.beta;
    const double den = num + conf.alternative * (1.0 - conf.beta);
    if (den > 0.0) conf.beta = num / den;
    conf.history.emplace_back(lk, conf.beta);
}

double evidence_likelihood(const BehaviorEnsemble& ensemble,
                           const ddpg::Agent& agent,
                           const ddpg::Experience& exp, double sigma_e) {
    std::vector<double> next_action =
        ddpg::policy_action_norm(agent.actor_target, exp.next_obs);
    const double next_q =
        ddpg::critic_value(agent.critic_target, exp.next_obs, next_action);
    const double y =
        exp.reward + agent.hp.gamma * (exp.done ? 0.0 : next_q);
    std::vector<double> prior_action =
        ddpg::policy_action_norm(ensemble.actor_mean, exp.obs);
    const double promised =
        ddpg::critic_value(ensemble.critic_mean, exp.obs, prior_action);
    return gaussian_density(y, promised, sigma_e);
}

std::size_t select_representation(
    const std::vector<double>& betas,
    const std::vector<std::vector<double>>& recent_returns) {
    if (betas.empty())
        throw std::invalid_argument("no representations to select from");
    if (betas.size() != recent_returns.size())
        throw std::invalid_argument("betas and returns lists are misaligned");
    std::size_t best = 0;
    double best_score = 0.0;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        double mean = 0.0;
        if (!recent_returns[i].empty()) {
            for (double r : recent_returns[i]) mean += r;
            mean /= static_cast<double>(recent_returns[i].size());
        }
        const double score = betas[i] * mean;
        if (i == 0 || score > best_score) {
            best = i;
            best_score = score;
        }
    }
    return best;
}

double acceptance_statistic(const ddpg::Agent& agent,
                            const nn::ParamVector& candidate_actor,
                            const std::vector<std::vector<double>>& obs_batch) {
    if (obs_batch.empty())
        throw std::invalid_argument("acceptance batch is empty");
    if (candidate_actor.spec != agent.actor.spec)
        throw std::invalid_argument("candidate does not match the actor spec");
    long better = 0;
    for (const std::vector<double>& obs : obs_batch) {
        std::vector<double> cur = ddpg::policy_action_norm(agent.actor, obs);
        std::vector<double> cand =
            ddpg::policy_action_norm(candidate_actor, obs);
        const double q_cur = ddpg::critic_value(agent.critic, obs, cur);
        const double q_cand = ddpg::critic_value(agent.critic, obs, cand);
        if (q_cand > q_cur) ++better;
    }
    return static_cast<double>(better) / static_cast<double>(obs_batch.size());
}

bool accept_reject(double rho, const Confidence& conf) {
    return rho > 1.0 - conf.beta;
}

void apply_bias(ddpg::Agent& agent, const nn::ParamVector& candidate_actor,
                double blend_rate) {
    if (!(blend_rate > 0.0) || blend_rate > 1.0)
        throw std::invalid_argument("blend_rate must be in (0, 1]");
    if (candidate_actor.spec != agent.actor.spec ||
        candidate_actor.values.size() != agent.actor.values.size())
        throw std::invalid_argument("candidate does not match the actor spec");
    for (std::size_t i = 0; i < agent.actor.values.size(); ++i)
        agent.actor.values[i] = std::lerp(agent.actor.values[i],
                                          candidate_actor.values[i], blend_rate);
    agent.actor_opt = nn::make_adam_state(agent.actor.spec);
}

Morpher::Morpher(const MorphConfig& config, BehaviorEnsemble ensemble,
                 std::uint64_t seed)
    : cfg_(config),
      ensemble_(std::move(ensemble)),
      thompson_rng_(seed, "thompson") {
    cfg_.validate();
    conf_ = make_confidence(cfg_);
    if (cfg_.proposals_enabled) {
        const std::size_t an = ensemble_.actor_mean.values.size();
        const std::size_t cn = ensemble_.critic_mean.values.size();
        if (an == 0 || ensemble_.actor_std.size() != an ||
            cn == 0 || ensemble_.critic_std.size() != cn)
            throw std::invalid_argument("morpher needs a fitted ensemble");
    }
}

void Morpher::episode_begin(int) {
    proposal_pending_ = cfg_.proposals_enabled;
}

train::StepInfo Morpher::after_transition(ddpg::Agent& agent,
                                          const ddpg::ReplayBuffer& buffer,
                                          const ddpg::Experience& exp,
                                          int /*episode*/, int /*step*/) {
    train::StepInfo info;
    if (!cfg_.proposals_enabled) return info;

    const double lk = evidence_likelihood(ensemble_, agent, exp, cfg_.sigma_e);
    update_confidence(conf_, lk);
    info.beta = conf_.beta;
    info.likelihood = lk;

    if (proposal_pending_ &&
        buffer.size() >= static_cast<std::size_t>(cfg_.proposal_batch)) {
        proposal_pending_ = false;
        nn::ParamVector candidate = thompson_sample(ensemble_, thompson_rng_);
        std::vector<std::size_t> idx =
            buffer.sample_indices(cfg_.proposal_batch, thompson_rng_);
        std::vector<std::vector<double>> obs;
        obs.reserve(idx.size());
        for (std::size_t i : idx) obs.push_back(buffer.at(i).obs);
        const double rho = acceptance_statistic(agent, candidate, obs);
        const bool take = cfg_.filter_enabled ? accept_reject(rho, conf_) : true;
        if (take) apply_bias(agent, candidate, cfg_.blend_rate);
        info.proposal = true;
        info.rho = rho;
        info.accepted = take;
    }
    return info;
}

}  // namespace bpm::morph

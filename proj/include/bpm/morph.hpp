#pragma once
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "bpm/ddpg.hpp"
#include "bpm/mlp.hpp"
#include "bpm/rng.hpp"
#include "bpm/train.hpp"

namespace bpm::morph {

// Knobs for the Bayesian morphing layer that sits on top of the DDPG loop.
struct MorphConfig {
    double sigma_e = 0.25;       // evidence noise scale of the likelihood model
    double likelihood_floor = 1e-8;  // clamp applied before each trust update
    double evidence_gain = 0.02;  // scales each trust update's log-odds move
    double min_acceptance = 0.1;  // bar the trust level can never lower past
    double floor_std = 1e-3;     // minimum per-component posterior std
    double blend_rate = 0.2;     // mixing coefficient for accepted candidates
    double beta_init = 0.5;      // trust in the prior before any evidence
    int proposal_batch = 128;    // replay states scored per acceptance test
    bool proposals_enabled = true;   // false: layer is fully inert (baseline)
    bool filter_enabled = true;      // false: accept every proposal (ablation)

    void validate() const;  // throws std::invalid_argument
};

// Diagonal Gaussian over network parameters, fitted componentwise from
// late-training (actor, critic) snapshots of the healthy run. The population
// std is floored so sampling never degenerates even if snapshots coincide.
struct BehaviorEnsemble {
    std::vector<std::pair<nn::ParamVector, nn::ParamVector>> snapshots;
    nn::ParamVector actor_mean, critic_mean;
    std::vector<double> actor_std, critic_std;
    double floor_std = 0.0;
};

// Componentwise mean and population std over K >= 2 snapshots; stds are
// floored at floor_std. Throws std::invalid_argument on fewer than two
// snapshots, mismatched network specs, or a non-positive floor.
BehaviorEnsemble build_ensemble(
    std::vector<std::pair<nn::ParamVector, nn::ParamVector>> snapshots,
    double floor_std);

// Candidate actor with each component drawn independently from
// Normal(actor_mean[i], actor_std[i]^2).
nn::ParamVector thompson_sample(const BehaviorEnsemble& ensemble,
                                RngStream& rng);

double gaussian_density(double x, double mean, double stddev);

// Fixed likelihood of the "prior does not match" hypothesis: the density a
// mildly off-model observation would score, evaluated two evidence-stddevs
// from the prediction.
double alternative_likelihood(double sigma_e);

// Trust is kept inside [kBetaFloor, 1 - kBetaFloor]. Exact Bayes makes 0 and
// 1 absorbing, and in double precision the recursion actually reaches them
// after ~40 one-sided updates, after which no stream of evidence can ever
// move the trust again. The clamp caps the accumulated log-odds at about
// +-13.8, so a saturated trust stays responsive to a regime change.
inline constexpr double kBetaFloor = 1e-6;

// Recursive two-hypothesis trust in the prior ensemble. Each update pits the
// observed evidence likelihood L (clamped at likelihood_floor) against the
// fixed alternative L0:  beta' = L*beta / (L*beta + L0*(1-beta)), which moves
// the log-odds of beta by exactly log(L/L0); the result is then clamped into
// [kBetaFloor, 1 - kBetaFloor].
struct Confidence {
    double beta = 0.5;
    double likelihood_floor = 1e-8;
    double alternative = 0.0;  // L0
    std::vector<std::pair<double, double>> history;  // (clamped L, new beta)
};

Confidence make_confidence(const MorphConfig& config);

void update_confidence(Confidence& conf, double likelihood);

// Compresses a likelihood toward the alternative so that one trust update
// moves the log-odds by gain * log(L / L0) instead of the full log(L / L0):
//   T(L) = L0 * (L / L0)^gain,   T(L0) = L0 exactly, gain = 1 is identity.
// Raw step likelihoods are bursty (a few successful steps can carry log-odds
// of +2 each); without damping a few hundred steps pin the trust at a clamp
// bound and the accept bar stops discriminating. Inputs must be positive and
// finite with gain in (0, 1], else std::invalid_argument.
double temper_likelihood(double likelihood, double alternative, double gain);

// Gaussian density (std sigma_e) of the bootstrapped one-step target
//   y = r + gamma * (1 - done) * Q_target(s', actor_target(s'))
// around the prior's state-value promise Q_ens(s, pi_ens(s)), both nets the
// ensemble means. The target side values the step that actually happened;
// the prediction side values what the prior's policy promised from s, so the
// density falls when the world stops delivering what the prior expects.
double evidence_likelihood(const BehaviorEnsemble& ensemble,
                           const ddpg::Agent& agent,
                           const ddpg::Experience& exp, double sigma_e);

// Index of the representation maximizing beta[i] * mean(recent_returns[i]);
// ties keep the lowest index, an empty returns list scores zero. Throws
// std::invalid_argument when the lists are empty or misaligned.
std::size_t select_representation(
    const std::vector<double>& betas,
    const std::vector<std::vector<double>>& recent_returns);

// Fraction of observations where the online critic strictly prefers the
// candidate's action over the current actor's; ties do not count. Throws
// std::invalid_argument on an empty batch or mismatched candidate spec.
double acceptance_statistic(const ddpg::Agent& agent,
                            const nn::ParamVector& candidate_actor,
                            const std::vector<std::vector<double>>& obs_batch);

// Accept iff rho > max(1 - beta, min_acceptance): the more the prior is
// trusted, the lower the bar a candidate must clear, but the bar never drops
// below min_acceptance — at full trust a candidate still has to beat the
// current actor on more than that fraction of states.
bool accept_reject(double rho, const Confidence& conf,
                   double min_acceptance = 0.0);

// actor <- (1 - blend_rate) * actor + blend_rate * candidate, componentwise,
// then the actor optimizer restarts from fresh moments. blend_rate outside
// (0, 1] or a mismatched candidate throws std::invalid_argument.
void apply_bias(ddpg::Agent& agent, const nn::ParamVector& candidate_actor,
                double blend_rate);

// Step hook realizing the morphing loop on top of train::run_training:
// every stored transition updates the trust recursion, and once per episode
// (at the first step where the buffer can fill proposal_batch) a candidate
// actor is Thompson-sampled, scored on a replay batch, and blended into the
// online actor when it passes the accept/reject filter. All morphing
// randomness comes from the "thompson" substream of the run seed, so the
// training streams are untouched. With proposals_enabled=false the hook does
// nothing at all and the run is bit-identical to plain DDPG.
class Morpher : public train::StepObserver {
public:
    Morpher(const MorphConfig& config, BehaviorEnsemble ensemble,
            std::uint64_t seed);

    void episode_begin(int episode) override;
    train::StepInfo after_transition(ddpg::Agent& agent,
                                     const ddpg::ReplayBuffer& buffer,
                                     const ddpg::Experience& exp, int episode,
                                     int step) override;

    const Confidence& confidence() const { return conf_; }

private:
    MorphConfig cfg_;
    BehaviorEnsemble ensemble_;
    Confidence conf_;
    RngStream thompson_rng_;
    bool proposal_pending_ = false;
};

}  // namespace bpm::morph

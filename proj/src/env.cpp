#include "bpm/env.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace bpm {

const char* fault_mode_name(FaultMode mode) {
    switch (mode) {
        case FaultMode::None: return "none";
        case FaultMode::Frozen: return "frozen";
        case FaultMode::Offset: return "offset";
        case FaultMode::Jitter: return "jitter";
    }
    return "?";
}

FaultMode fault_mode_from_name(const std::string& name) {
    if (name == "none") return FaultMode::None;
    if (name == "frozen") return FaultMode::Frozen;
    if (name == "offset") return FaultMode::Offset;
    if (name == "jitter") return FaultMode::Jitter;
    throw std::invalid_argument("unknown fault mode: " + name);
}

ArmConfig ArmConfig::defaults() {
    ArmConfig c;
    c.n_joints = 8;
    c.link_lengths.assign(8, 0.1);
    c.joint_limit_lo.assign(8, -1.0);
    c.joint_limit_hi.assign(8, 1.0);
    c.axes.resize(8);
    for (int i = 0; i < 8; ++i) c.axes[i] = (i % 2 == 0) ? Axis::Z : Axis::Y;
    return c;
}

double ArmConfig::reach() const {
    double r = 0.0;
    for (double l : link_lengths) r += l;
    return r;
}

void ArmConfig::validate() const {
    if (n_joints < 1) throw std::invalid_argument("n_joints must be >= 1");
    auto check_size = [&](size_t s, const char* what) {
        if (s != static_cast<size_t>(n_joints))
            throw std::invalid_argument(std::string(what) + " must have n_joints entries");
    };
    check_size(link_lengths.size(), "link_lengths");
    check_size(joint_limit_lo.size(), "joint_limit_lo");
    check_size(joint_limit_hi.size(), "joint_limit_hi");
    check_size(axes.size(), "axes");
    for (int i = 0; i < n_joints; ++i) {
        if (!(link_lengths[i] > 0.0))
            throw std::invalid_argument("link_lengths must be positive");
        if (!(joint_limit_lo[i] < joint_limit_hi[i]))
            throw std::invalid_argument("joint limits must satisfy lo < hi");
    }
    if (!(max_delta > 0.0)) throw std::invalid_argument("max_delta must be > 0");
    if (episode_max_steps < 1)
        throw std::invalid_argument("episode_max_steps must be >= 1");
    if (!(success_tolerance > 0.0))
        throw std::invalid_argument("success_tolerance must be > 0");
    if (w_pos < 0.0 || w_rot < 0.0 || w_pos + w_rot == 0.0)
        throw std::invalid_argument("pose weights must be nonnegative, not both zero");
}

bool FaultSpec::affects(int joint) const {
    return std::find(affected_joints.begin(), affected_joints.end(), joint) !=
           affected_joints.end();
}

void FaultSpec::validate(int n_joints) const {
    if (mode == FaultMode::None && !affected_joints.empty())
        throw std::invalid_argument("mode=none requires an empty affected set");
    std::set<int> seen;
    for (int j : affected_joints) {
        if (j < 0 || j >= n_joints)
            throw std::invalid_argument("affected joint index out of range");
        if (!seen.insert(j).second)
            throw std::invalid_argument("affected joints must be distinct");
    }
    if (offset_angle < 0.0 || jitter_bound < 0.0)
        throw std::invalid_argument("fault magnitudes must be >= 0");
}

static Quat axis_rotation(Axis axis, double angle) {
    switch (axis) {
        case Axis::Z: return Quat::about_z(angle);
        case Axis::Y: return Quat::about_y(angle);
        case Axis::X: return Quat::about_x(angle);
    }
    return Quat{};
}

std::pair<Vec3, Quat> forward_kinematics(std::span<const double> joint_angles,
                                         const ArmConfig& config) {
    if (joint_angles.size() != static_cast<size_t>(config.n_joints))
        throw std::invalid_argument("forward_kinematics: angle count mismatch");
    Vec3 p;
    Quat q;
    for (int i = 0; i < config.n_joints; ++i) {
        if (!std::isfinite(joint_angles[i]))
            throw std::invalid_argument("forward_kinematics: non-finite joint angle");
        q = (q * axis_rotation(config.axes[i], joint_angles[i])).normalized();
        p = p + q.rotate({0.0, 0.0, config.link_lengths[i]});
    }
    return {p, q};
}

ArmState make_state(std::vector<double> joint_angles, const ArmConfig& config,
                    int step_index) {
    auto [p, q] = forward_kinematics(joint_angles, config);
    ArmState s;
    s.joint_angles = std::move(joint_angles);
    s.ee_position = p;
    s.ee_orientation = q;
    s.step_index = step_index;
    return s;
}

std::vector<double> apply_fault(const Action& commanded,
                                std::span<const double> current_angles,
                                const FaultSpec& fault, RngStream& jitter_rng) {
    (void)current_angles;  // fault effects here are position-independent
    std::vector<double> effective = commanded.delta_angles;
    switch (fault.mode) {
        case FaultMode::None:
            break;
        case FaultMode::Frozen:
            for (int j : fault.affected_joints) effective[j] = 0.0;
            break;
        case FaultMode::Offset:
            for (int j : fault.affected_joints) effective[j] += fault.offset_angle;
            break;
        case FaultMode::Jitter:
            for (int j : fault.affected_joints)
                effective[j] += jitter_rng.uniform(-fault.jitter_bound, fault.jitter_bound);
            break;
    }
    return effective;
}

double pose_distance(const ArmState& state, const GoalPose& goal,
                     const ArmConfig& config) {
    double dp = (state.ee_position - goal.position).norm();
    double dq = quat_angle(state.ee_orientation, goal.orientation);
    return config.w_pos * dp + config.w_rot * dq;
}

double reward(const ArmState& state, const GoalPose& goal, const ArmConfig& config) {
    return -pose_distance(state, goal, config);
}

Transition step(const ArmState& state, const Action& action, const GoalPose& goal,
                const FaultSpec& fault, const ArmConfig& config,
                RngStream& jitter_rng) {
    if (state.step_index >= config.episode_max_steps)
        throw std::runtime_error("step: episode already finished (step budget)");
    if (pose_distance(state, goal, config) <= config.success_tolerance)
        throw std::runtime_error("step: episode already finished (goal reached)");
    if (action.delta_angles.size() != state.joint_angles.size())
        throw std::invalid_argument("step: action size mismatch");

    Action clipped = action;
    for (double& d : clipped.delta_angles)
        d = std::clamp(d, -config.max_delta, config.max_delta);

    std::vector<double> effective =
        apply_fault(clipped, state.joint_angles, fault, jitter_rng);

    std::vector<double> next_angles(state.joint_angles.size());
    for (size_t i = 0; i < next_angles.size(); ++i) {
        next_angles[i] = std::clamp(state.joint_angles[i] + effective[i],
                                    config.joint_limit_lo[i], config.joint_limit_hi[i]);
    }

    Transition tr;
    tr.state = state;
    tr.action = clipped;
    tr.next_state = make_state(std::move(next_angles), config, state.step_index + 1);
    tr.reward = reward(tr.next_state, goal, config);
    bool reached = -tr.reward <= config.success_tolerance;
    tr.done = reached || tr.next_state.step_index >= config.episode_max_steps;
    return tr;
}

std::pair<ArmState, GoalPose> reset(const ArmConfig& config, RngStream& goal_rng) {
    std::vector<double> goal_angles(config.n_joints);
    for (int i = 0; i < config.n_joints; ++i)
        goal_angles[i] = goal_rng.uniform(config.joint_limit_lo[i], config.joint_limit_hi[i]);
    auto [gp, gq] = forward_kinematics(goal_angles, config);

    ArmState start = make_state(std::vector<double>(config.n_joints, 0.0), config, 0);
    return {std::move(start), GoalPose{gp, gq}};
}

}  // namespace bpm

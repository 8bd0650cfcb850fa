#pragma once
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bpm/geometry.hpp"
#include "bpm/rng.hpp"

namespace bpm {

enum class Axis { Z, Y, X };

enum class FaultMode { None, Frozen, Offset, Jitter };

const char* fault_mode_name(FaultMode mode);
FaultMode fault_mode_from_name(const std::string& name);

// Kinematic description of the serial arm plus episode bookkeeping. The chain
// is built as alternating local rotations (z, y, z, y, ...) with each link
// extending along the rotated z axis, so the zero configuration points
// straight up the base z axis.
struct ArmConfig {
    int n_joints = 8;
    std::vector<double> link_lengths;   // meters, one per joint
    std::vector<double> joint_limit_lo; // radians
    std::vector<double> joint_limit_hi;
    std::vector<Axis> axes;             // rotation axis per joint
    double max_delta = 0.15;            // per-step joint change bound, radians
    int episode_max_steps = 40;
    double success_tolerance = 0.1;     // pose-distance epsilon
    double w_pos = 1.0;                 // pose-distance weight per meter
    double w_rot = 0.0;                 // pose-distance weight per radian

    static ArmConfig defaults();

    double reach() const;               // sum of link lengths
    void validate() const;              // throws std::invalid_argument
};

struct ArmState {
    std::vector<double> joint_angles;   // radians
    Vec3 ee_position;
    Quat ee_orientation;
    int step_index = 0;
};

struct Action {
    std::vector<double> delta_angles;   // radians, clipped to +-max_delta
};

struct FaultSpec {
    FaultMode mode = FaultMode::None;
    std::vector<int> affected_joints;      // distinct indices < n_joints
    double offset_angle = 0.0;             // radians, Offset mode
    double jitter_bound = 0.0;             // radians, Jitter mode
    uint64_t rng_stream_id = 0;            // label for the jitter stream

    int degree() const { return static_cast<int>(affected_joints.size()); }
    bool affects(int joint) const;
    void validate(int n_joints) const;
};

struct GoalPose {
    Vec3 position;
    Quat orientation;
};

struct Transition {
    ArmState state;
    Action action;
    double reward = 0.0;
    ArmState next_state;
    bool done = false;
};

// Pose of the chain at the given joint angles. Throws on non-finite angles or
// length mismatch.
std::pair<Vec3, Quat> forward_kinematics(std::span<const double> joint_angles,
                                         const ArmConfig& config);

// State with pose fields recomputed from the angles.
ArmState make_state(std::vector<double> joint_angles, const ArmConfig& config,
                    int step_index = 0);

// Per-joint realized angle change for a commanded (already clipped) action.
// Frozen zeroes the affected joints; Offset adds the constant offset to each
// affected joint's delta every step; Jitter adds a fresh Uniform(-b, b) draw.
std::vector<double> apply_fault(const Action& commanded,
                                std::span<const double> current_angles,
                                const FaultSpec& fault, RngStream& jitter_rng);

// Weighted pose error: w_pos * |p - p_goal| + w_rot * quat_angle(q, q_goal).
double pose_distance(const ArmState& state, const GoalPose& goal,
                     const ArmConfig& config);

// reward = -pose_distance; 0 iff the pose matches the goal exactly.
double reward(const ArmState& state, const GoalPose& goal, const ArmConfig& config);

// One environment step: clip action, apply fault, integrate and clip angles,
// recompute pose, compute reward and the done flag. Throws if the episode is
// already finished (step budget exhausted or goal already reached).
Transition step(const ArmState& state, const Action& action, const GoalPose& goal,
                const FaultSpec& fault, const ArmConfig& config,
                RngStream& jitter_rng);

// Zero-configuration start state plus a goal drawn as the forward kinematics
// of a random healthy joint vector within limits (always reachable).
std::pair<ArmState, GoalPose> reset(const ArmConfig& config, RngStream& goal_rng);

}  // namespace bpm

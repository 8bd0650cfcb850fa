#pragma once
#include <filesystem>
#include <utility>
#include <vector>

#include "bpm/config.hpp"
#include "bpm/ddpg.hpp"

namespace bpm::ckpt {

// A pretrained agent plus the late-training snapshots the morphing prior is
// built from. On disk this is a directory:
//   manifest.txt                       resolved pretrain config, reparseable
//   actor.bin / critic.bin             online nets
//   actor_target.bin / critic_target.bin
//   opt_actor.bin / opt_critic.bin     Adam moments
//   snap_<i>_actor.bin / snap_<i>_critic.bin   i = 0.., oldest first
struct Checkpoint {
    ddpg::Agent agent;
    std::vector<std::pair<nn::ParamVector, nn::ParamVector>> snapshots;
    config::ExperimentConfig pretrain;  // seeds pinned to this run's one seed
    double eval_success = -1.0;  // final noise-free eval rate, -1 if unknown
    std::string warning;         // non-empty when pretraining underperformed
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);

// Throws std::invalid_argument when `dir` is not a checkpoint directory and
// std::runtime_error when its contents are inconsistent.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Adam moments on disk: text header "adam <n> <step_count>\n" followed by
// the m and v arrays as raw little-endian 64-bit floats.
void save_adam(const nn::AdamState& state, const std::filesystem::path& path);
nn::AdamState load_adam(const std::filesystem::path& path);

}  // namespace bpm::ckpt

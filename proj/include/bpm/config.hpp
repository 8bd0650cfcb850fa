#pragma once
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bpm/ddpg.hpp"
#include "bpm/env.hpp"
#include "bpm/morph.hpp"
#include "bpm/train.hpp"

namespace bpm::config {

// Everything a run needs, resolved. Parsed from a plain-text document of
// dotted keys (`section.key = value`, one per line, `#` comments); unknown
// keys are errors so typos cannot silently fall back to defaults.
struct ExperimentConfig {
    ArmConfig env = ArmConfig::defaults();
    FaultSpec fault;          // resolved per seed when affected_joints empty
    int fault_degree = 0;     // joints to draw when affected_joints is empty
    std::string algorithm = "ddpg";  // ddpg | bpm | bpm_nofilter
    int episodes = 1000;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::string pretrain_checkpoint = "fresh";
    ddpg::Hyper hyper;
    morph::MorphConfig morph;
    train::SnapshotPlan snapshots{10, 20};
    int eval_every = 10;
    int eval_window = 100;
    bool step_log = false;    // also emit per-step morphing diagnostics CSV

    // raw document the config was parsed from (empty when built in code);
    // the manifest hash covers this text, or the canonical render if empty
    std::string source_text;

    void validate() const;  // throws std::invalid_argument
};

// Applies one `key = value` assignment. Setting env.n_joints rebuilds the
// arm's per-joint vectors (uniform 0.1 m links, +-1 rad limits, alternating
// z/y axes), so set it before any per-joint override. Single-element vector
// values broadcast to every joint. Throws std::invalid_argument on unknown
// keys or unparseable values.
void apply_key(ExperimentConfig& cfg, const std::string& key,
               const std::string& value);

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::filesystem::path& path);

// Every resolved parameter as a reparseable config document, preceded by a
// comment carrying the git-style content hash of the source document.
std::string render_manifest(const ExperimentConfig& cfg);

// The key-value lines alone, no comments. When a config was built in code
// (empty source_text) the manifest hash covers this canonical form instead.
std::string render_manifest_body(const ExperimentConfig& cfg);

}  // namespace bpm::config

#include "bpm/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace bpm::ckpt {
namespace {

namespace fs = std::filesystem;

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& v, std::size_t n,
                  const fs::path& path) {
    v.resize(n);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double))
        throw std::runtime_error("checkpoint: truncated file " + path.string());
}

fs::path snap_path(const fs::path& dir, std::size_t i, const char* net) {
    return dir / ("snap_" + std::to_string(i) + "_" + net + ".bin");
}

}  // namespace

void save_adam(const nn::AdamState& state, const fs::path& path) {
    if (state.m.size() != state.v.size())
        throw std::invalid_argument("save_adam: m and v sizes differ");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("save_adam: cannot write " + path.string());
    out << "adam " << state.m.size() << " " << state.step_count << "\n";
    write_doubles(out, state.m);
    write_doubles(out, state.v);
    if (!out)
        throw std::runtime_error("save_adam: write failed for " + path.string());
}

nn::AdamState load_adam(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("load_adam: cannot read " + path.string());
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string tag;
    std::size_t n = 0;
    long step_count = -1;
    hs >> tag >> n >> step_count;
    if (!hs || tag != "adam" || step_count < 0)
        throw std::runtime_error("load_adam: bad header in " + path.string());
    nn::AdamState state;
    state.step_count = step_count;
    read_doubles(in, state.m, n, path);
    read_doubles(in, state.v, n, path);
    char extra;
    if (in.read(&extra, 1))
        throw std::runtime_error("load_adam: trailing bytes in " +
                                 path.string());
    return state;
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
    fs::create_directories(dir);

    // The manifest hash should cover the resolved parameters of this very
    // checkpoint, not whatever document the pretrain sweep was launched from.
    config::ExperimentConfig manifest_cfg = ckpt.pretrain;
    manifest_cfg.source_text.clear();
    std::string manifest = config::render_manifest(manifest_cfg);
    {
        std::ostringstream extra;
        extra << "# eval_success = " << ckpt.eval_success << "\n";
        if (!ckpt.warning.empty()) extra << "# warning = " << ckpt.warning << "\n";
        manifest += extra.str();
    }
    std::ofstream mf(dir / "manifest.txt", std::ios::binary | std::ios::trunc);
    if (!mf)
        throw std::runtime_error("checkpoint: cannot write manifest in " +
                                 dir.string());
    mf << manifest;
    mf.close();

    nn::save_params(ckpt.agent.actor, dir / "actor.bin");
    nn::save_params(ckpt.agent.critic, dir / "critic.bin");
    nn::save_params(ckpt.agent.actor_target, dir / "actor_target.bin");
    nn::save_params(ckpt.agent.critic_target, dir / "critic_target.bin");
    save_adam(ckpt.agent.actor_opt, dir / "opt_actor.bin");
    save_adam(ckpt.agent.critic_opt, dir / "opt_critic.bin");
    for (std::size_t i = 0; i < ckpt.snapshots.size(); ++i) {
        nn::save_params(ckpt.snapshots[i].first, snap_path(dir, i, "actor"));
        nn::save_params(ckpt.snapshots[i].second, snap_path(dir, i, "critic"));
    }
}

Checkpoint load_checkpoint(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.txt"))
        throw std::invalid_argument("checkpoint not found: " + dir.string());

    std::ifstream mf(dir / "manifest.txt", std::ios::binary);
    std::ostringstream buf;
    buf << mf.rdbuf();
    const std::string manifest = buf.str();

    Checkpoint ckpt;
    ckpt.pretrain = config::parse_config_text(manifest);

    // eval_success travels as a comment so the manifest stays a plain config
    // document; recover it by hand.
    std::istringstream lines(manifest);
    std::string line;
    const std::string eval_prefix = "# eval_success = ";
    const std::string warn_prefix = "# warning = ";
    while (std::getline(lines, line)) {
        if (line.rfind(eval_prefix, 0) == 0) {
            try {
                ckpt.eval_success = std::stod(line.substr(eval_prefix.size()));
            } catch (const std::logic_error&) {
                throw std::runtime_error("checkpoint: bad eval_success in " +
                                         dir.string());
            }
        } else if (line.rfind(warn_prefix, 0) == 0) {
            ckpt.warning = line.substr(warn_prefix.size());
        }
    }

    ckpt.agent.hp = ckpt.pretrain.hyper;
    ckpt.agent.env = ckpt.pretrain.env;
    ckpt.agent.noise_std = 0.0;
    ckpt.agent.actor = nn::load_params(dir / "actor.bin");
    ckpt.agent.critic = nn::load_params(dir / "critic.bin");
    ckpt.agent.actor_target = nn::load_params(dir / "actor_target.bin");
    ckpt.agent.critic_target = nn::load_params(dir / "critic_target.bin");
    ckpt.agent.actor_opt = load_adam(dir / "opt_actor.bin");
    ckpt.agent.critic_opt = load_adam(dir / "opt_critic.bin");
    if (ckpt.agent.actor_opt.m.size() != ckpt.agent.actor.values.size() ||
        ckpt.agent.critic_opt.m.size() != ckpt.agent.critic.values.size())
        throw std::runtime_error(
            "checkpoint: optimizer state does not match net sizes in " +
            dir.string());

    for (std::size_t i = 0;; ++i) {
        const fs::path pa = snap_path(dir, i, "actor");
        const fs::path pc = snap_path(dir, i, "critic");
        if (!fs::exists(pa)) {
            if (fs::exists(pc))
                throw std::runtime_error("checkpoint: snapshot " +
                                         std::to_string(i) +
                                         " missing its actor in " +
                                         dir.string());
            break;
        }
        if (!fs::exists(pc))
            throw std::runtime_error("checkpoint: snapshot " +
                                     std::to_string(i) +
                                     " missing its critic in " + dir.string());
        ckpt.snapshots.emplace_back(nn::load_params(pa), nn::load_params(pc));
    }
    return ckpt;
}

}  // namespace bpm::ckpt

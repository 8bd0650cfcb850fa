#include "bpm/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "bpm/sha1.hpp"

namespace bpm::config {
namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw std::invalid_argument("config: bad value '" + value + "' for key '" +
                                key + "'");
}

double parse_double(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) bad_value(key, value);
        return x;
    } catch (const std::logic_error&) {
        bad_value(key, value);
    }
}

long long parse_int(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) bad_value(key, value);
        return x;
    } catch (const std::logic_error&) {
        bad_value(key, value);
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (!v.empty() && v[0] == '-') bad_value(key, value);
    try {
        std::size_t pos = 0;
        const std::uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) bad_value(key, value);
        return x;
    } catch (const std::logic_error&) {
        bad_value(key, value);
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, value);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, ',')) out.push_back(trim(item));
    if (out.empty()) out.push_back(trim(value));
    return out;
}

// One value broadcasts to every joint; otherwise the list must be per joint.
std::vector<double> parse_joint_vector(const ExperimentConfig& cfg,
                                       const std::string& key,
                                       const std::string& value) {
    std::vector<double> out;
    for (const std::string& item : split_list(value))
        out.push_back(parse_double(key, item));
    if (out.size() == 1) out.assign(static_cast<std::size_t>(cfg.env.n_joints), out[0]);
    if (out.size() != static_cast<std::size_t>(cfg.env.n_joints))
        throw std::invalid_argument("config: key '" + key + "' needs 1 or " +
                                    std::to_string(cfg.env.n_joints) +
                                    " comma-separated values");
    return out;
}

Axis axis_from_name(const std::string& key, const std::string& value) {
    if (value == "z") return Axis::Z;
    if (value == "y") return Axis::Y;
    if (value == "x") return Axis::X;
    bad_value(key, value);
}

char axis_name(Axis a) {
    switch (a) {
        case Axis::Z: return 'z';
        case Axis::Y: return 'y';
        case Axis::X: return 'x';
    }
    throw std::logic_error("axis_name: unreachable");
}

// Uniform per-joint defaults for an arm of any size, matching the shipped
// 8-joint arm's pattern.
void rebuild_arm(ArmConfig& env, int n) {
    env.n_joints = n;
    env.link_lengths.assign(static_cast<std::size_t>(n), 0.1);
    env.joint_limit_lo.assign(static_cast<std::size_t>(n), -1.0);
    env.joint_limit_hi.assign(static_cast<std::size_t>(n), 1.0);
    env.axes.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        env.axes[static_cast<std::size_t>(i)] = (i % 2 == 0) ? Axis::Z : Axis::Y;
}

std::string fmt(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

std::string fmt(bool b) { return b ? "true" : "false"; }

template <typename T, typename Fn>
std::string join(const std::vector<T>& v, Fn f) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += f(v[i]);
    }
    return out;
}

}  // namespace

void apply_key(ExperimentConfig& cfg, const std::string& raw_key,
               const std::string& raw_value) {
    const std::string key = trim(raw_key);
    const std::string value = trim(raw_value);
    if (key.empty()) throw std::invalid_argument("config: empty key");

    if (key == "env.n_joints") {
        const long long n = parse_int(key, value);
        if (n < 2 || n > 64) bad_value(key, value);
        rebuild_arm(cfg.env, static_cast<int>(n));
    } else if (key == "env.link_lengths") {
        cfg.env.link_lengths = parse_joint_vector(cfg, key, value);
    } else if (key == "env.joint_limit_lo") {
        cfg.env.joint_limit_lo = parse_joint_vector(cfg, key, value);
    } else if (key == "env.joint_limit_hi") {
        cfg.env.joint_limit_hi = parse_joint_vector(cfg, key, value);
    } else if (key == "env.axes") {
        std::vector<Axis> axes;
        for (const std::string& item : split_list(value))
            axes.push_back(axis_from_name(key, item));
        if (axes.size() == 1)
            axes.assign(static_cast<std::size_t>(cfg.env.n_joints), axes[0]);
        if (axes.size() != static_cast<std::size_t>(cfg.env.n_joints))
            throw std::invalid_argument("config: key '" + key + "' needs 1 or " +
                                        std::to_string(cfg.env.n_joints) +
                                        " comma-separated values");
        cfg.env.axes = std::move(axes);
    } else if (key == "env.max_delta") {
        cfg.env.max_delta = parse_double(key, value);
    } else if (key == "env.episode_max_steps") {
        cfg.env.episode_max_steps = static_cast<int>(parse_int(key, value));
    } else if (key == "env.success_tolerance") {
        cfg.env.success_tolerance = parse_double(key, value);
    } else if (key == "env.w_pos") {
        cfg.env.w_pos = parse_double(key, value);
    } else if (key == "env.w_rot") {
        cfg.env.w_rot = parse_double(key, value);
    } else if (key == "fault.mode") {
        cfg.fault.mode = fault_mode_from_name(value);
    } else if (key == "fault.degree") {
        const long long d = parse_int(key, value);
        if (d < 0 || d > 4) bad_value(key, value);
        cfg.fault_degree = static_cast<int>(d);
    } else if (key == "fault.affected_joints") {
        std::vector<int> joints;
        if (!value.empty()) {
            for (const std::string& item : split_list(value))
                joints.push_back(static_cast<int>(parse_int(key, item)));
        }
        cfg.fault.affected_joints = std::move(joints);
    } else if (key == "fault.offset_angle") {
        cfg.fault.offset_angle = parse_double(key, value);
    } else if (key == "fault.jitter_bound") {
        cfg.fault.jitter_bound = parse_double(key, value);
    } else if (key == "algorithm") {
        if (value != "ddpg" && value != "bpm" && value != "bpm_nofilter")
            bad_value(key, value);
        cfg.algorithm = value;
    } else if (key == "episodes") {
        cfg.episodes = static_cast<int>(parse_int(key, value));
    } else if (key == "seeds") {
        std::vector<std::uint64_t> seeds;
        for (const std::string& item : split_list(value))
            seeds.push_back(parse_u64(key, item));
        cfg.seeds = std::move(seeds);
    } else if (key == "pretrain_checkpoint") {
        if (value.empty()) bad_value(key, value);
        cfg.pretrain_checkpoint = value;
    } else if (key == "eval_every") {
        cfg.eval_every = static_cast<int>(parse_int(key, value));
    } else if (key == "eval_window") {
        cfg.eval_window = static_cast<int>(parse_int(key, value));
    } else if (key == "step_log") {
        cfg.step_log = parse_bool(key, value);
    } else if (key == "hyper.gamma") {
        cfg.hyper.gamma = parse_double(key, value);
    } else if (key == "hyper.tau_soft") {
        cfg.hyper.tau_soft = parse_double(key, value);
    } else if (key == "hyper.batch_size") {
        cfg.hyper.batch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "hyper.buffer_capacity") {
        cfg.hyper.buffer_capacity =
            static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "hyper.lr_actor") {
        cfg.hyper.lr_actor = parse_double(key, value);
    } else if (key == "hyper.lr_critic") {
        cfg.hyper.lr_critic = parse_double(key, value);
    } else if (key == "hyper.noise_std_start") {
        cfg.hyper.noise_std_start = parse_double(key, value);
    } else if (key == "hyper.noise_std_end") {
        cfg.hyper.noise_std_end = parse_double(key, value);
    } else if (key == "hyper.noise_anneal_frac") {
        cfg.hyper.noise_anneal_frac = parse_double(key, value);
    } else if (key == "hyper.train_every") {
        cfg.hyper.train_every = static_cast<int>(parse_int(key, value));
    } else if (key == "hyper.warmup_steps") {
        cfg.hyper.warmup_steps = static_cast<int>(parse_int(key, value));
    } else if (key == "morph.sigma_e") {
        cfg.morph.sigma_e = parse_double(key, value);
    } else if (key == "morph.likelihood_floor") {
        cfg.morph.likelihood_floor = parse_double(key, value);
    } else if (key == "morph.floor_std") {
        cfg.morph.floor_std = parse_double(key, value);
    } else if (key == "morph.blend_rate") {
        cfg.morph.blend_rate = parse_double(key, value);
    } else if (key == "morph.beta_init") {
        cfg.morph.beta_init = parse_double(key, value);
    } else if (key == "morph.proposal_batch") {
        cfg.morph.proposal_batch = static_cast<int>(parse_int(key, value));
    } else if (key == "morph.proposals_enabled") {
        cfg.morph.proposals_enabled = parse_bool(key, value);
    } else if (key == "morph.filter_enabled") {
        cfg.morph.filter_enabled = parse_bool(key, value);
    } else if (key == "snapshots.count") {
        cfg.snapshots.count = static_cast<int>(parse_int(key, value));
    } else if (key == "snapshots.stride") {
        cfg.snapshots.stride = static_cast<int>(parse_int(key, value));
    } else {
        throw std::invalid_argument("config: unknown key '" + key + "'");
    }
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    cfg.source_text = text;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not 'key = value'");
        apply_key(cfg, stripped.substr(0, eq), stripped.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("config: cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void ExperimentConfig::validate() const {
    env.validate();
    hyper.validate();
    morph.validate();
    if (algorithm != "ddpg" && algorithm != "bpm" && algorithm != "bpm_nofilter")
        throw std::invalid_argument("config: unknown algorithm '" + algorithm +
                                    "'");
    if (episodes < 1)
        throw std::invalid_argument("config: episodes must be >= 1");
    if (seeds.empty())
        throw std::invalid_argument("config: seeds must be non-empty");
    std::vector<std::uint64_t> sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument("config: seeds must be distinct");
    if (algorithm != "ddpg" && pretrain_checkpoint == "fresh")
        throw std::invalid_argument(
            "config: algorithm '" + algorithm +
            "' needs a pretrain_checkpoint (the prior comes from its snapshots)");
    if (fault.mode != FaultMode::None) {
        if (fault.affected_joints.empty()) {
            if (fault_degree < 1 || fault_degree > 4)
                throw std::invalid_argument(
                    "config: fault.degree must be in [1,4] when "
                    "fault.affected_joints is empty");
            if (fault_degree > env.n_joints - 1)
                throw std::invalid_argument(
                    "config: fault.degree exceeds the arm's redundant joints");
        } else {
            FaultSpec pinned = fault;
            pinned.validate(env.n_joints);
            if (fault_degree != 0 &&
                fault_degree != static_cast<int>(fault.affected_joints.size()))
                throw std::invalid_argument(
                    "config: fault.degree disagrees with the pinned "
                    "fault.affected_joints");
        }
    } else if (!fault.affected_joints.empty()) {
        throw std::invalid_argument(
            "config: fault.affected_joints set but fault.mode is none");
    }
    if (eval_every < 1)
        throw std::invalid_argument("config: eval_every must be >= 1");
    if (eval_window < 1)
        throw std::invalid_argument("config: eval_window must be >= 1");
    if (snapshots.count < 0 || snapshots.stride < 1)
        throw std::invalid_argument("config: bad snapshot plan");
}

std::string render_manifest(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "# resolved experiment parameters\n";
    const std::string& hashed =
        cfg.source_text.empty() ? render_manifest_body(cfg) : cfg.source_text;
    out << "# config_hash = " << git_blob_hash(hashed) << "\n";
    out << render_manifest_body(cfg);
    return out.str();
}

std::string render_manifest_body(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "env.n_joints = " << cfg.env.n_joints << "\n";
    out << "env.link_lengths = "
        << join(cfg.env.link_lengths, [](double x) { return fmt(x); }) << "\n";
    out << "env.joint_limit_lo = "
        << join(cfg.env.joint_limit_lo, [](double x) { return fmt(x); })
        << "\n";
    out << "env.joint_limit_hi = "
        << join(cfg.env.joint_limit_hi, [](double x) { return fmt(x); })
        << "\n";
    out << "env.axes = "
        << join(cfg.env.axes,
                [](Axis a) { return std::string(1, axis_name(a)); })
        << "\n";
    out << "env.max_delta = " << fmt(cfg.env.max_delta) << "\n";
    out << "env.episode_max_steps = " << cfg.env.episode_max_steps << "\n";
    out << "env.success_tolerance = " << fmt(cfg.env.success_tolerance) << "\n";
    out << "env.w_pos = " << fmt(cfg.env.w_pos) << "\n";
    out << "env.w_rot = " << fmt(cfg.env.w_rot) << "\n";
    out << "fault.mode = " << fault_mode_name(cfg.fault.mode) << "\n";
    out << "fault.degree = " << cfg.fault_degree << "\n";
    out << "fault.affected_joints = "
        << join(cfg.fault.affected_joints,
                [](int j) { return std::to_string(j); })
        << "\n";
    out << "fault.offset_angle = " << fmt(cfg.fault.offset_angle) << "\n";
    out << "fault.jitter_bound = " << fmt(cfg.fault.jitter_bound) << "\n";
    out << "algorithm = " << cfg.algorithm << "\n";
    out << "episodes = " << cfg.episodes << "\n";
    out << "seeds = "
        << join(cfg.seeds, [](std::uint64_t s) { return std::to_string(s); })
        << "\n";
    out << "pretrain_checkpoint = " << cfg.pretrain_checkpoint << "\n";
    out << "eval_every = " << cfg.eval_every << "\n";
    out << "eval_window = " << cfg.eval_window << "\n";
    out << "step_log = " << fmt(cfg.step_log) << "\n";
    out << "hyper.gamma = " << fmt(cfg.hyper.gamma) << "\n";
    out << "hyper.tau_soft = " << fmt(cfg.hyper.tau_soft) << "\n";
    out << "hyper.batch_size = " << cfg.hyper.batch_size << "\n";
    out << "hyper.buffer_capacity = " << cfg.hyper.buffer_capacity << "\n";
    out << "hyper.lr_actor = " << fmt(cfg.hyper.lr_actor) << "\n";
    out << "hyper.lr_critic = " << fmt(cfg.hyper.lr_critic) << "\n";
    out << "hyper.noise_std_start = " << fmt(cfg.hyper.noise_std_start) << "\n";
    out << "hyper.noise_std_end = " << fmt(cfg.hyper.noise_std_end) << "\n";
    out << "hyper.noise_anneal_frac = " << fmt(cfg.hyper.noise_anneal_frac)
        << "\n";
    out << "hyper.train_every = " << cfg.hyper.train_every << "\n";
    out << "hyper.warmup_steps = " << cfg.hyper.warmup_steps << "\n";
    out << "morph.sigma_e = " << fmt(cfg.morph.sigma_e) << "\n";
    out << "morph.likelihood_floor = " << fmt(cfg.morph.likelihood_floor)
        << "\n";
    out << "morph.floor_std = " << fmt(cfg.morph.floor_std) << "\n";
    out << "morph.blend_rate = " << fmt(cfg.morph.blend_rate) << "\n";
    out << "morph.beta_init = " << fmt(cfg.morph.beta_init) << "\n";
    out << "morph.proposal_batch = " << cfg.morph.proposal_batch << "\n";
    out << "morph.proposals_enabled = " << fmt(cfg.morph.proposals_enabled)
        << "\n";
    out << "morph.filter_enabled = " << fmt(cfg.morph.filter_enabled) << "\n";
    out << "snapshots.count = " << cfg.snapshots.count << "\n";
    out << "snapshots.stride = " << cfg.snapshots.stride << "\n";
    return out.str();
}

}  // namespace bpm::config

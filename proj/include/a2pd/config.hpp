#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "a2pd/attacks.hpp"
#include "a2pd/distill.hpp"
#include "a2pd/dqn.hpp"
#include "a2pd/gridworld.hpp"

namespace a2pd {

// Experiment configuration: JSON in, strict about keys (unknown keys are
// an error, so a typo in a sweep script cannot silently fall back to a
// default). Missing keys take the documented defaults.

struct CollectConfig {
    std::size_t n = 20000;
    TeacherMode mode = TeacherMode::OneHot;
    double explore_eps = 0.05;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "runs/default";
    GridConfig env;
    DqnConfig teacher;
    CollectConfig collect;
    DistillConfig distill;
    AttackSpec advtrain_attack{AttackFamily::Pgd, 8.0 / 255.0, 10, 1, GradProjection::Sign};
    std::vector<AttackSpec> attacks;
    std::size_t eval_episodes = 50;

    void validate() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);
nlohmann::json experiment_config_json(const ExperimentConfig& cfg);

AttackSpec parse_attack_spec(const nlohmann::json& j);
nlohmann::json attack_spec_json(const AttackSpec& spec);

// FNV-1a over the canonical (sorted-key) dump.
std::string config_hash(const ExperimentConfig& cfg);

// Sidecar metadata written next to every artifact; the binary and CSV
// formats themselves stay exactly as documented.
constexpr std::uint32_t kArtifactFormatVersion = 1;

void write_artifact_meta(const std::string& artifact_path, const std::string& cfg_hash,
                         std::uint64_t seed, const std::string& command);

struct ArtifactMeta {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::uint32_t format_version = 0;
    std::string command;
};

ArtifactMeta read_artifact_meta(const std::string& artifact_path);

} // namespace a2pd

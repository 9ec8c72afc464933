#pragma once

#include "zsil/env/domain.hpp"
#include "zsil/eval/harness.hpp"
#include "zsil/iq/iq_learn.hpp"
#include "zsil/ppo/ppo.hpp"
#include "zsil/vae/annealed_vae.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace zsil::pipeline {

// Overrides the configured run directory (the command line flag still wins).
inline constexpr const char* kRunDirEnv = "ZSIL_RUN_DIR";

struct DataConfig {
    int expert_episodes = 10;  // expert trajectories collected for imitation
    int random_episodes = 200; // random trajectories on the VAE training domain
    eval::ActingMode expert_mode = eval::ActingMode::greedy;
};

struct EvaluationConfig {
    int episodes = 20;
    eval::ActingMode mode = eval::ActingMode::greedy;
    // Also train a target-domain expert and its imitation (PPO-Target rows).
    bool target_baselines = false;
    std::vector<int> sweep_counts = {1, 3, 5, 10};
};

struct PipelineConfig {
    std::string name = "experiment";
    env::Scenario scenario = env::Scenario::combi;
    env::DomainSpec source;
    env::DomainSpec target;
    env::DomainSpec vae_training;
    vae::VaeConfig vae;
    ppo::PpoConfig ppo;
    iq::IqConfig iq;
    DataConfig data;
    EvaluationConfig evaluation;
    std::uint64_t seed = 0;
    std::string run_dir = "runs/experiment";
};

nlohmann::json to_json(const PipelineConfig& config);

// Parses, fills defaults and checks every invariant. Throws ConfigError
// listing each violation with its field path.
PipelineConfig validate_config(const nlohmann::json& raw);
PipelineConfig load_config(const std::filesystem::path& path);

// Hex digest of the normalized config with the run directory excluded.
std::string config_hash(const PipelineConfig& config);

enum class Stage { expert, vae, encode, iq, evaluate };
inline constexpr Stage kAllStages[] = {Stage::expert, Stage::vae, Stage::encode, Stage::iq, Stage::evaluate};

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);
// Comma-separated list; "all" selects every stage.
std::vector<Stage> parse_stages(const std::string& list);
std::vector<Stage> stage_dependencies(Stage s);

struct StageRecord {
    bool complete = false;
    std::string completed_at;
    std::map<std::string, std::string> artifacts; // name -> path relative to the run directory
};

struct RunManifest {
    std::string config_hash;
    std::string created;
    std::string updated;
    std::map<std::string, StageRecord> stages;

    bool complete(Stage s) const;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

struct RunOptions {
    std::vector<Stage> stages{std::begin(kAllStages), std::end(kAllStages)};
    bool force = false;
    std::function<void(const std::string&)> log;
};

// Resolved run directory: explicit > environment variable > config.
std::filesystem::path resolve_run_dir(const PipelineConfig& config, const std::string& explicit_dir = {});

// Runs the requested stages in pipeline order inside `run_dir`. Completed
// stages are skipped unless forced; a stage whose prerequisites are neither
// complete nor requested raises DependencyError.
RunManifest run_pipeline(const PipelineConfig& config, const std::filesystem::path& run_dir,
                         const RunOptions& options = {});

// Reads run_dir/manifest.json; an absent manifest yields an empty one.
RunManifest read_run_manifest(const std::filesystem::path& run_dir);

// Artifact path recorded by a completed stage; throws DependencyError otherwise.
std::filesystem::path artifact(const RunManifest& manifest, const std::filesystem::path& run_dir, Stage stage,
                               const std::string& name);

} // namespace zsil::pipeline

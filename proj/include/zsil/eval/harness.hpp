#pragma once

#include "zsil/env/actor.hpp"
#include "zsil/env/domain.hpp"
#include "zsil/iq/iq_learn.hpp"
#include "zsil/traj/archive.hpp"
#include "zsil/vae/annealed_vae.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace zsil::eval {

// Declaration order is the row order of the results table.
enum class AgentKind { random, ppo_source, ppo_target, ppo_transfer, ppo_source_iq, ppo_target_iq, ours };
enum class ActingMode { greedy, stochastic };

std::string to_string(AgentKind kind);
AgentKind agent_kind_from_string(const std::string& s);
std::string to_string(ActingMode mode);
ActingMode acting_mode_from_string(const std::string& s);
// Display name used in the results table, e.g. "PPO-Source-IQ".
std::string display_name(AgentKind kind);
// Role of the domain the agent is scored on in the results table.
env::Role evaluation_role(AgentKind kind);

struct AgentSpec {
    AgentKind kind = AgentKind::random;
    std::string policy_checkpoint; // ppo_source, ppo_target, ppo_transfer
    std::string vae_checkpoint;    // *_iq, ours
    std::string q_checkpoint;      // *_iq, ours
    ActingMode mode = ActingMode::greedy;
    std::string checkpoint_label = "best"; // which training checkpoint was loaded

    // Throws ContractViolation when a checkpoint required by `kind` is missing.
    void validate() const;
};

void to_json(nlohmann::json& j, const AgentSpec& a);
void from_json(const nlohmann::json& j, AgentSpec& a);

// Encodes the observation through the VAE (posterior mean) and acts on Q.
class LatentQActor final : public env::Actor {
public:
    LatentQActor(vae::VaeNet vae, iq::QNetwork q, bool greedy, std::string label = "latent_q");

    int act(const env::Observation& obs, std::mt19937_64& rng) override;
    std::string name() const override { return label_; }

private:
    vae::VaeNet vae_;
    iq::QNetwork q_;
    bool greedy_;
    std::string label_;
};

// Loads the checkpoints named by `agent` and checks them against the domain.
std::unique_ptr<env::Actor> make_actor(const AgentSpec& agent, const env::DomainSpec& domain);

struct EvalReport {
    AgentSpec agent;
    env::DomainSpec domain;
    std::vector<double> episode_rewards;
    std::vector<std::uint64_t> episode_seeds;
    std::uint64_t seed = 0;
    double mean = 0.0;
    double std = 0.0; // population

    // Throws ContractViolation when empty or when mean/std disagree with the episodes.
    void validate() const;
};

void to_json(nlohmann::json& j, const EvalReport& r);

struct RewardStats {
    double mean = 0.0;
    double std = 0.0;
};
RewardStats reward_stats(const std::vector<double>& rewards);

// Episode i is reset with seed + i.
EvalReport evaluate_actor(env::Actor& actor, const AgentSpec& agent, const env::DomainSpec& domain, int episodes,
                          std::uint64_t seed);
EvalReport evaluate_agent(const AgentSpec& agent, const env::DomainSpec& domain, int episodes = 20,
                          std::uint64_t seed = 0);

// CSV: agent,environment,domain,mean,std,episodes,seed,checkpoint. Rows sorted by agent kind.
std::string results_table(std::vector<EvalReport> reports);

struct SweepPoint {
    int n_trajectories = 0;
    double mean = 0.0;
    double std = 0.0;
};

struct SweepOptions {
    int episodes = 20;
    ActingMode mode = ActingMode::greedy;
    std::function<void(const std::string&)> log;
};

// Retrains IQ on the first n episodes for each n and evaluates in `domain`.
std::vector<SweepPoint> trajectory_efficiency_sweep(const traj::LatentTrajectorySet& expert,
                                                    const std::filesystem::path& vae_checkpoint,
                                                    const std::vector<int>& counts, const iq::IqConfig& config,
                                                    const env::DomainSpec& domain, std::uint64_t seed,
                                                    const SweepOptions& options = {});

std::string sweep_csv(const std::vector<SweepPoint>& points);

} // namespace zsil::eval

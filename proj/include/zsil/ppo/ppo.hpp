#pragma once

#include "zsil/common/error.hpp"
#include "zsil/env/actor.hpp"
#include "zsil/env/domain.hpp"

#include <json.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace zsil::ppo {

struct PpoConfig {
    std::int64_t total_steps = 200'000;
    int batch_size = 128;
    int rollout_steps = 2048;
    int epochs = 10;
    double learning_rate = 1e-4;
    // Linear decay reaches zero here; a shorter run stops partway down the ramp.
    std::int64_t lr_decay_steps = 1'000'000;
    double clip_epsilon = 0.2;
    double value_coef = 0.5;
    double entropy_coef = 0.0;
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double max_grad_norm = 0.5;
    int reward_cap = 500;         // training stops once evaluation reaches it
    std::int64_t eval_every = 10'000;
    int eval_episodes = 10;
    int num_actions = 2;

    // Field errors prefixed by `prefix` (e.g. "expert.ppo"); empty when valid.
    std::vector<FieldError> validate(const std::string& prefix) const;
};

// Mario-scale constants kept for reference; no Mario environment ships.
PpoConfig mario_ppo_config();

void to_json(nlohmann::json& j, const PpoConfig& c);
void from_json(const nlohmann::json& j, PpoConfig& c);

// Nature-DQN torso over the 128x128x3 stacked observation (area-resampled to
// 84x84), with a policy-logit head and a scalar value head.
class PolicyNetImpl : public torch::nn::Module {
public:
    explicit PolicyNetImpl(int num_actions = env::kNumActions);

    struct Output {
        torch::Tensor logits; // [B, A]
        torch::Tensor value;  // [B]
    };

    // obs: [B, 3, 128, 128] in [0, 1].
    Output forward(const torch::Tensor& obs);
    torch::Tensor probabilities(const torch::Tensor& obs);

    int num_actions() const noexcept { return num_actions_; }

private:
    int num_actions_;
    torch::nn::Sequential torso_{nullptr};
    torch::nn::Linear policy_head_{nullptr};
    torch::nn::Linear value_head_{nullptr};
};
TORCH_MODULE(PolicyNet);

struct Advantages {
    std::vector<float> advantages;
    std::vector<float> returns;
};

// Generalized advantage estimation. next_values[t] is the value of the state
// reached by step t: 0 after a failure, the bootstrap value after a
// truncation. `episode_ends[t]` stops the recursion at episode boundaries.
Advantages compute_gae(std::span<const float> rewards, std::span<const float> values,
                       std::span<const float> next_values, std::span<const std::uint8_t> episode_ends,
                       double gamma, double lambda);

struct RolloutBuffer {
    explicit RolloutBuffer(int capacity);

    void add(const env::Observation& obs, int action, float log_prob, float reward, float value);
    bool full() const noexcept { return size == capacity; }
    void clear() noexcept { size = 0; }

    int capacity;
    int size = 0;
    std::vector<std::uint8_t> observations;
    std::vector<std::int64_t> actions;
    std::vector<float> log_probs;
    std::vector<float> rewards;
    std::vector<float> values;
    std::vector<float> next_values;
    std::vector<std::uint8_t> episode_ends;
    std::vector<float> advantages;
    std::vector<float> returns;
};

torch::Tensor normalize_advantages(const torch::Tensor& advantages);

// mean(min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)), to be maximized.
torch::Tensor clipped_surrogate(const torch::Tensor& ratio, const torch::Tensor& advantages, double clip_epsilon);

struct PpoLoss {
    torch::Tensor total; // -surrogate + value_coef * mse - entropy_coef * entropy
    torch::Tensor surrogate;
    torch::Tensor value_loss;
    torch::Tensor entropy;
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
};

PpoLoss ppo_loss(const torch::Tensor& new_log_probs, const torch::Tensor& old_log_probs,
                 const torch::Tensor& advantages, const torch::Tensor& predicted_values,
                 const torch::Tensor& returns, const torch::Tensor& entropy, const PpoConfig& config);

struct UpdateStats {
    double surrogate = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
};

// `epochs` passes of shuffled minibatches over a full buffer with computed
// advantages. Throws DiagnosticsError on a non-finite loss.
UpdateStats ppo_update(PolicyNet& net, torch::optim::Adam& optimizer, const RolloutBuffer& buffer,
                       const PpoConfig& config, std::mt19937_64& rng);

class PolicyActor final : public env::Actor {
public:
    PolicyActor(PolicyNet net, bool greedy, std::string label = "ppo");

    int act(const env::Observation& obs, std::mt19937_64& rng) override;
    std::string name() const override { return label_; }

private:
    PolicyNet net_;
    bool greedy_;
    std::string label_;
};

// Draws an index from a probability vector with one uniform variate.
int sample_categorical(std::span<const double> probs, std::mt19937_64& rng);

struct CurvePoint {
    std::int64_t step = 0;
    double mean_eval_reward = 0.0;
    double std_eval_reward = 0.0;
};

struct ExpertResult {
    PolicyNet final_policy{nullptr};
    PolicyNet best_policy{nullptr};
    std::vector<CurvePoint> curve;
    double best_eval = 0.0;
    std::int64_t best_step = 0;
    std::int64_t steps = 0;
    bool stopped_early = false;
    bool diverged = false; // evaluation still below the random baseline after half the budget
};

struct ExpertOptions {
    std::function<void(const std::string&)> log;
    // When set, curve CSV and best/final checkpoints are written here as training runs.
    std::filesystem::path output_dir;
};

ExpertResult train_expert(const env::DomainSpec& domain, const PpoConfig& config, std::uint64_t seed,
                          const ExpertOptions& options = {});

struct PolicyEvaluation {
    std::vector<double> episode_rewards;
    double mean = 0.0;
    double std = 0.0;
};

PolicyEvaluation evaluate_policy(PolicyNet& net, const env::DomainSpec& domain, int episodes, std::uint64_t seed,
                                 bool greedy);

void save_policy(const std::filesystem::path& stem, const PolicyNet& net, const PpoConfig& config,
                 const nlohmann::json& extra = nlohmann::json::object());
PolicyNet load_policy(const std::filesystem::path& stem);

void write_learning_curve(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);

} // namespace zsil::ppo

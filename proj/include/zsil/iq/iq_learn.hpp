#pragma once

#include "zsil/common/error.hpp"
#include "zsil/traj/archive.hpp"

#include <json.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace zsil::iq {

struct IqConfig {
    double gamma = 0.99;
    double alpha = 0.5;
    double learning_rate = 1e-4;
    std::int64_t train_steps = 100'000;
    int batch_size = 256;
    int hidden_width = 64;
    int num_actions = 2;
    int latent_dim = 10; // must match the VAE that produced the latent archive

    std::vector<FieldError> validate(const std::string& prefix) const;
};

void to_json(nlohmann::json& j, const IqConfig& c);
void from_json(const nlohmann::json& j, IqConfig& c);

// Latent state -> one soft Q-value per action; two hidden ReLU layers.
class QNetworkImpl : public torch::nn::Module {
public:
    QNetworkImpl(int latent_dim, int num_actions, int hidden_width = 64);

    torch::Tensor forward(const torch::Tensor& z); // [B, D] -> [B, A]

    int latent_dim() const noexcept { return latent_dim_; }
    int num_actions() const noexcept { return num_actions_; }

private:
    int latent_dim_;
    int num_actions_;
    torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(QNetwork);

// logsumexp over the action axis.
torch::Tensor soft_value(const torch::Tensor& q);
torch::Tensor phi(const torch::Tensor& x, double alpha);

struct ExpertBatch {
    torch::Tensor states;      // [B, D]
    torch::Tensor actions;     // [B] int64
    torch::Tensor next_states; // [B, D]
    torch::Tensor dones;       // [B] float, 1 where the transition ended the episode
};

// Every transition of the archive, in episode order.
ExpertBatch all_transitions(const traj::LatentTrajectorySet& expert);

struct IqObjective {
    torch::Tensor objective;   // expert_term - value_term, to maximize
    torch::Tensor expert_term; // mean phi(Q(z,a) - g (1-done) V(z'))
    torch::Tensor value_term;  // mean (V(z) - g (1-done) V(z'))
};

// Objective from per-sample Q(z,a), V(z), V(z').
IqObjective iq_objective(const torch::Tensor& q_sa, const torch::Tensor& v_state, const torch::Tensor& v_next,
                         const torch::Tensor& dones, double gamma, double alpha);
// Objective of a Q-network over a batch of expert transitions.
IqObjective iq_objective(QNetwork& q, const ExpertBatch& batch, const IqConfig& config);

struct IqLogEntry {
    std::int64_t step = 0;
    double objective = 0.0;
    double expert_term = 0.0;
    double value_term = 0.0;
};

struct IqTrainOptions {
    std::function<void(const std::string&)> log;
    std::int64_t log_every = 1000;
};

struct IqTrainResult {
    QNetwork q{nullptr};
    std::vector<IqLogEntry> log; // every log_every steps and the last step
};

// Adam ascent on the objective over uniformly drawn expert minibatches.
IqTrainResult train_iq(const traj::LatentTrajectorySet& expert, const IqConfig& config, std::uint64_t seed,
                       const IqTrainOptions& options = {});

// Boltzmann policy softmax(Q(z, .)) -> [B, A].
torch::Tensor recover_policy(QNetwork& q, const torch::Tensor& z);
// argmax_a Q(z, a), lowest index on ties -> [B].
torch::Tensor greedy_actions(QNetwork& q, const torch::Tensor& z);
// Q(z,a) - g (1-done) V(z') -> [B].
torch::Tensor recover_reward(QNetwork& q, const torch::Tensor& z, const torch::Tensor& actions,
                             const torch::Tensor& next_z, const torch::Tensor& dones, double gamma);

void write_training_log(const std::filesystem::path& path, const std::vector<IqLogEntry>& log);

void save_q(const std::filesystem::path& stem, const QNetwork& q, const IqConfig& config,
            const nlohmann::json& extra = nlohmann::json::object());
QNetwork load_q(const std::filesystem::path& stem);

} // namespace zsil::iq

#pragma once

#include "zsil/common/error.hpp"
#include "zsil/traj/archive.hpp"

#include <json.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace zsil::vae {

struct VaeConfig {
    int latent_dim = 10;
    double beta = 4.0;
    double c_max = 25.0;
    double anneal_fraction = 0.8;
    double learning_rate = 1e-4;
    std::int64_t train_steps = 4000;
    int batch_size = 32;
    std::vector<int> conv_channels = {32, 64, 128, 256};
    int fc_width = 1028;
    int groupnorm_size = 32;
    int image_size = 128;
    int image_channels = 3;
    std::int64_t checkpoint_every = 1000;

    std::vector<FieldError> validate(const std::string& prefix) const;
};

void to_json(nlohmann::json& j, const VaeConfig& c);
void from_json(const nlohmann::json& j, VaeConfig& c);

// Posterior q(z|x) = N(mean, exp(log_variance)) per row; `sample` is empty
// unless sampling was requested.
struct LatentCode {
    torch::Tensor mean;         // [B, D]
    torch::Tensor log_variance; // [B, D]
    torch::Tensor sample;       // [B, D] or undefined
};

struct AnnealSchedule {
    double c_max = 25.0;
    double anneal_fraction = 0.8;
    std::int64_t total_steps = 1;
};

// Linear ramp 0 -> c_max over the first anneal_fraction * total_steps steps.
double capacity_at(std::int64_t step, const AnnealSchedule& schedule);

// KL(N(mean, exp(log_variance)) || N(0, I)) in closed form.
double kl_divergence(std::span<const double> mean, std::span<const double> log_variance);
// Per-row KL for [B, D] tensors -> [B].
torch::Tensor kl_divergence(const torch::Tensor& mean, const torch::Tensor& log_variance);

// Per-row Bernoulli negative log-likelihood summed over pixels -> [B].
torch::Tensor reconstruction_bce(const torch::Tensor& target, const torch::Tensor& recon);
torch::Tensor reconstruction_bce_logits(const torch::Tensor& target, const torch::Tensor& logits);

struct VaeLoss {
    torch::Tensor total;          // recon + beta * |kl - C|
    torch::Tensor reconstruction; // batch mean of per-image BCE
    torch::Tensor kl;             // batch mean of per-image KL
};

// Negated annealed objective, for minimization. `recon` holds per-pixel
// Bernoulli means in [0, 1]. With C = 0 the absolute value is inert and this
// is the beta-VAE loss. Throws ContractViolation for negative beta.
VaeLoss annealed_loss(const torch::Tensor& obs, const torch::Tensor& recon, const torch::Tensor& mean,
                      const torch::Tensor& log_variance, double beta, double capacity);
// Same, from decoder logits (numerically stable form used in training).
VaeLoss annealed_loss_logits(const torch::Tensor& obs, const torch::Tensor& logits, const torch::Tensor& mean,
                             const torch::Tensor& log_variance, double beta, double capacity);

// mean + exp(log_variance / 2) * noise
torch::Tensor reparameterize(const torch::Tensor& mean, const torch::Tensor& log_variance, const torch::Tensor& noise);

// Groups for a GroupNorm over `channels`: channels / group_size when that
// divides evenly, else a single group.
int group_count(int channels, int group_size);

// Convolutional encoder/decoder. Each conv is 4x4, stride 2, padding 1, and is
// followed by GroupNorm and LeakyReLU; the decoder mirrors the encoder with
// transposed convolutions and emits per-pixel logits.
class VaeNetImpl : public torch::nn::Module {
public:
    explicit VaeNetImpl(VaeConfig config);

    // x: [B, C, H, W] in [0, 1].
    LatentCode encode(const torch::Tensor& x, bool sample = false);
    torch::Tensor decode_logits(const torch::Tensor& z);
    // Per-pixel Bernoulli means in [0, 1].
    torch::Tensor decode(const torch::Tensor& z);

    struct Output {
        torch::Tensor logits;
        torch::Tensor mean;
        torch::Tensor log_variance;
        torch::Tensor z;
    };
    // Reparameterized pass with caller-supplied standard-normal noise.
    Output forward(const torch::Tensor& x, const torch::Tensor& noise);

    const VaeConfig& config() const noexcept { return config_; }

private:
    VaeConfig config_;
    int bottleneck_size_ = 0;
    torch::nn::Sequential encoder_{nullptr};
    torch::nn::Linear encoder_fc_{nullptr};
    torch::nn::Linear mean_head_{nullptr};
    torch::nn::Linear log_variance_head_{nullptr};
    torch::nn::Sequential decoder_fc_{nullptr};
    torch::nn::Sequential decoder_{nullptr};
};
TORCH_MODULE(VaeNet);

// Stacked observations (HWC bytes) -> posterior means [N, D], batched.
torch::Tensor encode_means(VaeNet& net, std::span<const std::uint8_t* const> images, int batch_size = 64);

struct VaeLogEntry {
    std::int64_t step = 0;
    double loss = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
    double capacity = 0.0;
};

struct VaeTrainOptions {
    std::function<void(const std::string&)> log;
    std::filesystem::path checkpoint_dir; // periodic checkpoints when non-empty
    std::int64_t log_every = 50;
};

struct VaeTrainResult {
    VaeNet net{nullptr};
    std::vector<VaeLogEntry> log; // one entry per step
};

// Adam on the annealed loss over uniformly drawn minibatches of all
// observations in `dataset`. Throws ContractViolation on an empty dataset and
// DiagnosticsError on a non-finite loss.
VaeTrainResult train_vae(const traj::TrajectorySet& dataset, const VaeConfig& config, std::uint64_t seed,
                         const VaeTrainOptions& options = {});

void write_training_log(const std::filesystem::path& path, const std::vector<VaeLogEntry>& log);

void save_vae(const std::filesystem::path& stem, const VaeNet& net, const nlohmann::json& extra = nlohmann::json::object());
VaeNet load_vae(const std::filesystem::path& stem);

struct TraversalOptions {
    int values_per_dim = 7;
    double span = 3.0;          // sweep half-width in standard deviations
    bool prior_scale = false;   // sweep in prior (unit) rather than posterior deviations
};

// Decoded images [D, V, C, H, W] in [0, 1]: row d sweeps latent d across
// mean_d +/- span * sd_d with the other coordinates held at the posterior mean.
torch::Tensor latent_traversal(VaeNet& net, const torch::Tensor& obs, const TraversalOptions& options = {});

// Tiles a [R, V, C, H, W] grid into one HWC byte image.
std::vector<std::uint8_t> tile_grid(const torch::Tensor& cells, int& height, int& width);

} // namespace zsil::vae

#include "zsil/vae/annealed_vae.hpp"

#include "zsil/common/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace zsil::vae {
using nlohmann::json;

std::vector<FieldError> VaeConfig::validate(const std::string& prefix) const {
    std::vector<FieldError> errs;
    const auto bad = [&](const char* field, const std::string& msg) { errs.push_back({prefix + "." + field, msg}); };
    if (latent_dim < 1) bad("latent_dim", "must be >= 1");
    if (!(beta >= 0)) bad("beta", "must be >= 0");
    if (!(c_max >= 0)) bad("c_max", "must be >= 0");
    if (!(anneal_fraction > 0 && anneal_fraction <= 1)) bad("anneal_fraction", "must lie in (0, 1]");
    if (!(learning_rate > 0)) bad("learning_rate", "must be positive");
    if (train_steps < 1) bad("train_steps", "must be >= 1");
    if (batch_size < 1) bad("batch_size", "must be >= 1");
    if (conv_channels.empty()) bad("conv_channels", "needs at least one layer");
    for (int c : conv_channels) {
        if (c < 1) bad("conv_channels", "channel counts must be positive");
    }
    if (fc_width < 1) bad("fc_width", "must be positive");
    if (groupnorm_size < 1) bad("groupnorm_size", "must be positive");
    if (image_channels < 1) bad("image_channels", "must be positive");
    const int factor = 1 << std::min<std::size_t>(conv_channels.size(), 20);
    if (image_size < factor || image_size % factor != 0) {
        bad("image_size", "must be divisible by 2^(number of conv layers)");
    }
    if (checkpoint_every < 1) bad("checkpoint_every", "must be >= 1");
    return errs;
}

void to_json(json& j, const VaeConfig& c) {
    j = {{"latent_dim", c.latent_dim},         {"beta", c.beta},
         {"c_max", c.c_max},                   {"anneal_fraction", c.anneal_fraction},
         {"learning_rate", c.learning_rate},   {"train_steps", c.train_steps},
         {"batch_size", c.batch_size},         {"conv_channels", c.conv_channels},
         {"fc_width", c.fc_width},             {"groupnorm_size", c.groupnorm_size},
         {"image_size", c.image_size},         {"image_channels", c.image_channels},
         {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const json& j, VaeConfig& c) {
    const VaeConfig d;
    c.latent_dim = j.value("latent_dim", d.latent_dim);
    c.beta = j.value("beta", d.beta);
    c.c_max = j.value("c_max", d.c_max);
    c.anneal_fraction = j.value("anneal_fraction", d.anneal_fraction);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.train_steps = j.value("train_steps", d.train_steps);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.conv_channels = j.value("conv_channels", d.conv_channels);
    c.fc_width = j.value("fc_width", d.fc_width);
    c.groupnorm_size = j.value("groupnorm_size", d.groupnorm_size);
    c.image_size = j.value("image_size", d.image_size);
    c.image_channels = j.value("image_channels", d.image_channels);
    c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
}

double capacity_at(std::int64_t step, const AnnealSchedule& schedule) {
    if (schedule.total_steps < 1) throw ContractViolation("capacity_at: total_steps must be >= 1");
    if (step < 0 || step > schedule.total_steps) {
        throw ContractViolation("capacity_at: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(schedule.total_steps) + "]");
    }
    const double ramp = schedule.anneal_fraction * static_cast<double>(schedule.total_steps);
    if (static_cast<double>(step) >= ramp) return schedule.c_max;
    return schedule.c_max * static_cast<double>(step) / ramp;
}

double kl_divergence(std::span<const double> mean, std::span<const double> log_variance) {
    if (mean.size() != log_variance.size()) throw DimensionMismatch("kl_divergence: length mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        // expm1(l) - l is exactly representable near l = 0, unlike exp(l) - 1 - l
        kl += 0.5 * (mean[i] * mean[i] + std::expm1(log_variance[i]) - log_variance[i]);
    }
    return kl;
}

torch::Tensor kl_divergence(const torch::Tensor& mean, const torch::Tensor& log_variance) {
    return 0.5 * (mean.pow(2) + torch::expm1(log_variance) - log_variance).sum(-1);
}

torch::Tensor reconstruction_bce(const torch::Tensor& target, const torch::Tensor& recon) {
    constexpr double eps = 1e-7;
    const auto p = recon.clamp(eps, 1.0 - eps);
    const auto nll = -(target * torch::log(p) + (1 - target) * torch::log1p(-p));
    return nll.flatten(1).sum(1);
}

torch::Tensor reconstruction_bce_logits(const torch::Tensor& target, const torch::Tensor& logits) {
    const auto nll = torch::binary_cross_entropy_with_logits(logits, target, {}, {}, at::Reduction::None);
    return nll.flatten(1).sum(1);
}

namespace {

VaeLoss combine(const torch::Tensor& per_image_nll, const torch::Tensor& mean, const torch::Tensor& log_variance,
                double beta, double capacity) {
    if (!(beta >= 0)) throw ContractViolation("annealed_loss: beta must be non-negative");
    VaeLoss l;
    l.reconstruction = per_image_nll.mean();
    l.kl = kl_divergence(mean, log_variance).mean();
    l.total = l.reconstruction + beta * (l.kl - capacity).abs();
    return l;
}

void check_shapes(const torch::Tensor& obs, const torch::Tensor& recon, const torch::Tensor& mean,
                  const torch::Tensor& log_variance) {
    if (obs.sizes() != recon.sizes()) throw DimensionMismatch("annealed_loss: observation/reconstruction shapes differ");
    if (mean.sizes() != log_variance.sizes()) throw DimensionMismatch("annealed_loss: mean/log-variance shapes differ");
    if (mean.dim() != 2 || mean.size(0) != obs.size(0)) throw DimensionMismatch("annealed_loss: batch sizes differ");
}

} // namespace

VaeLoss annealed_loss(const torch::Tensor& obs, const torch::Tensor& recon, const torch::Tensor& mean,
                      const torch::Tensor& log_variance, double beta, double capacity) {
    check_shapes(obs, recon, mean, log_variance);
    return combine(reconstruction_bce(obs, recon), mean, log_variance, beta, capacity);
}

VaeLoss annealed_loss_logits(const torch::Tensor& obs, const torch::Tensor& logits, const torch::Tensor& mean,
                             const torch::Tensor& log_variance, double beta, double capacity) {
    check_shapes(obs, logits, mean, log_variance);
    return combine(reconstruction_bce_logits(obs, logits), mean, log_variance, beta, capacity);
}

torch::Tensor reparameterize(const torch::Tensor& mean, const torch::Tensor& log_variance, const torch::Tensor& noise) {
    return mean + torch::exp(0.5 * log_variance) * noise;
}

int group_count(int channels, int group_size) {
    if (group_size > 0 && channels % group_size == 0 && channels >= group_size) return channels / group_size;
    return 1;
}

VaeNetImpl::VaeNetImpl(VaeConfig config) : config_(std::move(config)) {
    if (const auto errs = config_.validate("vae"); !errs.empty()) throw ConfigError(errs);
    namespace nn = torch::nn;
    const auto& ch = config_.conv_channels;
    const int layers = static_cast<int>(ch.size());
    const int spatial = config_.image_size >> layers;
    bottleneck_size_ = ch.back() * spatial * spatial;
    const auto norm = [&](int c) { return nn::GroupNorm(nn::GroupNormOptions(group_count(c, config_.groupnorm_size), c)); };

    nn::Sequential enc;
    int in = config_.image_channels;
    for (int c : ch) {
        enc->push_back(nn::Conv2d(nn::Conv2dOptions(in, c, 4).stride(2).padding(1)));
        enc->push_back(norm(c));
        enc->push_back(nn::LeakyReLU());
        in = c;
    }
    enc->push_back(nn::Flatten());
    encoder_ = register_module("encoder", enc);
    encoder_fc_ = register_module("encoder_fc", nn::Linear(bottleneck_size_, config_.fc_width));
    mean_head_ = register_module("mean_head", nn::Linear(config_.fc_width, config_.latent_dim));
    log_variance_head_ = register_module("log_variance_head", nn::Linear(config_.fc_width, config_.latent_dim));

    decoder_fc_ = register_module(
        "decoder_fc", nn::Sequential(nn::Linear(config_.latent_dim, config_.fc_width), nn::LeakyReLU(),
                                     nn::Linear(config_.fc_width, bottleneck_size_), nn::LeakyReLU(),
                                     nn::Unflatten(nn::UnflattenOptions(1, {ch.back(), spatial, spatial}))));
    nn::Sequential dec;
    for (int i = layers - 1; i > 0; --i) {
        dec->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(ch[i], ch[i - 1], 4).stride(2).padding(1)));
        dec->push_back(norm(ch[i - 1]));
        dec->push_back(nn::LeakyReLU());
    }
    dec->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(ch[0], config_.image_channels, 4).stride(2).padding(1)));
    decoder_ = register_module("decoder", dec);
}

LatentCode VaeNetImpl::encode(const torch::Tensor& x, bool sample) {
    const auto& c = config_;
    if (x.dim() != 4 || x.size(1) != c.image_channels || x.size(2) != c.image_size || x.size(3) != c.image_size) {
        throw DimensionMismatch("VaeNet::encode: expected [B, " + std::to_string(c.image_channels) + ", " +
                                std::to_string(c.image_size) + ", " + std::to_string(c.image_size) + "] input");
    }
    const auto h = torch::leaky_relu(encoder_fc_->forward(encoder_->forward(x)), 0.01);
    LatentCode code{mean_head_->forward(h), log_variance_head_->forward(h), {}};
    require_finite(code.mean, "encoder mean");
    require_finite(code.log_variance, "encoder log-variance");
    if (sample) code.sample = reparameterize(code.mean, code.log_variance, torch::randn_like(code.mean));
    return code;
}

torch::Tensor VaeNetImpl::decode_logits(const torch::Tensor& z) {
    if (z.dim() != 2 || z.size(1) != config_.latent_dim) {
        throw DimensionMismatch("VaeNet::decode: expected [B, " + std::to_string(config_.latent_dim) + "] latents");
    }
    return decoder_->forward(decoder_fc_->forward(z));
}

torch::Tensor VaeNetImpl::decode(const torch::Tensor& z) { return torch::sigmoid(decode_logits(z)); }

VaeNetImpl::Output VaeNetImpl::forward(const torch::Tensor& x, const torch::Tensor& noise) {
    auto code = encode(x);
    auto z = reparameterize(code.mean, code.log_variance, noise);
    return {decode_logits(z), code.mean, code.log_variance, z};
}

torch::Tensor encode_means(VaeNet& net, std::span<const std::uint8_t* const> images, int batch_size) {
    torch::NoGradGuard guard;
    const int size = net->config().image_size;
    const int channels = net->config().image_channels;
    std::vector<torch::Tensor> chunks;
    for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(batch_size), images.size() - start);
        chunks.push_back(net->encode(images_to_tensor(images.subspan(start, n), size, size, channels)).mean);
    }
    if (chunks.empty()) return torch::empty({0, net->config().latent_dim});
    return torch::cat(chunks, 0);
}

} // namespace zsil::vae

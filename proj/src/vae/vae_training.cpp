#include "zsil/vae/annealed_vae.hpp"

#include "zsil/common/checkpoint.hpp"
#include "zsil/common/seed.hpp"
#include "zsil/common/tensor.hpp"

#include <fstream>
#include <random>
#include <sstream>

namespace zsil::vae {
namespace fs = std::filesystem;
using nlohmann::json;

VaeTrainResult train_vae(const traj::TrajectorySet& dataset, const VaeConfig& config, std::uint64_t seed,
                         const VaeTrainOptions& options) {
    if (const auto errs = config.validate("vae"); !errs.empty()) throw ConfigError(errs);
    const std::size_t obs_size = dataset.observation_size();
    const auto expected = static_cast<std::size_t>(config.image_size) * config.image_size * config.image_channels;
    if (dataset.episodes.empty()) throw ContractViolation("train_vae: empty dataset");
    if (obs_size != expected) throw DimensionMismatch("train_vae: dataset observations do not match the VAE input size");

    std::vector<const std::uint8_t*> images;
    for (const auto& e : dataset.episodes) {
        for (std::size_t k = 0; k <= e.length(); ++k) images.push_back(e.observations.data() + k * obs_size);
    }

    torch::manual_seed(derive_seed(seed, "init"));
    VaeTrainResult result;
    result.net = VaeNet(config);
    result.net->train();
    torch::optim::Adam optimizer(result.net->parameters(), torch::optim::AdamOptions(config.learning_rate));
    torch::manual_seed(derive_seed(seed, "noise"));
    std::mt19937_64 rng(derive_seed(seed, "batches"));
    std::uniform_int_distribution<std::size_t> pick(0, images.size() - 1);
    const AnnealSchedule schedule{config.c_max, config.anneal_fraction, config.train_steps};

    std::vector<const std::uint8_t*> batch(static_cast<std::size_t>(config.batch_size));
    for (std::int64_t step = 0; step < config.train_steps; ++step) {
        for (auto& p : batch) p = images[pick(rng)];
        const auto x = images_to_tensor(batch, config.image_size, config.image_size, config.image_channels);
        const auto out = result.net->forward(x, torch::randn({x.size(0), config.latent_dim}));
        const double capacity = capacity_at(step, schedule);
        const auto loss = annealed_loss_logits(x, out.logits, out.mean, out.log_variance, config.beta, capacity);

        const double total = loss.total.item<double>();
        if (!std::isfinite(total)) {
            std::ostringstream msg;
            msg << "train_vae: non-finite loss at step " << step << " (reconstruction "
                << loss.reconstruction.item<double>() << ", kl " << loss.kl.item<double>() << ", capacity " << capacity
                << ")";
            throw DiagnosticsError(msg.str());
        }
        optimizer.zero_grad();
        loss.total.backward();
        optimizer.step();

        result.log.push_back({step, total, loss.reconstruction.item<double>(), loss.kl.item<double>(), capacity});
        if (options.log && (step % options.log_every == 0 || step + 1 == config.train_steps)) {
            const auto& e = result.log.back();
            std::ostringstream msg;
            msg << "vae step " << step << " loss " << e.loss << " recon " << e.reconstruction << " kl " << e.kl
                << " C " << e.capacity;
            options.log(msg.str());
        }
        if (!options.checkpoint_dir.empty() && (step + 1) % config.checkpoint_every == 0) {
            save_vae(options.checkpoint_dir / ("vae_step_" + std::to_string(step + 1)), result.net,
                     {{"step", step + 1}, {"seed", seed}});
        }
    }
    result.net->eval();
    return result;
}

void write_training_log(const fs::path& path, const std::vector<VaeLogEntry>& log) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << "step,loss,reconstruction,kl,capacity\n";
    for (const auto& e : log) os << e.step << ',' << e.loss << ',' << e.reconstruction << ',' << e.kl << ',' << e.capacity << '\n';
}

void save_vae(const fs::path& stem, const VaeNet& net, const json& extra) {
    json m = extra;
    m["kind"] = "vae";
    m["config"] = net->config();
    save_checkpoint(stem, *net, m);
}

VaeNet load_vae(const fs::path& stem) {
    const auto m = read_checkpoint_manifest(stem, "vae");
    VaeNet net(m.at("config").get<VaeConfig>());
    load_checkpoint_weights(stem, *net);
    net->eval();
    return net;
}

torch::Tensor latent_traversal(VaeNet& net, const torch::Tensor& obs, const TraversalOptions& options) {
    if (options.values_per_dim < 1) throw ContractViolation("latent_traversal: values_per_dim must be >= 1");
    torch::NoGradGuard guard;
    const auto x = obs.dim() == 3 ? obs.unsqueeze(0) : obs;
    const auto code = net->encode(x.slice(0, 0, 1));
    const auto mean = code.mean[0];
    const auto sd = options.prior_scale ? torch::ones_like(mean) : torch::exp(0.5 * code.log_variance[0]);
    const int dims = net->config().latent_dim;
    const int values = options.values_per_dim;

    std::vector<torch::Tensor> rows;
    for (int d = 0; d < dims; ++d) {
        auto z = mean.unsqueeze(0).repeat({values, 1});
        for (int v = 0; v < values; ++v) {
            // odd counts put the unmodified mean in the centre cell
            const double unit = values == 1 ? 0.0 : -1.0 + 2.0 * v / (values - 1);
            z[v][d] = mean[d] + unit * options.span * sd[d];
        }
        rows.push_back(net->decode(z));
    }
    return torch::stack(rows, 0);
}

std::vector<std::uint8_t> tile_grid(const torch::Tensor& cells, int& height, int& width) {
    if (cells.dim() != 5) throw DimensionMismatch("tile_grid: expected [R, V, C, H, W]");
    const auto r = cells.size(0), v = cells.size(1), c = cells.size(2), h = cells.size(3), w = cells.size(4);
    // [R, V, C, H, W] -> [R, H, V, W, C] -> [R*H, V*W, C]
    auto t = cells.detach().to(torch::kFloat32).clamp(0, 1).mul(255).round().to(torch::kUInt8);
    t = t.permute({0, 3, 1, 4, 2}).reshape({r * h, v * w, c}).contiguous();
    height = static_cast<int>(r * h);
    width = static_cast<int>(v * w);
    const auto* p = t.data_ptr<std::uint8_t>();
    return {p, p + t.numel()};
}

} // namespace zsil::vae

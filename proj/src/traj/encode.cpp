#include "zsil/traj/encode.hpp"

namespace zsil::traj {

LatentTrajectorySet encode_trajectories(vae::VaeNet& net, const TrajectorySet& set, const std::string& vae_checkpoint) {
    const auto& cfg = net->config();
    const std::vector<std::size_t> expected = {static_cast<std::size_t>(cfg.image_size),
                                               static_cast<std::size_t>(cfg.image_size),
                                               static_cast<std::size_t>(cfg.image_channels)};
    if (set.observation_shape != expected) throw DimensionMismatch("encode_trajectories: observation shape does not match the VAE input");
    set.validate();

    LatentTrajectorySet out;
    out.observation_shape = {static_cast<std::size_t>(cfg.latent_dim)};
    out.metadata = set.metadata;
    out.metadata.vae_checkpoint = vae_checkpoint;
    out.metadata.created = utc_timestamp();

    const std::size_t obs_size = set.observation_size();
    for (const auto& e : set.episodes) {
        std::vector<const std::uint8_t*> images;
        for (std::size_t t = 0; t <= e.length(); ++t) images.push_back(e.observations.data() + t * obs_size);
        const auto means = vae::encode_means(net, images).contiguous();
        Episode<float> latent;
        latent.observations.assign(means.data_ptr<float>(), means.data_ptr<float>() + means.numel());
        latent.actions = e.actions;
        latent.rewards = e.rewards;
        latent.dones = e.dones;
        out.episodes.push_back(std::move(latent));
    }
    return out;
}

} // namespace zsil::traj

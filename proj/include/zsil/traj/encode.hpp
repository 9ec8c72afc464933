#pragma once

#include "zsil/traj/archive.hpp"
#include "zsil/vae/annealed_vae.hpp"

#include <string>

namespace zsil::traj {

// Replaces every observation by its posterior mean. Actions, rewards and
// dones are copied verbatim; `vae_checkpoint` is recorded in the metadata.
LatentTrajectorySet encode_trajectories(vae::VaeNet& net, const TrajectorySet& set,
                                        const std::string& vae_checkpoint = {});

} // namespace zsil::traj

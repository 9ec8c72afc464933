#pragma once

#include "zsil/env/actor.hpp"
#include "zsil/env/domain.hpp"
#include "zsil/traj/archive.hpp"

#include <cstdint>

namespace zsil::ppo {

// Rolls out `n_episodes` complete episodes. Episode i resets with seed + i;
// the actor's own randomness is seeded from `seed` as well.
traj::TrajectorySet collect_trajectories(env::Actor& actor, const env::DomainSpec& domain, int n_episodes,
                                         std::uint64_t seed);

} // namespace zsil::ppo

#include "zsil/ppo/collect.hpp"

#include "zsil/common/error.hpp"
#include "zsil/common/seed.hpp"

namespace zsil::ppo {

traj::TrajectorySet collect_trajectories(env::Actor& actor, const env::DomainSpec& domain, int n_episodes,
                                         std::uint64_t seed) {
    if (n_episodes < 1) throw ContractViolation("collect_trajectories: n_episodes must be >= 1");
    env::CartpoleEnv environment(domain, seed);
    std::mt19937_64 rng(derive_seed(seed, "actor"));

    traj::TrajectorySet set;
    set.observation_shape = {env::kObservationSize, env::kObservationSize, env::kChannels};
    set.metadata.domain = domain;
    set.metadata.policy = actor.name();
    set.metadata.seed = seed;
    set.metadata.created = traj::utc_timestamp();

    for (int i = 0; i < n_episodes; ++i) {
        traj::Episode<std::uint8_t> episode;
        const auto& first = environment.reset(seed + static_cast<std::uint64_t>(i));
        episode.observations = first.pixels;
        bool done = false;
        while (!done) {
            const int action = actor.act(environment.observe(), rng);
            const auto outcome = environment.step(action);
            const auto& obs = environment.observe();
            episode.observations.insert(episode.observations.end(), obs.pixels.begin(), obs.pixels.end());
            episode.actions.push_back(action);
            episode.rewards.push_back(static_cast<float>(outcome.reward));
            episode.dones.push_back(outcome.done ? 1 : 0);
            done = outcome.done;
        }
        set.episodes.push_back(std::move(episode));
    }
    return set;
}

} // namespace zsil::ppo

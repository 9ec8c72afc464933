#pragma once

#include "zsil/env/domain.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace zsil::traj {

inline constexpr int kFormatVersion = 1;

struct ArchiveMetadata {
    nlohmann::json domain;          // serialized env::DomainSpec, or null
    std::string policy;             // "random", "expert", ...
    std::uint64_t seed = 0;
    std::string created;            // ISO-8601 UTC
    std::string vae_checkpoint;     // latent archives only
    nlohmann::json extra = nlohmann::json::object();

    friend bool operator==(const ArchiveMetadata&, const ArchiveMetadata&) = default;
};

// One episode of T transitions. `observations` holds T+1 flattened observations.
template <typename Obs>
struct Episode {
    std::vector<Obs> observations;
    std::vector<std::int32_t> actions;
    std::vector<float> rewards;
    std::vector<std::uint8_t> dones;

    std::size_t length() const noexcept { return actions.size(); }
    float total_reward() const noexcept {
        float s = 0.0f;
        for (float r : rewards) s += r;
        return s;
    }
    friend bool operator==(const Episode&, const Episode&) = default;
};

template <typename Obs>
struct EpisodeSet {
    std::vector<std::size_t> observation_shape;
    std::vector<Episode<Obs>> episodes;
    ArchiveMetadata metadata;

    std::size_t observation_size() const noexcept {
        std::size_t n = 1;
        for (auto d : observation_shape) n *= d;
        return observation_shape.empty() ? 0 : n;
    }
    std::size_t transition_count() const noexcept {
        std::size_t n = 0;
        for (const auto& e : episodes) n += e.length();
        return n;
    }
    // Throws ContractViolation when per-episode arrays are inconsistent or
    // the terminal marker is not exactly the last transition.
    void validate() const;

    friend bool operator==(const EpisodeSet&, const EpisodeSet&) = default;
};

// Pixel trajectories: observations are 128x128x3 bytes.
using TrajectorySet = EpisodeSet<std::uint8_t>;
// Latent trajectories: observations are posterior means of length latent_dim.
using LatentTrajectorySet = EpisodeSet<float>;

std::string utc_timestamp();

nlohmann::json save_archive(const TrajectorySet& set, const std::filesystem::path& dir);
nlohmann::json save_archive(const LatentTrajectorySet& set, const std::filesystem::path& dir);

TrajectorySet load_trajectory_archive(const std::filesystem::path& dir);
// `expected_latent_dim` guards against pairing an archive with the wrong VAE.
LatentTrajectorySet load_latent_archive(const std::filesystem::path& dir,
                                        std::optional<std::size_t> expected_latent_dim = std::nullopt);

// Reads manifest.json only.
nlohmann::json read_manifest(const std::filesystem::path& dir);

// Lists metadata fields that disagree with `domain`; empty when they match.
std::vector<std::string> compare_domain(const ArchiveMetadata& meta, const env::DomainSpec& domain);

// First `n` episodes (metadata preserved). Throws ContractViolation if too few.
template <typename Obs>
EpisodeSet<Obs> take_episodes(const EpisodeSet<Obs>& set, std::size_t n);

} // namespace zsil::traj

#pragma once

#include <json.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <string>

namespace zsil {

// A checkpoint is `<stem>.pt` (module parameters and buffers) next to
// `<stem>.json` (manifest: kind, config, step, seed, ...).
struct CheckpointPaths {
    std::filesystem::path weights;
    std::filesystem::path manifest;
};

CheckpointPaths checkpoint_paths(const std::filesystem::path& stem);

void save_checkpoint(const std::filesystem::path& stem, const torch::nn::Module& module,
                     const nlohmann::json& manifest);

// Reads the manifest and checks its "kind". Throws FormatError.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& stem, const std::string& kind);

void load_checkpoint_weights(const std::filesystem::path& stem, torch::nn::Module& module);

bool checkpoint_exists(const std::filesystem::path& stem);

} // namespace zsil

#include "zsil/common/checkpoint.hpp"

#include "zsil/common/error.hpp"
#include "zsil/common/tensor.hpp"

#include <cstring>
#include <fstream>

namespace zsil {
namespace fs = std::filesystem;

CheckpointPaths checkpoint_paths(const fs::path& stem) {
    auto weights = stem;
    weights += ".pt";
    auto manifest = stem;
    manifest += ".json";
    return {weights, manifest};
}

void save_checkpoint(const fs::path& stem, const torch::nn::Module& module, const nlohmann::json& manifest) {
    const auto paths = checkpoint_paths(stem);
    if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
    torch::serialize::OutputArchive archive;
    module.save(archive);
    archive.save_to(paths.weights.string());

    nlohmann::json m = manifest;
    m["format_version"] = 1;
    std::ofstream os(paths.manifest);
    if (!os) throw FormatError("cannot write checkpoint manifest " + paths.manifest.string());
    os << m.dump(2) << '\n';
}

nlohmann::json read_checkpoint_manifest(const fs::path& stem, const std::string& kind) {
    const auto paths = checkpoint_paths(stem);
    std::ifstream is(paths.manifest);
    if (!is) throw FormatError("missing checkpoint manifest " + paths.manifest.string());
    nlohmann::json m;
    try {
        is >> m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("unparseable checkpoint manifest " + paths.manifest.string() + ": " + e.what());
    }
    if (m.value("kind", std::string()) != kind) {
        throw FormatError("checkpoint " + stem.string() + " is not a '" + kind + "' checkpoint");
    }
    return m;
}

void load_checkpoint_weights(const fs::path& stem, torch::nn::Module& module) {
    const auto paths = checkpoint_paths(stem);
    if (!fs::exists(paths.weights)) throw FormatError("missing checkpoint weights " + paths.weights.string());
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(paths.weights.string());
        module.load(archive);
    } catch (const c10::Error& e) {
        throw FormatError("cannot load checkpoint " + paths.weights.string() + ": " + e.what_without_backtrace());
    }
}

bool checkpoint_exists(const fs::path& stem) {
    const auto paths = checkpoint_paths(stem);
    return fs::exists(paths.weights) && fs::exists(paths.manifest);
}

torch::Tensor images_to_tensor(std::span<const std::uint8_t* const> images, int height, int width, int channels) {
    const auto n = static_cast<std::int64_t>(images.size());
    auto bytes = torch::empty({n, height, width, channels}, torch::kUInt8);
    const std::size_t each = static_cast<std::size_t>(height) * width * channels;
    auto* dst = bytes.data_ptr<std::uint8_t>();
    for (std::int64_t i = 0; i < n; ++i) std::memcpy(dst + i * each, images[i], each);
    return bytes.permute({0, 3, 1, 2}).to(torch::kFloat32).div_(255.0f).contiguous();
}

torch::Tensor image_to_tensor(std::span<const std::uint8_t> image, int height, int width, int channels) {
    if (image.size() != static_cast<std::size_t>(height) * width * channels) {
        throw DimensionMismatch("image_to_tensor: buffer does not match " + std::to_string(height) + "x" +
                                std::to_string(width) + "x" + std::to_string(channels));
    }
    const std::uint8_t* p = image.data();
    return images_to_tensor(std::span<const std::uint8_t* const>(&p, 1), height, width, channels);
}

std::vector<std::uint8_t> tensor_to_image(const torch::Tensor& chw) {
    auto t = chw.dim() == 4 ? chw[0] : chw;
    t = t.detach().to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
    const auto* p = t.data_ptr<std::uint8_t>();
    return {p, p + t.numel()};
}

void require_finite(const torch::Tensor& t, const char* what) {
    if (!torch::isfinite(t).all().item<bool>()) throw DiagnosticsError(std::string(what) + " is not finite");
}

std::vector<double> to_vector(const torch::Tensor& t) {
    auto d = t.detach().to(torch::kFloat64).contiguous().flatten();
    return {d.data_ptr<double>(), d.data_ptr<double>() + d.numel()};
}

} // namespace zsil

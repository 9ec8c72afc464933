#include "zsil/traj/archive.hpp"

#include "zsil/common/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <type_traits>

namespace zsil::traj {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 8> kMagic = {'Z', 'S', 'I', 'L', 'B', 'L', 'O', 'B'};

enum class DType : std::uint32_t { u8 = 1, i32 = 2, f32 = 3 };

template <typename T>
constexpr DType dtype_of() {
    if constexpr (std::is_same_v<T, std::uint8_t>) return DType::u8;
    else if constexpr (std::is_same_v<T, std::int32_t>) return DType::i32;
    else {
        static_assert(std::is_same_v<T, float>);
        return DType::f32;
    }
}

std::string dtype_name(DType d) {
    switch (d) {
    case DType::u8: return "u8";
    case DType::i32: return "i32";
    case DType::f32: return "f32";
    }
    return "?";
}

template <typename T>
void put_le(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    os.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
    std::array<unsigned char, sizeof(T)> b;
    is.read(reinterpret_cast<char*>(b.data()), sizeof(T));
    if (!is) throw FormatError("truncated blob header");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    T v;
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
}

template <typename T>
void write_blob(const fs::path& path, const std::vector<std::uint64_t>& shape, const std::vector<T>& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path.string());
    os.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(dtype_of<T>()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put_le<std::uint64_t>(os, d);
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
    } else {
        for (const T& v : data) put_le<T>(os, v);
    }
    if (!os) throw FormatError("write failed for " + path.string());
}

template <typename T>
std::vector<T> read_blob(const fs::path& path, const std::vector<std::uint64_t>& expected_shape) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("missing blob " + path.string());
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw FormatError("bad magic header in " + path.string());
    const auto dtype = static_cast<DType>(get_le<std::uint32_t>(is));
    if (dtype != dtype_of<T>()) {
        throw FormatError("dtype mismatch in " + path.string() + ": expected " +
                          dtype_name(dtype_of<T>()) + ", found code " +
                          std::to_string(static_cast<std::uint32_t>(dtype)));
    }
    const auto ndim = get_le<std::uint32_t>(is);
    if (ndim > 16) throw FormatError("implausible rank in " + path.string());
    std::vector<std::uint64_t> shape(ndim);
    for (auto& d : shape) d = get_le<std::uint64_t>(is);
    if (shape != expected_shape) throw FormatError("shape in " + path.string() + " disagrees with manifest");
    std::uint64_t count = 1;
    for (auto d : shape) count *= d;
    std::vector<T> data(count);
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(T)));
        if (!is) throw FormatError("truncated blob " + path.string());
    } else {
        for (auto& v : data) v = get_le<T>(is);
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in " + path.string());
    return data;
}

json metadata_to_json(const ArchiveMetadata& m) {
    return {{"domain", m.domain},     {"policy", m.policy},
            {"seed", m.seed},         {"created", m.created},
            {"vae_checkpoint", m.vae_checkpoint}, {"extra", m.extra}};
}

ArchiveMetadata metadata_from_json(const json& j) {
    ArchiveMetadata m;
    m.domain = j.value("domain", json());
    m.policy = j.value("policy", std::string());
    m.seed = j.value("seed", std::uint64_t{0});
    m.created = j.value("created", std::string());
    m.vae_checkpoint = j.value("vae_checkpoint", std::string());
    m.extra = j.value("extra", json::object());
    return m;
}

template <typename Obs>
json save_impl(const EpisodeSet<Obs>& set, const fs::path& dir, const char* kind) {
    set.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw FormatError("cannot create archive directory " + dir.string());

    const std::size_t obs_size = set.observation_size();
    std::vector<Obs> observations;
    std::vector<std::int32_t> actions;
    std::vector<float> rewards;
    std::vector<std::uint8_t> dones;
    observations.reserve((set.transition_count() + set.episodes.size()) * obs_size);

    json index = json::array();
    std::size_t obs_offset = 0;
    std::size_t step_offset = 0;
    for (const auto& e : set.episodes) {
        index.push_back({{"length", e.length()}, {"observation_offset", obs_offset}, {"transition_offset", step_offset}});
        observations.insert(observations.end(), e.observations.begin(), e.observations.end());
        actions.insert(actions.end(), e.actions.begin(), e.actions.end());
        rewards.insert(rewards.end(), e.rewards.begin(), e.rewards.end());
        dones.insert(dones.end(), e.dones.begin(), e.dones.end());
        obs_offset += e.length() + 1;
        step_offset += e.length();
    }

    std::vector<std::uint64_t> obs_shape = {obs_offset};
    for (auto d : set.observation_shape) obs_shape.push_back(d);
    const std::vector<std::uint64_t> step_shape = {step_offset};

    write_blob(dir / "observations.bin", obs_shape, observations);
    write_blob(dir / "actions.bin", step_shape, actions);
    write_blob(dir / "rewards.bin", step_shape, rewards);
    write_blob(dir / "dones.bin", step_shape, dones);

    const auto array_entry = [](const char* file, DType d, const std::vector<std::uint64_t>& shape) {
        return json{{"file", file}, {"dtype", dtype_name(d)}, {"shape", shape}};
    };
    json manifest = {
        {"format_version", kFormatVersion},
        {"kind", kind},
        {"observation_shape", set.observation_shape},
        {"episode_count", set.episodes.size()},
        {"transition_count", step_offset},
        {"episodes", index},
        {"arrays",
         {{"observations", array_entry("observations.bin", dtype_of<Obs>(), obs_shape)},
          {"actions", array_entry("actions.bin", DType::i32, step_shape)},
          {"rewards", array_entry("rewards.bin", DType::f32, step_shape)},
          {"dones", array_entry("dones.bin", DType::u8, step_shape)}}},
        {"metadata", metadata_to_json(set.metadata)},
    };
    std::ofstream os(dir / "manifest.json");
    if (!os) throw FormatError("cannot write manifest in " + dir.string());
    os << manifest.dump(2) << '\n';
    if (!os) throw FormatError("manifest write failed in " + dir.string());
    return manifest;
}

template <typename Obs>
EpisodeSet<Obs> load_impl(const fs::path& dir, const char* kind) {
    const json manifest = read_manifest(dir);
    try {
        if (manifest.at("kind").get<std::string>() != kind) {
            throw FormatError("archive " + dir.string() + " is '" + manifest.at("kind").get<std::string>() +
                              "', expected '" + kind + "'");
        }
        EpisodeSet<Obs> set;
        set.observation_shape = manifest.at("observation_shape").get<std::vector<std::size_t>>();
        set.metadata = metadata_from_json(manifest.at("metadata"));

        const auto& arrays = manifest.at("arrays");
        const auto shape_of = [&](const char* name) {
            const auto& a = arrays.at(name);
            return a.at("shape").get<std::vector<std::uint64_t>>();
        };
        const auto check_dtype = [&](const char* name, DType d) {
            if (arrays.at(name).at("dtype").get<std::string>() != dtype_name(d)) {
                throw FormatError(std::string("manifest dtype mismatch for ") + name);
            }
        };
        check_dtype("observations", dtype_of<Obs>());
        check_dtype("actions", DType::i32);
        check_dtype("rewards", DType::f32);
        check_dtype("dones", DType::u8);

        const auto file_of = [&](const char* name) { return dir / arrays.at(name).at("file").get<std::string>(); };
        const auto observations = read_blob<Obs>(file_of("observations"), shape_of("observations"));
        const auto actions = read_blob<std::int32_t>(file_of("actions"), shape_of("actions"));
        const auto rewards = read_blob<float>(file_of("rewards"), shape_of("rewards"));
        const auto dones = read_blob<std::uint8_t>(file_of("dones"), shape_of("dones"));

        const std::size_t obs_size = set.observation_size();
        const auto& index = manifest.at("episodes");
        if (index.size() != manifest.at("episode_count").get<std::size_t>()) {
            throw FormatError("episode index disagrees with episode_count");
        }
        for (const auto& entry : index) {
            const auto len = entry.at("length").get<std::size_t>();
            const auto oo = entry.at("observation_offset").get<std::size_t>();
            const auto to = entry.at("transition_offset").get<std::size_t>();
            if ((oo + len + 1) * obs_size > observations.size() || to + len > actions.size()) {
                throw FormatError("episode index points outside the blobs");
            }
            Episode<Obs> e;
            e.observations.assign(observations.begin() + static_cast<std::ptrdiff_t>(oo * obs_size),
                                  observations.begin() + static_cast<std::ptrdiff_t>((oo + len + 1) * obs_size));
            e.actions.assign(actions.begin() + static_cast<std::ptrdiff_t>(to),
                             actions.begin() + static_cast<std::ptrdiff_t>(to + len));
            e.rewards.assign(rewards.begin() + static_cast<std::ptrdiff_t>(to),
                             rewards.begin() + static_cast<std::ptrdiff_t>(to + len));
            e.dones.assign(dones.begin() + static_cast<std::ptrdiff_t>(to),
                           dones.begin() + static_cast<std::ptrdiff_t>(to + len));
            set.episodes.push_back(std::move(e));
        }
        try {
            set.validate();
        } catch (const ContractViolation& e) {
            throw FormatError(std::string("archive content invalid: ") + e.what());
        }
        return set;
    } catch (const json::exception& e) {
        throw FormatError("malformed manifest in " + dir.string() + ": " + e.what());
    }
}

} // namespace

template <typename Obs>
void EpisodeSet<Obs>::validate() const {
    if (observation_shape.empty()) throw ContractViolation("observation_shape is empty");
    const std::size_t obs_size = observation_size();
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        const auto& e = episodes[i];
        const auto where = "episode " + std::to_string(i) + ": ";
        const std::size_t t = e.length();
        if (t == 0) throw ContractViolation(where + "no transitions");
        if (e.rewards.size() != t || e.dones.size() != t) throw ContractViolation(where + "array lengths differ");
        if (e.observations.size() != (t + 1) * obs_size) {
            throw ContractViolation(where + "expected " + std::to_string(t + 1) + " observations");
        }
        for (std::size_t k = 0; k + 1 < t; ++k) {
            if (e.dones[k]) throw ContractViolation(where + "terminal marker before the last transition");
        }
        if (!e.dones.back()) throw ContractViolation(where + "missing terminal marker");
    }
}

template struct EpisodeSet<std::uint8_t>;
template struct EpisodeSet<float>;

template <typename Obs>
EpisodeSet<Obs> take_episodes(const EpisodeSet<Obs>& set, std::size_t n) {
    if (n == 0 || n > set.episodes.size()) {
        throw ContractViolation("take_episodes: need 1.." + std::to_string(set.episodes.size()) +
                                " episodes, asked for " + std::to_string(n));
    }
    EpisodeSet<Obs> out;
    out.observation_shape = set.observation_shape;
    out.metadata = set.metadata;
    out.episodes.assign(set.episodes.begin(), set.episodes.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
}

template EpisodeSet<std::uint8_t> take_episodes(const EpisodeSet<std::uint8_t>&, std::size_t);
template EpisodeSet<float> take_episodes(const EpisodeSet<float>&, std::size_t);

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json save_archive(const TrajectorySet& set, const fs::path& dir) { return save_impl(set, dir, "pixel"); }

json save_archive(const LatentTrajectorySet& set, const fs::path& dir) { return save_impl(set, dir, "latent"); }

json read_manifest(const fs::path& dir) {
    const auto path = dir / "manifest.json";
    std::ifstream is(path);
    if (!is) throw FormatError("no archive manifest at " + path.string());
    json manifest;
    try {
        is >> manifest;
    } catch (const json::exception& e) {
        throw FormatError("unparseable manifest " + path.string() + ": " + e.what());
    }
    const int version = manifest.value("format_version", 0);
    if (version != kFormatVersion) {
        throw FormatError("unsupported archive format_version " + std::to_string(version));
    }
    return manifest;
}

TrajectorySet load_trajectory_archive(const fs::path& dir) {
    auto set = load_impl<std::uint8_t>(dir, "pixel");
    if (set.observation_shape != std::vector<std::size_t>{env::kObservationSize, env::kObservationSize, env::kChannels}) {
        throw FormatError("pixel archive observations are not 128x128x3");
    }
    return set;
}

LatentTrajectorySet load_latent_archive(const fs::path& dir, std::optional<std::size_t> expected_latent_dim) {
    auto set = load_impl<float>(dir, "latent");
    if (set.observation_shape.size() != 1) throw FormatError("latent archive observations must be vectors");
    if (expected_latent_dim && set.observation_shape[0] != *expected_latent_dim) {
        throw DimensionMismatch("latent archive has dimension " + std::to_string(set.observation_shape[0]) +
                                ", expected " + std::to_string(*expected_latent_dim));
    }
    return set;
}

std::vector<std::string> compare_domain(const ArchiveMetadata& meta, const env::DomainSpec& domain) {
    std::vector<std::string> diffs;
    if (meta.domain.is_null()) {
        diffs.emplace_back("archive records no domain");
        return diffs;
    }
    const json want = domain;
    for (const char* key : {"scenario", "role", "themes"}) {
        if (meta.domain.value(key, json()) != want.at(key)) diffs.emplace_back(std::string("domain.") + key);
    }
    return diffs;
}

} // namespace zsil::traj

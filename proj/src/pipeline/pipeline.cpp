#include "zsil/pipeline/pipeline.hpp"

#include "zsil/common/checkpoint.hpp"
#include "zsil/common/seed.hpp"
#include "zsil/ppo/collect.hpp"
#include "zsil/traj/encode.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

namespace zsil::pipeline {
using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Stage s) {
    switch (s) {
    case Stage::expert: return "expert";
    case Stage::vae: return "vae";
    case Stage::encode: return "encode";
    case Stage::iq: return "iq";
    case Stage::evaluate: return "evaluate";
    }
    return "?";
}

Stage stage_from_string(const std::string& s) {
    for (auto st : kAllStages) {
        if (to_string(st) == s) return st;
    }
    throw ContractViolation("unknown stage '" + s + "'");
}

std::vector<Stage> parse_stages(const std::string& list) {
    if (list.empty() || list == "all") return {std::begin(kAllStages), std::end(kAllStages)};
    std::vector<bool> wanted(std::size(kAllStages), false);
    std::size_t start = 0;
    while (start <= list.size()) {
        const auto end = std::min(list.find(',', start), list.size());
        const auto name = list.substr(start, end - start);
        if (!name.empty()) wanted[static_cast<std::size_t>(stage_from_string(name))] = true;
        start = end + 1;
    }
    std::vector<Stage> out;
    for (auto st : kAllStages) {
        if (wanted[static_cast<std::size_t>(st)]) out.push_back(st);
    }
    if (out.empty()) throw ContractViolation("no stages selected");
    return out;
}

std::vector<Stage> stage_dependencies(Stage s) {
    switch (s) {
    case Stage::expert:
    case Stage::vae: return {};
    case Stage::encode: return {Stage::expert, Stage::vae};
    case Stage::iq: return {Stage::encode};
    case Stage::evaluate: return {Stage::expert, Stage::vae, Stage::iq};
    }
    return {};
}

namespace {

// True when `s` needs `dep`, directly or through another stage.
bool depends_on(Stage s, Stage dep) {
    for (auto d : stage_dependencies(s)) {
        if (d == dep || depends_on(d, dep)) return true;
    }
    return false;
}

} // namespace

bool RunManifest::complete(Stage s) const {
    const auto it = stages.find(to_string(s));
    return it != stages.end() && it->second.complete;
}

json to_json(const RunManifest& m) {
    json stages = json::object();
    for (const auto& [name, rec] : m.stages) {
        stages[name] = {{"complete", rec.complete}, {"completed_at", rec.completed_at}, {"artifacts", rec.artifacts}};
    }
    return {{"format_version", 1},
            {"config_hash", m.config_hash},
            {"created", m.created},
            {"updated", m.updated},
            {"stages", stages}};
}

RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    try {
        m.config_hash = j.at("config_hash").get<std::string>();
        m.created = j.value("created", std::string());
        m.updated = j.value("updated", std::string());
        for (const auto& [name, rec] : j.at("stages").items()) {
            StageRecord r;
            r.complete = rec.at("complete").get<bool>();
            r.completed_at = rec.value("completed_at", std::string());
            r.artifacts = rec.at("artifacts").get<std::map<std::string, std::string>>();
            m.stages[name] = std::move(r);
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed run manifest: ") + e.what());
    }
    return m;
}

RunManifest read_run_manifest(const fs::path& run_dir) {
    const auto path = run_dir / "manifest.json";
    if (!fs::exists(path)) return {};
    std::ifstream is(path);
    try {
        return manifest_from_json(json::parse(is));
    } catch (const json::parse_error& e) {
        throw FormatError("cannot parse " + path.string() + ": " + e.what());
    }
}

fs::path artifact(const RunManifest& manifest, const fs::path& run_dir, Stage stage, const std::string& name) {
    const auto it = manifest.stages.find(to_string(stage));
    if (it == manifest.stages.end() || !it->second.complete) {
        throw DependencyError("stage '" + to_string(stage) + "' has not completed in " + run_dir.string());
    }
    const auto a = it->second.artifacts.find(name);
    if (a == it->second.artifacts.end()) {
        throw DependencyError("stage '" + to_string(stage) + "' recorded no artifact '" + name + "'");
    }
    return run_dir / a->second;
}

fs::path resolve_run_dir(const PipelineConfig& config, const std::string& explicit_dir) {
    if (!explicit_dir.empty()) return explicit_dir;
    if (const char* env = std::getenv(kRunDirEnv); env && *env) return env;
    return config.run_dir;
}

namespace {

// Advisory lock: one pipeline process per run directory.
class RunLock {
public:
    explicit RunLock(const fs::path& run_dir) : path_(run_dir / ".lock") {
        for (int attempt = 0; attempt < 2; ++attempt) {
            const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
            if (fd >= 0) {
                const auto pid = std::to_string(::getpid());
                [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
                ::close(fd);
                return;
            }
            if (!stale()) break;
            fs::remove(path_);
        }
        throw ContractViolation("run directory " + path_.parent_path().string() + " is locked by another process (" +
                                path_.string() + ")");
    }
    ~RunLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    bool stale() const {
        std::ifstream is(path_);
        long pid = 0;
        if (!(is >> pid) || pid <= 0) return true;
        return ::kill(static_cast<pid_t>(pid), 0) != 0 && errno == ESRCH;
    }

    fs::path path_;
};

bool artifacts_present(const StageRecord& rec, const fs::path& run_dir) {
    for (const auto& [_, rel] : rec.artifacts) {
        const auto p = run_dir / rel;
        if (!fs::exists(p) && !checkpoint_exists(p)) return false;
    }
    return true;
}

struct Context {
    const PipelineConfig& config;
    fs::path run_dir;
    RunManifest& manifest;
    std::function<void(const std::string&)> log;

    fs::path path(const std::string& rel) const { return run_dir / rel; }
};

using Artifacts = std::map<std::string, std::string>;

void save_pixel_archive(const traj::TrajectorySet& set, const fs::path& dir) {
    if (fs::exists(dir)) fs::remove_all(dir);
    traj::save_archive(set, dir);
}

void save_latent_archive(const traj::LatentTrajectorySet& set, const fs::path& dir) {
    if (fs::exists(dir)) fs::remove_all(dir);
    traj::save_archive(set, dir);
}

// Trains one PPO expert and records its demonstrations.
void train_and_collect(const Context& ctx, const env::DomainSpec& domain, const std::string& tag, Artifacts& out) {
    const auto& c = ctx.config;
    const std::string dir = tag;
    fs::create_directories(ctx.path(dir));
    ctx.log("training PPO expert on the " + env::to_string(domain.role) + " domain");
    ppo::ExpertOptions options{ctx.log, ctx.path(dir)};
    auto result = ppo::train_expert(domain, c.ppo, derive_seed(c.seed, tag), options);
    ctx.log(tag + ": best evaluation " + std::to_string(result.best_eval) + " at step " + std::to_string(result.best_step));

    const bool greedy = c.data.expert_mode == eval::ActingMode::greedy;
    ppo::PolicyActor actor(result.best_policy, greedy, "ppo_expert");
    auto demos = ppo::collect_trajectories(actor, domain, c.data.expert_episodes, derive_seed(c.seed, "collect_" + tag));
    demos.metadata.extra = {{"checkpoint", dir + "/policy_best"}, {"acting_mode", eval::to_string(c.data.expert_mode)}};
    double total = 0.0;
    for (const auto& e : demos.episodes) total += e.total_reward();
    ctx.log(tag + ": collected " + std::to_string(demos.episodes.size()) + " demonstrations, mean return " +
            std::to_string(total / static_cast<double>(demos.episodes.size())));
    save_pixel_archive(demos, ctx.path("trajectories/" + tag));

    std::ofstream(ctx.path(dir + "/summary.json"))
        << json{{"best_eval", result.best_eval},       {"best_step", result.best_step},
                {"steps", result.steps},               {"stopped_early", result.stopped_early},
                {"diverged", result.diverged},         {"demonstration_mean_return", total / demos.episodes.size()}}
               .dump(2);

    out[tag + "_policy_best"] = dir + "/policy_best";
    out[tag + "_policy_final"] = dir + "/policy_final";
    out[tag + "_learning_curve"] = dir + "/learning_curve.csv";
    out[tag + "_summary"] = dir + "/summary.json";
    out[tag + "_trajectories"] = "trajectories/" + tag;
}

Artifacts run_expert(const Context& ctx) {
    Artifacts out;
    train_and_collect(ctx, ctx.config.source, "expert", out);
    if (ctx.config.evaluation.target_baselines) train_and_collect(ctx, ctx.config.target, "expert_target", out);
    return out;
}

Artifacts run_vae(const Context& ctx) {
    const auto& c = ctx.config;
    env::RandomActor random;
    ctx.log("collecting " + std::to_string(c.data.random_episodes) + " random episodes for the VAE");
    const auto data = ppo::collect_trajectories(random, c.vae_training, c.data.random_episodes,
                                                derive_seed(c.seed, "collect_random"));
    save_pixel_archive(data, ctx.path("trajectories/random"));

    fs::create_directories(ctx.path("vae/checkpoints"));
    vae::VaeTrainOptions options;
    options.log = ctx.log;
    options.checkpoint_dir = ctx.path("vae/checkpoints");
    auto result = vae::train_vae(data, c.vae, derive_seed(c.seed, "vae"), options);
    vae::save_vae(ctx.path("vae/vae"), result.net, {{"seed", c.seed}, {"domain", c.vae_training}});
    vae::write_training_log(ctx.path("vae/training_log.csv"), result.log);
    return {{"random_trajectories", "trajectories/random"}, {"vae", "vae/vae"}, {"training_log", "vae/training_log.csv"}};
}

double cosine(const torch::Tensor& a, const torch::Tensor& b) {
    return (a * b).sum().item<double>() / std::max(1e-12, a.norm().item<double>() * b.norm().item<double>());
}

// Cosine similarity of latent means for the same physics state under each theme.
json theme_similarity(vae::VaeNet& net, const PipelineConfig& c) {
    env::CartpoleEnv probe(c.source, derive_seed(c.seed, "similarity"));
    probe.reset();
    for (int i = 0; i < 5 && !probe.done(); ++i) probe.step(i % 2);
    const auto state = probe.state();
    std::vector<std::pair<std::string, env::ColorTheme>> themes;
    for (std::size_t i = 0; i < c.source.themes.size(); ++i) themes.push_back({"source_" + std::to_string(i), c.source.themes[i]});
    for (std::size_t i = 0; i < c.target.themes.size(); ++i) themes.push_back({"target_" + std::to_string(i), c.target.themes[i]});

    std::vector<env::Observation> observations;
    std::vector<const std::uint8_t*> images;
    for (const auto& [_, theme] : themes) {
        const auto f = env::render_frame(state, theme);
        const std::array<env::Frame, env::kFramesPerObservation> frames{f, f, f, f};
        observations.push_back(env::stack_frames(frames));
    }
    for (const auto& o : observations) images.push_back(o.pixels.data());
    const auto means = vae::encode_means(net, images);
    json out = json::object();
    for (std::size_t i = 0; i < themes.size(); ++i) {
        for (std::size_t j = i + 1; j < themes.size(); ++j) {
            out[themes[i].first + "/" + themes[j].first] = cosine(means[static_cast<long>(i)], means[static_cast<long>(j)]);
        }
    }
    return out;
}

Artifacts run_encode(const Context& ctx) {
    const auto vae_stem = artifact(ctx.manifest, ctx.run_dir, Stage::vae, "vae");
    auto net = vae::load_vae(vae_stem);
    Artifacts out;
    std::vector<std::string> tags = {"expert"};
    if (ctx.config.evaluation.target_baselines) tags.push_back("expert_target");
    for (const auto& tag : tags) {
        const auto pixels = traj::load_trajectory_archive(artifact(ctx.manifest, ctx.run_dir, Stage::expert, tag + "_trajectories"));
        ctx.log("encoding " + std::to_string(pixels.transition_count()) + " " + tag + " transitions");
        const auto latent = traj::encode_trajectories(net, pixels, "vae/vae");
        save_latent_archive(latent, ctx.path("latent/" + tag));
        out[tag + "_latent"] = "latent/" + tag;
    }
    const auto sim = theme_similarity(net, ctx.config);
    ctx.log("theme cosine similarity of latent means: " + sim.dump());
    std::ofstream(ctx.path("latent/theme_similarity.json")) << sim.dump(2);
    out["theme_similarity"] = "latent/theme_similarity.json";
    return out;
}

Artifacts run_iq(const Context& ctx) {
    const auto& c = ctx.config;
    Artifacts out;
    std::vector<std::string> tags = {"expert"};
    if (c.evaluation.target_baselines) tags.push_back("expert_target");
    for (const auto& tag : tags) {
        const auto latent = traj::load_latent_archive(artifact(ctx.manifest, ctx.run_dir, Stage::encode, tag + "_latent"),
                                                      static_cast<std::size_t>(c.iq.latent_dim));
        const std::string dir = tag == "expert" ? "iq" : "iq_target";
        fs::create_directories(ctx.path(dir));
        iq::IqTrainOptions options;
        options.log = ctx.log;
        options.log_every = std::max<std::int64_t>(1, c.iq.train_steps / 50);
        ctx.log("training IQ on " + std::to_string(latent.transition_count()) + " " + tag + " transitions");
        auto result = iq::train_iq(latent, c.iq, derive_seed(c.seed, "iq_" + tag), options);
        iq::save_q(ctx.path(dir + "/q"), result.q, c.iq, {{"seed", c.seed}, {"trajectories", "latent/" + tag}});
        iq::write_training_log(ctx.path(dir + "/training_log.csv"), result.log);
        out[tag + "_q"] = dir + "/q";
        out[tag + "_training_log"] = dir + "/training_log.csv";
    }
    return out;
}

Artifacts run_evaluate(const Context& ctx) {
    const auto& c = ctx.config;
    const auto vae_stem = artifact(ctx.manifest, ctx.run_dir, Stage::vae, "vae").string();
    const auto policy = [&](const std::string& name) {
        return artifact(ctx.manifest, ctx.run_dir, Stage::expert, name).string();
    };
    const auto q = [&](const std::string& name) { return artifact(ctx.manifest, ctx.run_dir, Stage::iq, name).string(); };
    const auto mode = c.evaluation.mode;
    using eval::AgentKind;

    std::vector<eval::AgentSpec> agents;
    agents.push_back({AgentKind::random, {}, {}, {}, mode, "none"});
    for (const std::string label : {"best", "final"}) {
        agents.push_back({AgentKind::ppo_source, policy("expert_policy_" + label), {}, {}, mode, label});
        if (c.evaluation.target_baselines) {
            agents.push_back({AgentKind::ppo_target, policy("expert_target_policy_" + label), {}, {}, mode, label});
        }
        agents.push_back({AgentKind::ppo_transfer, policy("expert_policy_" + label), {}, {}, mode, label});
    }
    agents.push_back({AgentKind::ppo_source_iq, {}, vae_stem, q("expert_q"), mode, "final"});
    if (c.evaluation.target_baselines) {
        agents.push_back({AgentKind::ppo_target_iq, {}, vae_stem, q("expert_target_q"), mode, "final"});
    }
    agents.push_back({AgentKind::ours, {}, vae_stem, q("expert_q"), mode, "final"});

    const auto seed = derive_seed(c.seed, "evaluate");
    std::vector<eval::EvalReport> reports;
    for (const auto& a : agents) {
        const auto& domain = eval::evaluation_role(a.kind) == env::Role::source ? c.source : c.target;
        auto report = eval::evaluate_agent(a, domain, c.evaluation.episodes, seed);
        ctx.log("evaluate " + eval::display_name(a.kind) + " (" + a.checkpoint_label + ") on " +
                env::to_string(domain.role) + ": " + std::to_string(report.mean) + " +/- " + std::to_string(report.std));
        // Stored paths are relative to the run directory.
        for (auto* p : {&report.agent.policy_checkpoint, &report.agent.vae_checkpoint, &report.agent.q_checkpoint}) {
            if (!p->empty()) *p = fs::relative(*p, ctx.run_dir).string();
        }
        reports.push_back(std::move(report));
    }
    fs::create_directories(ctx.path("eval"));
    std::ofstream(ctx.path("eval/results.csv")) << eval::results_table(reports);
    std::ofstream(ctx.path("eval/reports.json")) << json(reports).dump(2);
    return {{"results", "eval/results.csv"}, {"reports", "eval/reports.json"}};
}

Artifacts run_stage(Stage s, const Context& ctx) {
    switch (s) {
    case Stage::expert: return run_expert(ctx);
    case Stage::vae: return run_vae(ctx);
    case Stage::encode: return run_encode(ctx);
    case Stage::iq: return run_iq(ctx);
    case Stage::evaluate: return run_evaluate(ctx);
    }
    return {};
}

void write_manifest(const fs::path& run_dir, const RunManifest& m) {
    const auto tmp = run_dir / "manifest.json.tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw FormatError("cannot write " + tmp.string());
        os << to_json(m).dump(2) << '\n';
    }
    fs::rename(tmp, run_dir / "manifest.json");
}

} // namespace

RunManifest run_pipeline(const PipelineConfig& config, const fs::path& run_dir, const RunOptions& options) {
    if (options.stages.empty()) throw ContractViolation("no stages selected");
    fs::create_directories(run_dir);
    RunLock lock(run_dir);

    std::ofstream log_file(run_dir / "run.log", std::ios::app);
    const auto log = [&](const std::string& msg) {
        log_file << traj::utc_timestamp() << ' ' << msg << std::endl;
        if (options.log) options.log(msg);
    };

    const auto hash = config_hash(config);
    RunManifest manifest = read_run_manifest(run_dir);
    if (!manifest.config_hash.empty() && manifest.config_hash != hash && !options.force) {
        throw ConfigError(std::vector<FieldError>{{"run_dir", "run directory " + run_dir.string() + " holds results of a different configuration (" +
                                           manifest.config_hash + "); use --force or another run directory"}});
    }
    if (manifest.created.empty()) manifest.created = traj::utc_timestamp();
    manifest.config_hash = hash;

    // A stage whose recorded outputs vanished is no longer complete.
    for (auto& [name, rec] : manifest.stages) {
        if (rec.complete && !artifacts_present(rec, run_dir)) {
            log("stage " + name + " lost its artifacts; marking incomplete");
            rec.complete = false;
        }
    }

    {
        std::ofstream(run_dir / "config.json") << to_json(config).dump(2) << '\n';
    }
    write_manifest(run_dir, manifest);

    const auto requested = [&](Stage s) {
        return std::find(options.stages.begin(), options.stages.end(), s) != options.stages.end();
    };
    for (auto s : options.stages) {
        for (auto dep : stage_dependencies(s)) {
            if (!requested(dep) && !manifest.complete(dep)) {
                throw DependencyError("stage '" + to_string(s) + "' needs stage '" + to_string(dep) +
                                      "', which has not completed in " + run_dir.string());
            }
        }
    }

    const Context ctx{config, run_dir, manifest, log};
    for (auto s : kAllStages) {
        if (!requested(s)) continue;
        const auto name = to_string(s);
        if (manifest.complete(s) && !options.force) {
            log("stage " + name + " already complete; skipping");
            continue;
        }
        log("stage " + name + " started");
        manifest.stages[name].complete = false;
        // Anything downstream was built from the outputs about to be replaced.
        for (auto t : kAllStages) {
            if (depends_on(t, s) && manifest.complete(t)) {
                log("stage " + to_string(t) + " is stale; marking incomplete");
                manifest.stages[to_string(t)].complete = false;
            }
        }
        write_manifest(run_dir, manifest);
        auto artifacts = run_stage(s, ctx);
        auto& rec = manifest.stages[name];
        rec.artifacts = std::move(artifacts);
        rec.complete = artifacts_present(rec, run_dir);
        if (!rec.complete) throw FormatError("stage " + name + " did not produce all of its artifacts");
        rec.completed_at = traj::utc_timestamp();
        manifest.updated = rec.completed_at;
        write_manifest(run_dir, manifest);
        log("stage " + name + " complete");
    }
    return manifest;
}

} // namespace zsil::pipeline

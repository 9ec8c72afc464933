// zsil: command line front end for the transfer/imitation pipeline.
#include "zsil/common/error.hpp"
#include "zsil/common/png.hpp"
#include "zsil/common/tensor.hpp"
#include "zsil/eval/harness.hpp"
#include "zsil/pipeline/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace zsil;

namespace {

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

int fail(const std::string& kind, const std::string& message, const std::vector<FieldError>& fields = {}) {
    json err = {{"kind", kind}, {"message", message}};
    if (!fields.empty()) {
        err["fields"] = json::array();
        for (const auto& f : fields) err["fields"].push_back({{"path", f.path}, {"message", f.message}});
    }
    std::cout << json{{"status", "error"}, {"error", err}}.dump() << std::endl;
    if (kind == "config_error" || kind == "usage_error") return 2;
    if (kind == "dependency_error") return 3;
    return 1;
}

std::vector<int> parse_counts(const std::string& list) {
    std::vector<int> out;
    std::size_t start = 0;
    while (start < list.size()) {
        const auto end = std::min(list.find(',', start), list.size());
        const auto item = list.substr(start, end - start);
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw ContractViolation("invalid trajectory count '" + item + "'");
        out.push_back(v);
        start = end + 1;
    }
    return out;
}

pipeline::PipelineConfig load_with_seed(const std::string& path, std::optional<std::uint64_t> seed) {
    auto config = pipeline::load_config(path);
    if (seed) config.seed = *seed;
    return config;
}

env::DomainSpec pick_domain(const std::optional<pipeline::PipelineConfig>& config, env::Scenario scenario, env::Role role) {
    if (!config) return env::standard_domain(scenario, role);
    switch (role) {
    case env::Role::source: return config->source;
    case env::Role::target: return config->target;
    case env::Role::vae_training: return config->vae_training;
    }
    return config->source;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-shot transfer by imitation in a disentangled latent space"};
    app.require_subcommand(1);

    // validate
    auto* validate = app.add_subcommand("validate", "Check a config file and print it with defaults filled in");
    std::string validate_config;
    validate->add_option("--config,config", validate_config, "Pipeline config (JSON)")->required();

    // run
    auto* run = app.add_subcommand("run", "Run pipeline stages expert, vae, encode, iq, evaluate");
    std::string run_config, run_stages = "all", run_dir;
    std::optional<std::uint64_t> run_seed;
    bool run_force = false;
    run->add_option("--config", run_config, "Pipeline config (JSON)")->required();
    run->add_option("--stages", run_stages, "Comma-separated stage list or 'all'");
    run->add_flag("--force", run_force, "Recompute stages even when complete");
    run->add_option("--seed", run_seed, "Override the global seed");
    run->add_option("--run-dir", run_dir, "Run directory (overrides config and ZSIL_RUN_DIR)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Evaluate one agent on one domain");
    std::string ev_agent, ev_policy, ev_vae, ev_q, ev_config, ev_scenario = "combi", ev_role, ev_mode = "greedy", ev_out;
    int ev_episodes = 20;
    std::uint64_t ev_seed = 0;
    evaluate->add_option("--agent", ev_agent, "random|ppo_source|ppo_target|ppo_transfer|ppo_source_iq|ppo_target_iq|ours")
        ->required();
    evaluate->add_option("--policy", ev_policy, "PPO policy checkpoint stem");
    evaluate->add_option("--vae", ev_vae, "VAE checkpoint stem");
    evaluate->add_option("--q", ev_q, "Q checkpoint stem");
    evaluate->add_option("--config", ev_config, "Take domains from this pipeline config");
    evaluate->add_option("--scenario", ev_scenario, "combi|background (without --config)");
    evaluate->add_option("--role", ev_role, "source|target (default: the agent's table domain)");
    evaluate->add_option("--mode", ev_mode, "greedy|stochastic");
    evaluate->add_option("--episodes", ev_episodes, "Number of episodes");
    evaluate->add_option("--seed", ev_seed, "Episode i uses seed + i");
    evaluate->add_option("--out", ev_out, "Also write the results table row(s) as CSV");

    // traverse
    auto* traverse = app.add_subcommand("traverse", "Render a latent traversal grid as PNG");
    std::string tr_vae, tr_run_dir, tr_out = "traversal.png", tr_scenario = "combi", tr_role = "source";
    int tr_values = 7, tr_warmup = 10;
    double tr_span = 3.0;
    bool tr_prior = false;
    std::uint64_t tr_seed = 0;
    traverse->add_option("--vae", tr_vae, "VAE checkpoint stem");
    traverse->add_option("--run-dir", tr_run_dir, "Use the VAE of this run directory");
    traverse->add_option("--out", tr_out, "Output PNG");
    traverse->add_option("--scenario", tr_scenario, "combi|background");
    traverse->add_option("--role", tr_role, "Domain of the base observation");
    traverse->add_option("--values", tr_values, "Values per latent dimension");
    traverse->add_option("--span", tr_span, "Half-width of the sweep in standard deviations");
    traverse->add_flag("--prior-scale", tr_prior, "Sweep in prior units instead of posterior deviations");
    traverse->add_option("--seed", tr_seed, "Seed of the base observation episode");
    traverse->add_option("--warmup", tr_warmup, "Random steps before taking the base observation");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Retrain IQ on 1..n expert trajectories and evaluate");
    std::string sw_config, sw_run_dir, sw_counts, sw_out;
    std::optional<std::uint64_t> sw_seed;
    sweep->add_option("--config", sw_config, "Pipeline config (JSON)")->required();
    sweep->add_option("--run-dir", sw_run_dir, "Run directory with completed encode stage");
    sweep->add_option("--counts", sw_counts, "Comma-separated trajectory counts (default from config)");
    sweep->add_option("--seed", sw_seed, "Override the global seed");
    sweep->add_option("--out", sw_out, "Output CSV (default <run-dir>/eval/sweep.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail("usage_error", e.what());
    }

    try {
        if (*validate) {
            const auto config = pipeline::load_config(validate_config);
            std::cout << pipeline::to_json(config).dump(2) << std::endl;
            return 0;
        }

        if (*run) {
            const auto config = load_with_seed(run_config, run_seed);
            const auto dir = pipeline::resolve_run_dir(config, run_dir);
            pipeline::RunOptions options;
            options.stages = pipeline::parse_stages(run_stages);
            options.force = run_force;
            options.log = log_line;
            const auto manifest = pipeline::run_pipeline(config, dir, options);
            std::cout << json{{"status", "ok"}, {"run_dir", dir.string()}, {"manifest", pipeline::to_json(manifest)}}.dump(2)
                      << std::endl;
            return 0;
        }

        if (*evaluate) {
            std::optional<pipeline::PipelineConfig> config;
            if (!ev_config.empty()) config = pipeline::load_config(ev_config);
            eval::AgentSpec agent;
            agent.kind = eval::agent_kind_from_string(ev_agent);
            agent.policy_checkpoint = ev_policy;
            agent.vae_checkpoint = ev_vae;
            agent.q_checkpoint = ev_q;
            agent.mode = eval::acting_mode_from_string(ev_mode);
            agent.checkpoint_label = "given";
            const auto scenario = config ? config->scenario : env::scenario_from_string(ev_scenario);
            const auto role = ev_role.empty() ? eval::evaluation_role(agent.kind) : env::role_from_string(ev_role);
            const auto report = eval::evaluate_agent(agent, pick_domain(config, scenario, role), ev_episodes, ev_seed);
            if (!ev_out.empty()) std::ofstream(ev_out) << eval::results_table({report});
            std::cout << json{{"status", "ok"}, {"report", report}}.dump(2) << std::endl;
            return 0;
        }

        if (*traverse) {
            fs::path stem = tr_vae;
            if (stem.empty()) {
                if (tr_run_dir.empty()) throw ContractViolation("traverse needs --vae or --run-dir");
                stem = pipeline::artifact(pipeline::read_run_manifest(tr_run_dir), tr_run_dir, pipeline::Stage::vae, "vae");
            }
            auto net = vae::load_vae(stem);
            env::CartpoleEnv environment(
                env::standard_domain(env::scenario_from_string(tr_scenario), env::role_from_string(tr_role)), tr_seed);
            environment.reset(tr_seed);
            std::mt19937_64 rng(tr_seed);
            for (int i = 0; i < tr_warmup && !environment.done(); ++i) environment.step(static_cast<int>(rng() % 2));
            const auto& obs = environment.observe();
            const auto size = net->config().image_size;
            const auto x = image_to_tensor(obs.pixels, size, size, net->config().image_channels);
            vae::TraversalOptions options{tr_values, tr_span, tr_prior};
            const auto grid = vae::latent_traversal(net, x, options);
            int h = 0, w = 0;
            const auto pixels = vae::tile_grid(grid, h, w);
            write_png(tr_out, w, h, pixels);
            std::cout << json{{"status", "ok"}, {"output", tr_out}, {"width", w}, {"height", h}}.dump(2) << std::endl;
            return 0;
        }

        if (*sweep) {
            const auto config = load_with_seed(sw_config, sw_seed);
            const auto dir = pipeline::resolve_run_dir(config, sw_run_dir);
            const auto manifest = pipeline::read_run_manifest(dir);
            const auto latent = traj::load_latent_archive(
                pipeline::artifact(manifest, dir, pipeline::Stage::encode, "expert_latent"),
                static_cast<std::size_t>(config.iq.latent_dim));
            const auto vae_stem = pipeline::artifact(manifest, dir, pipeline::Stage::vae, "vae");
            const auto counts = sw_counts.empty() ? config.evaluation.sweep_counts : parse_counts(sw_counts);
            eval::SweepOptions options;
            options.episodes = config.evaluation.episodes;
            options.mode = config.evaluation.mode;
            options.log = log_line;
            const auto points = eval::trajectory_efficiency_sweep(latent, vae_stem, counts, config.iq, config.source,
                                                                  config.seed, options);
            const fs::path out = sw_out.empty() ? dir / "eval" / "sweep.csv" : fs::path(sw_out);
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            std::ofstream(out) << eval::sweep_csv(points);
            json rows = json::array();
            for (const auto& p : points) rows.push_back({{"n_trajectories", p.n_trajectories}, {"mean", p.mean}, {"std", p.std}});
            std::cout << json{{"status", "ok"}, {"output", out.string()}, {"points", rows}}.dump(2) << std::endl;
            return 0;
        }
    } catch (const ConfigError& e) {
        return fail(e.kind(), e.what(), e.errors());
    } catch (const Error& e) {
        return fail(e.kind(), e.what());
    } catch (const std::exception& e) {
        return fail("internal_error", e.what());
    }
    return 0;
}

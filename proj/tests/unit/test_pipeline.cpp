#include "test_support.hpp"

#include "zsil/common/checkpoint.hpp"
#include "zsil/common/error.hpp"
#include "zsil/eval/harness.hpp"
#include "zsil/pipeline/pipeline.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace zsil;
using namespace zsil::pipeline;
using nlohmann::json;

namespace {

bool has_error(const ConfigError& e, const std::string& path) {
    for (const auto& f : e.errors()) {
        if (f.path == path) return true;
    }
    return false;
}

std::vector<FieldError> errors_of(const json& raw) {
    try {
        validate_config(raw);
    } catch (const ConfigError& e) {
        return e.errors();
    }
    return {};
}

bool mentions(const std::vector<FieldError>& errs, const std::string& path) {
    for (const auto& e : errs) {
        if (e.path == path) return true;
    }
    return false;
}

// Every stage at toy scale so the whole pipeline runs in seconds.
json toy_config() {
    return {{"name", "toy"},
            {"scenario", "combi"},
            {"seed", 3},
            {"ppo", {{"total_steps", 128}, {"rollout_steps", 64}, {"batch_size", 32}, {"epochs", 1}, {"eval_every", 128}, {"eval_episodes", 1}}},
            {"vae", {{"conv_channels", {4, 4, 4, 4}}, {"fc_width", 8}, {"train_steps", 2}, {"batch_size", 2}, {"checkpoint_every", 1}}},
            {"iq", {{"train_steps", 10}, {"batch_size", 8}}},
            {"data", {{"expert_episodes", 2}, {"random_episodes", 2}}},
            {"evaluation", {{"episodes", 2}, {"sweep_counts", {1, 2}}}}};
}

eval::EvalReport fake_report(eval::AgentKind kind, std::vector<double> rewards) {
    eval::EvalReport r;
    r.agent.kind = kind;
    r.domain = env::standard_domain(env::Scenario::combi, eval::evaluation_role(kind));
    r.episode_rewards = rewards;
    for (std::size_t i = 0; i < rewards.size(); ++i) r.episode_seeds.push_back(i);
    const auto s = eval::reward_stats(rewards);
    r.mean = s.mean;
    r.std = s.std;
    return r;
}

} // namespace

TEST_CASE("minimal config materializes every default") {
    const auto c = validate_config(json{{"scenario", "combi"}});
    const auto j = to_json(c);
    CHECK(j.at("vae").at("beta") == 4.0);
    CHECK(j.at("vae").at("latent_dim") == 10);
    CHECK(j.at("vae").at("c_max") == 25.0);
    CHECK(j.at("ppo").at("batch_size") == 128);
    CHECK(j.at("iq").at("alpha") == 0.5);
    CHECK(j.at("iq").at("gamma") == 0.99);
    CHECK(j.at("iq").at("batch_size") == 256);
    CHECK(j.at("evaluation").at("episodes") == 20);
    CHECK(j.at("domains").at("source").at("themes").size() == 3);
    CHECK(validate_config(j).source == c.source);
    CHECK(to_json(validate_config(j)) == j);
}

TEST_CASE("config errors name their fields") {
    CHECK(mentions(errors_of(json{{"vae", {{"beta", -1}}}}), "vae.beta"));
    CHECK(mentions(errors_of(json{{"iq", {{"latent_dim", 32}}}}), "iq.latent_dim"));
    CHECK(mentions(errors_of(json{{"vae", {{"latent_dim", 32}}}}), "iq.latent_dim"));
    CHECK(mentions(errors_of(json{{"ppo", {{"num_actions", 3}}}}), "ppo.num_actions"));
    CHECK(mentions(errors_of(json{{"vae", {{"betta", 3}}}}), "vae.betta"));
    CHECK(mentions(errors_of(json{{"colour", 1}}), "colour"));
    CHECK(mentions(errors_of(json{{"iq", {{"gamma", "high"}}}}), "iq.gamma"));
    CHECK(mentions(errors_of(json{{"scenario", "mario"}}), "scenario"));
    CHECK(mentions(errors_of(json{{"evaluation", {{"sweep_counts", {1, 50}}}}}), "evaluation.sweep_counts"));
    CHECK(mentions(errors_of(json{{"domains", {{"target", {{"themes", json::array()}}}}}}), "domains.target.themes"));
    const auto several = errors_of(json{{"vae", {{"beta", -1}}}, {"iq", {{"alpha", 0}}}});
    CHECK(several.size() >= 2);
    try {
        validate_config(json{{"vae", {{"beta", -1}}}});
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(has_error(e, "vae.beta"));
        CHECK(e.kind() == "config_error");
    }
}

TEST_CASE("config hash ignores the run directory") {
    auto a = validate_config(json::object());
    auto b = a;
    b.run_dir = "elsewhere";
    CHECK(config_hash(a) == config_hash(b));
    b.seed = 7;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("stage lists") {
    CHECK(parse_stages("all").size() == 5);
    const auto s = parse_stages("evaluate,expert");
    REQUIRE(s.size() == 2);
    CHECK(s[0] == Stage::expert);
    CHECK(s[1] == Stage::evaluate);
    CHECK_THROWS_AS(parse_stages("expert,bogus"), ContractViolation);
}

TEST_CASE("run directory resolution") {
    auto c = validate_config(json{{"run_dir", "from_config"}});
    ::unsetenv(kRunDirEnv);
    CHECK(resolve_run_dir(c) == "from_config");
    ::setenv(kRunDirEnv, "from_env", 1);
    CHECK(resolve_run_dir(c) == "from_env");
    CHECK(resolve_run_dir(c, "from_flag") == "from_flag");
    ::unsetenv(kRunDirEnv);
}

TEST_CASE("evaluate without prior stages is a dependency error") {
    TempDir tmp("deps");
    const auto c = validate_config(toy_config());
    RunOptions options;
    options.stages = {Stage::evaluate};
    CHECK_THROWS_AS(run_pipeline(c, tmp.path(), options), DependencyError);
    options.stages = {Stage::iq};
    CHECK_THROWS_AS(run_pipeline(c, tmp.path(), options), DependencyError);
}

TEST_CASE("a held lock refuses a second pipeline") {
    TempDir tmp("lock");
    std::ofstream(tmp / ".lock") << ::getpid();
    RunOptions options;
    options.stages = {Stage::vae};
    CHECK_THROWS_AS(run_pipeline(validate_config(toy_config()), tmp.path(), options), ContractViolation);
    // A lock left by a dead process is reclaimed.
    std::ofstream(tmp / ".lock") << 999999999;
    CHECK_NOTHROW(run_pipeline(validate_config(toy_config()), tmp.path(), options));
    CHECK_FALSE(std::filesystem::exists(tmp / ".lock"));
}

TEST_CASE("toy pipeline runs end to end and is idempotent") {
    TempDir tmp("pipeline");
    const auto c = validate_config(toy_config());
    const auto first = run_pipeline(c, tmp.path());
    for (auto s : kAllStages) CHECK(first.complete(s));
    const auto results = artifact(first, tmp.path(), Stage::evaluate, "results");
    std::ifstream is(results);
    std::string csv((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    CHECK(csv.find("Ours,Cartpole Combi,target") != std::string::npos);
    CHECK(csv.find("PPO-Transfer") != std::string::npos);
    CHECK(std::filesystem::exists(tmp / "config.json"));

    // Every artifact named in the manifest exists.
    for (const auto& [name, rec] : first.stages) {
        for (const auto& [key, rel] : rec.artifacts) {
            const bool present = std::filesystem::exists(tmp / rel) || checkpoint_exists(tmp / rel);
            CHECK_MESSAGE(present, name << "/" << key);
        }
    }

    const auto vae_time = std::filesystem::last_write_time(tmp / "vae" / "vae.pt");
    const auto second = run_pipeline(c, tmp.path());
    CHECK(to_json(second) == to_json(first));
    CHECK(std::filesystem::last_write_time(tmp / "vae" / "vae.pt") == vae_time);

    RunOptions force;
    force.stages = {Stage::iq, Stage::evaluate};
    force.force = true;
    const auto third = run_pipeline(c, tmp.path(), force);
    CHECK(third.complete(Stage::evaluate));
    CHECK(std::filesystem::last_write_time(tmp / "vae" / "vae.pt") == vae_time);

    // A different config may not reuse the directory silently.
    auto other = c;
    other.seed = 99;
    CHECK_THROWS_AS(run_pipeline(other, tmp.path()), ConfigError);

    // Lost artifacts demote their stage.
    std::filesystem::remove_all(tmp / "latent");
    RunOptions only_iq;
    only_iq.stages = {Stage::iq};
    CHECK_THROWS_AS(run_pipeline(c, tmp.path(), only_iq), DependencyError);
    CHECK_FALSE(read_run_manifest(tmp.path()).complete(Stage::encode));

    // Rebuilding a stage invalidates everything downstream of it.
    RunOptions only_encode;
    only_encode.stages = {Stage::encode};
    const auto rebuilt = run_pipeline(c, tmp.path(), only_encode);
    CHECK(rebuilt.complete(Stage::encode));
    CHECK(rebuilt.complete(Stage::vae));
    CHECK_FALSE(rebuilt.complete(Stage::iq));
    CHECK_FALSE(rebuilt.complete(Stage::evaluate));
}

TEST_CASE("results table rows follow the baseline order") {
    using eval::AgentKind;
    std::vector<eval::EvalReport> reports;
    for (auto k : {AgentKind::ours, AgentKind::ppo_target_iq, AgentKind::random, AgentKind::ppo_transfer,
                   AgentKind::ppo_source_iq, AgentKind::ppo_target, AgentKind::ppo_source}) {
        reports.push_back(fake_report(k, {10.0, 20.0, 33.0}));
    }
    const auto csv = eval::results_table(reports);
    std::vector<std::string> lines;
    std::istringstream is(csv);
    for (std::string line; std::getline(is, line);) lines.push_back(line);
    REQUIRE(lines.size() == 8);
    CHECK(lines[0] == "agent,environment,domain,mean,std,episodes,seed,checkpoint");
    const char* order[] = {"Random", "PPO-Source", "PPO-Target", "PPO-Transfer", "PPO-Source-IQ", "PPO-Target-IQ", "Ours"};
    for (int i = 0; i < 7; ++i) CHECK(lines[i + 1].rfind(std::string(order[i]) + ",", 0) == 0);
    CHECK(lines[1].find(",21.0000,") != std::string::npos);
    CHECK_THROWS_AS(eval::results_table({}), ContractViolation);

    auto broken = fake_report(AgentKind::random, {1.0, 2.0});
    broken.mean = 5.0;
    CHECK_THROWS_AS(eval::results_table({broken}), ContractViolation);
    CHECK_THROWS_AS(eval::reward_stats({}), ContractViolation);
}

TEST_CASE("reward stats use the population deviation") {
    const auto s = eval::reward_stats({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0});
    CHECK(s.mean == 5.0);
    CHECK(s.std == 2.0);
}

TEST_CASE("random agent evaluation is seeded per episode") {
    const auto domain = env::standard_domain(env::Scenario::combi, env::Role::target);
    eval::AgentSpec random;
    const auto a = eval::evaluate_agent(random, domain, 20, 100);
    const auto b = eval::evaluate_agent(random, domain, 20, 100);
    CHECK(a.episode_rewards == b.episode_rewards);
    CHECK(a.episode_seeds.front() == 100);
    CHECK(a.episode_seeds.back() == 119);
    CHECK_NOTHROW(a.validate());
    CHECK(a.mean >= 10.0);
    CHECK(a.mean <= 35.0);
}

TEST_CASE("agent specs require their checkpoints") {
    eval::AgentSpec ours;
    ours.kind = eval::AgentKind::ours;
    CHECK_THROWS_AS(ours.validate(), ContractViolation);
    eval::AgentSpec transfer;
    transfer.kind = eval::AgentKind::ppo_transfer;
    CHECK_THROWS_AS(transfer.validate(), ContractViolation);
    CHECK(eval::agent_kind_from_string("ppo_source_iq") == eval::AgentKind::ppo_source_iq);
    CHECK_THROWS_AS(eval::agent_kind_from_string("dqn"), ContractViolation);
    const json j = transfer;
    CHECK(j.get<eval::AgentSpec>().kind == eval::AgentKind::ppo_transfer);
}

TEST_CASE("sweep guards its counts") {
    traj::LatentTrajectorySet set;
    set.observation_shape = {10};
    traj::Episode<float> ep;
    ep.observations.assign(20, 0.0f);
    ep.actions = {0};
    ep.rewards = {1.0f};
    ep.dones = {1};
    set.episodes = {ep, ep};
    const auto domain = env::standard_domain(env::Scenario::combi, env::Role::source);
    CHECK_THROWS_AS(eval::trajectory_efficiency_sweep(set, "missing", {0}, iq::IqConfig{}, domain, 0), ContractViolation);
    CHECK_THROWS_AS(eval::trajectory_efficiency_sweep(set, "missing", {3}, iq::IqConfig{}, domain, 0), ContractViolation);
    CHECK_THROWS_AS(eval::trajectory_efficiency_sweep(set, "missing", {}, iq::IqConfig{}, domain, 0), ContractViolation);
}

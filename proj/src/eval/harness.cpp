#include "zsil/eval/harness.hpp"

#include "zsil/common/checkpoint.hpp"
#include "zsil/common/seed.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace zsil::eval {
using nlohmann::json;

RewardStats reward_stats(const std::vector<double>& rewards) {
    if (rewards.empty()) throw ContractViolation("reward_stats: no episodes");
    const double n = static_cast<double>(rewards.size());
    RewardStats s;
    s.mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double r : rewards) var += (r - s.mean) * (r - s.mean);
    s.std = std::sqrt(var / n);
    return s;
}

void EvalReport::validate() const {
    if (episode_rewards.empty()) throw ContractViolation("EvalReport: no episodes");
    if (episode_seeds.size() != episode_rewards.size()) throw ContractViolation("EvalReport: seed count mismatch");
    const auto s = reward_stats(episode_rewards);
    if (std::abs(s.mean - mean) > 1e-9 || std::abs(s.std - std) > 1e-9) {
        throw ContractViolation("EvalReport: mean/std do not match the episode rewards");
    }
}

void to_json(json& j, const EvalReport& r) {
    j = {{"agent", r.agent},     {"domain", r.domain},     {"episode_rewards", r.episode_rewards},
         {"episode_seeds", r.episode_seeds}, {"seed", r.seed}, {"mean", r.mean},
         {"std", r.std}};
}

EvalReport evaluate_actor(env::Actor& actor, const AgentSpec& agent, const env::DomainSpec& domain, int episodes,
                          std::uint64_t seed) {
    if (episodes < 1) throw ContractViolation("evaluate: episodes must be >= 1");
    env::CartpoleEnv environment(domain, seed);
    std::mt19937_64 rng(derive_seed(seed, "actor"));
    EvalReport report;
    report.agent = agent;
    report.domain = domain;
    report.seed = seed;
    for (int i = 0; i < episodes; ++i) {
        const auto episode_seed = seed + static_cast<std::uint64_t>(i);
        environment.reset(episode_seed);
        double total = 0.0;
        while (!environment.done()) total += environment.step(actor.act(environment.observe(), rng)).reward;
        report.episode_rewards.push_back(total);
        report.episode_seeds.push_back(episode_seed);
    }
    const auto s = reward_stats(report.episode_rewards);
    report.mean = s.mean;
    report.std = s.std;
    return report;
}

EvalReport evaluate_agent(const AgentSpec& agent, const env::DomainSpec& domain, int episodes, std::uint64_t seed) {
    auto actor = make_actor(agent, domain);
    return evaluate_actor(*actor, agent, domain, episodes, seed);
}

namespace {

std::string environment_name(env::Scenario s) {
    return s == env::Scenario::combi ? "Cartpole Combi" : "Cartpole Background";
}

std::string format_number(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

} // namespace

std::string results_table(std::vector<EvalReport> reports) {
    if (reports.empty()) throw ContractViolation("results_table: no reports");
    for (const auto& r : reports) r.validate();
    std::stable_sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
        if (a.agent.kind != b.agent.kind) return a.agent.kind < b.agent.kind;
        return a.domain.scenario < b.domain.scenario;
    });
    std::ostringstream os;
    os << "agent,environment,domain,mean,std,episodes,seed,checkpoint\n";
    for (const auto& r : reports) {
        os << display_name(r.agent.kind) << ',' << environment_name(r.domain.scenario) << ','
           << env::to_string(r.domain.role) << ',' << format_number(r.mean) << ',' << format_number(r.std) << ','
           << r.episode_rewards.size() << ',' << r.seed << ',' << r.agent.checkpoint_label << '\n';
    }
    return os.str();
}

std::vector<SweepPoint> trajectory_efficiency_sweep(const traj::LatentTrajectorySet& expert,
                                                    const std::filesystem::path& vae_checkpoint,
                                                    const std::vector<int>& counts, const iq::IqConfig& config,
                                                    const env::DomainSpec& domain, std::uint64_t seed,
                                                    const SweepOptions& options) {
    if (counts.empty()) throw ContractViolation("sweep: no trajectory counts");
    for (int n : counts) {
        if (n < 1) throw ContractViolation("sweep: trajectory count must be >= 1, got " + std::to_string(n));
        if (static_cast<std::size_t>(n) > expert.episodes.size()) {
            throw ContractViolation("sweep: archive holds " + std::to_string(expert.episodes.size()) +
                                    " episodes, " + std::to_string(n) + " requested");
        }
    }
    auto vae = vae::load_vae(vae_checkpoint);
    std::vector<SweepPoint> points;
    for (int n : counts) {
        const auto subset = traj::take_episodes(expert, static_cast<std::size_t>(n));
        iq::IqTrainOptions train_options;
        train_options.log = options.log;
        train_options.log_every = std::max<std::int64_t>(1, config.train_steps / 10);
        auto trained = iq::train_iq(subset, config, derive_seed(seed, "sweep_iq_" + std::to_string(n)), train_options);
        LatentQActor actor(vae, trained.q, options.mode == ActingMode::greedy, "sweep");
        AgentSpec spec{AgentKind::ppo_source_iq, {}, vae_checkpoint.string(), "in-memory", options.mode, "final"};
        const auto report = evaluate_actor(actor, spec, domain, options.episodes, derive_seed(seed, "sweep_eval"));
        points.push_back({n, report.mean, report.std});
        if (options.log) {
            options.log("sweep n=" + std::to_string(n) + " mean " + std::to_string(report.mean) + " std " +
                        std::to_string(report.std));
        }
    }
    return points;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
    std::ostringstream os;
    os << "n_trajectories,mean,std\n";
    for (const auto& p : points) os << p.n_trajectories << ',' << format_number(p.mean) << ',' << format_number(p.std) << '\n';
    return os.str();
}

} // namespace zsil::eval

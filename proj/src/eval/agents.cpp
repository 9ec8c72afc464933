#include "zsil/eval/harness.hpp"

#include "zsil/common/checkpoint.hpp"
#include "zsil/common/tensor.hpp"
#include "zsil/ppo/ppo.hpp"

#include <array>

namespace zsil::eval {
using nlohmann::json;

namespace {

struct KindInfo {
    AgentKind kind;
    const char* id;
    const char* display;
    env::Role role;
};

constexpr std::array<KindInfo, 7> kKinds{{
    {AgentKind::random, "random", "Random", env::Role::target},
    {AgentKind::ppo_source, "ppo_source", "PPO-Source", env::Role::source},
    {AgentKind::ppo_target, "ppo_target", "PPO-Target", env::Role::target},
    {AgentKind::ppo_transfer, "ppo_transfer", "PPO-Transfer", env::Role::target},
    {AgentKind::ppo_source_iq, "ppo_source_iq", "PPO-Source-IQ", env::Role::source},
    {AgentKind::ppo_target_iq, "ppo_target_iq", "PPO-Target-IQ", env::Role::target},
    {AgentKind::ours, "ours", "Ours", env::Role::target},
}};

const KindInfo& info(AgentKind kind) {
    for (const auto& k : kKinds) {
        if (k.kind == kind) return k;
    }
    throw ContractViolation("unknown agent kind");
}

bool uses_policy(AgentKind k) {
    return k == AgentKind::ppo_source || k == AgentKind::ppo_target || k == AgentKind::ppo_transfer;
}
bool uses_latent_q(AgentKind k) {
    return k == AgentKind::ppo_source_iq || k == AgentKind::ppo_target_iq || k == AgentKind::ours;
}

} // namespace

std::string to_string(AgentKind kind) { return info(kind).id; }

AgentKind agent_kind_from_string(const std::string& s) {
    for (const auto& k : kKinds) {
        if (s == k.id) return k.kind;
    }
    throw ContractViolation("unknown agent kind '" + s + "'");
}

std::string to_string(ActingMode mode) { return mode == ActingMode::greedy ? "greedy" : "stochastic"; }

ActingMode acting_mode_from_string(const std::string& s) {
    if (s == "greedy") return ActingMode::greedy;
    if (s == "stochastic") return ActingMode::stochastic;
    throw ContractViolation("unknown acting mode '" + s + "'");
}

std::string display_name(AgentKind kind) { return info(kind).display; }
env::Role evaluation_role(AgentKind kind) { return info(kind).role; }

void AgentSpec::validate() const {
    if (uses_policy(kind) && policy_checkpoint.empty()) {
        throw ContractViolation(to_string(kind) + " requires a policy checkpoint");
    }
    if (uses_latent_q(kind) && (vae_checkpoint.empty() || q_checkpoint.empty())) {
        throw ContractViolation(to_string(kind) + " requires a VAE checkpoint and a Q checkpoint");
    }
}

void to_json(json& j, const AgentSpec& a) {
    j = {{"kind", to_string(a.kind)}, {"mode", to_string(a.mode)}, {"checkpoint_label", a.checkpoint_label}};
    if (!a.policy_checkpoint.empty()) j["policy_checkpoint"] = a.policy_checkpoint;
    if (!a.vae_checkpoint.empty()) j["vae_checkpoint"] = a.vae_checkpoint;
    if (!a.q_checkpoint.empty()) j["q_checkpoint"] = a.q_checkpoint;
}

void from_json(const json& j, AgentSpec& a) {
    a.kind = agent_kind_from_string(j.at("kind").get<std::string>());
    a.mode = acting_mode_from_string(j.value("mode", std::string("greedy")));
    a.checkpoint_label = j.value("checkpoint_label", std::string("best"));
    a.policy_checkpoint = j.value("policy_checkpoint", std::string());
    a.vae_checkpoint = j.value("vae_checkpoint", std::string());
    a.q_checkpoint = j.value("q_checkpoint", std::string());
}

LatentQActor::LatentQActor(vae::VaeNet vae, iq::QNetwork q, bool greedy, std::string label)
    : vae_(std::move(vae)), q_(std::move(q)), greedy_(greedy), label_(std::move(label)) {
    if (vae_->config().latent_dim != q_->latent_dim()) {
        throw DimensionMismatch("Q network expects latent dimension " + std::to_string(q_->latent_dim()) +
                                " but the VAE produces " + std::to_string(vae_->config().latent_dim));
    }
    vae_->eval();
    q_->eval();
}

int LatentQActor::act(const env::Observation& obs, std::mt19937_64& rng) {
    torch::NoGradGuard guard;
    const auto size = vae_->config().image_size;
    const auto z = vae_->encode(image_to_tensor(obs.pixels, size, size, vae_->config().image_channels)).mean;
    if (greedy_) return static_cast<int>(iq::greedy_actions(q_, z).item<std::int64_t>());
    const auto p = to_vector(iq::recover_policy(q_, z).to(torch::kDouble));
    return ppo::sample_categorical(p, rng);
}

std::unique_ptr<env::Actor> make_actor(const AgentSpec& agent, const env::DomainSpec& domain) {
    agent.validate();
    env::validate_domain(domain);
    const bool greedy = agent.mode == ActingMode::greedy;
    if (agent.kind == AgentKind::random) return std::make_unique<env::RandomActor>(env::kNumActions);

    if (uses_policy(agent.kind)) {
        const auto manifest = read_checkpoint_manifest(agent.policy_checkpoint, "policy");
        const int actions = manifest.at("config").value("num_actions", env::kNumActions);
        if (actions != env::kNumActions) {
            throw DimensionMismatch("policy has " + std::to_string(actions) + " actions, domain has " +
                                    std::to_string(env::kNumActions));
        }
        return std::make_unique<ppo::PolicyActor>(ppo::load_policy(agent.policy_checkpoint), greedy, to_string(agent.kind));
    }

    auto vae = vae::load_vae(agent.vae_checkpoint);
    if (vae->config().image_size != env::kObservationSize || vae->config().image_channels != env::kChannels) {
        throw DimensionMismatch("VAE input shape does not match the domain observations");
    }
    auto q = iq::load_q(agent.q_checkpoint);
    if (q->num_actions() != env::kNumActions) {
        throw DimensionMismatch("Q network has " + std::to_string(q->num_actions()) + " actions, domain has " +
                                std::to_string(env::kNumActions));
    }
    return std::make_unique<LatentQActor>(std::move(vae), std::move(q), greedy, to_string(agent.kind));
}

} // namespace zsil::eval

#include "zsil/ppo/ppo.hpp"

#include "zsil/common/checkpoint.hpp"
#include "zsil/common/seed.hpp"
#include "zsil/common/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace zsil::ppo {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Mean episode reward of the random policy on Cartpole; the divergence floor.
constexpr double kRandomBaseline = 22.0;

void copy_parameters(PolicyNet& from, PolicyNet& to) {
    torch::NoGradGuard guard;
    auto src = from->parameters();
    auto dst = to->parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].copy_(src[i]);
}

torch::Tensor observation_tensor(const env::Observation& obs) {
    return image_to_tensor(obs.pixels, env::kObservationSize, env::kObservationSize);
}

} // namespace

std::vector<FieldError> PpoConfig::validate(const std::string& prefix) const {
    std::vector<FieldError> errs;
    const auto bad = [&](const char* field, const std::string& msg) { errs.push_back({prefix + "." + field, msg}); };
    if (total_steps <= 0) bad("total_steps", "must be positive");
    if (batch_size <= 0) bad("batch_size", "must be positive");
    if (rollout_steps <= 0) bad("rollout_steps", "must be positive");
    if (batch_size > rollout_steps) bad("batch_size", "must not exceed rollout_steps");
    if (epochs <= 0) bad("epochs", "must be positive");
    if (!(learning_rate > 0)) bad("learning_rate", "must be positive");
    if (lr_decay_steps <= 0) bad("lr_decay_steps", "must be positive");
    if (!(clip_epsilon > 0 && clip_epsilon < 1)) bad("clip_epsilon", "must lie in (0, 1)");
    if (!(value_coef > 0)) bad("value_coef", "must be positive");
    if (!(entropy_coef >= 0)) bad("entropy_coef", "must be non-negative");
    if (!(gamma > 0 && gamma <= 1)) bad("gamma", "must lie in (0, 1]");
    if (!(gae_lambda >= 0 && gae_lambda <= 1)) bad("gae_lambda", "must lie in [0, 1]");
    if (!(max_grad_norm > 0)) bad("max_grad_norm", "must be positive");
    if (reward_cap <= 0) bad("reward_cap", "must be positive");
    if (eval_every <= 0) bad("eval_every", "must be positive");
    if (eval_episodes <= 0) bad("eval_episodes", "must be positive");
    if (num_actions < 2) bad("num_actions", "must be at least 2");
    return errs;
}

PpoConfig mario_ppo_config() {
    PpoConfig c;
    c.total_steps = 5'000'000;
    c.batch_size = 32;
    c.learning_rate = 2.5e-4;
    c.lr_decay_steps = c.total_steps;
    c.value_coef = 0.5;
    c.entropy_coef = 0.01;
    c.reward_cap = 4500;
    return c;
}

void to_json(json& j, const PpoConfig& c) {
    j = {{"total_steps", c.total_steps},   {"batch_size", c.batch_size},       {"rollout_steps", c.rollout_steps},
         {"epochs", c.epochs},             {"learning_rate", c.learning_rate}, {"lr_decay_steps", c.lr_decay_steps},
         {"clip_epsilon", c.clip_epsilon},
         {"value_coef", c.value_coef},     {"entropy_coef", c.entropy_coef},   {"gamma", c.gamma},
         {"gae_lambda", c.gae_lambda},     {"max_grad_norm", c.max_grad_norm}, {"reward_cap", c.reward_cap},
         {"eval_every", c.eval_every},     {"eval_episodes", c.eval_episodes}, {"num_actions", c.num_actions}};
}

void from_json(const json& j, PpoConfig& c) {
    const PpoConfig d;
    c.total_steps = j.value("total_steps", d.total_steps);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.rollout_steps = j.value("rollout_steps", d.rollout_steps);
    c.epochs = j.value("epochs", d.epochs);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.lr_decay_steps = j.value("lr_decay_steps", d.lr_decay_steps);
    c.clip_epsilon = j.value("clip_epsilon", d.clip_epsilon);
    c.value_coef = j.value("value_coef", d.value_coef);
    c.entropy_coef = j.value("entropy_coef", d.entropy_coef);
    c.gamma = j.value("gamma", d.gamma);
    c.gae_lambda = j.value("gae_lambda", d.gae_lambda);
    c.max_grad_norm = j.value("max_grad_norm", d.max_grad_norm);
    c.reward_cap = j.value("reward_cap", d.reward_cap);
    c.eval_every = j.value("eval_every", d.eval_every);
    c.eval_episodes = j.value("eval_episodes", d.eval_episodes);
    c.num_actions = j.value("num_actions", d.num_actions);
}

Advantages compute_gae(std::span<const float> rewards, std::span<const float> values,
                       std::span<const float> next_values, std::span<const std::uint8_t> episode_ends,
                       double gamma, double lambda) {
    const std::size_t n = rewards.size();
    if (values.size() != n || next_values.size() != n || episode_ends.size() != n) {
        throw DimensionMismatch("compute_gae: arrays differ in length");
    }
    Advantages out;
    out.advantages.assign(n, 0.0f);
    out.returns.assign(n, 0.0f);
    double running = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        const double delta = rewards[k] + gamma * next_values[k] - values[k];
        running = delta + (episode_ends[k] ? 0.0 : gamma * lambda * running);
        out.advantages[k] = static_cast<float>(running);
        out.returns[k] = static_cast<float>(running + values[k]);
    }
    return out;
}

RolloutBuffer::RolloutBuffer(int cap)
    : capacity(cap),
      observations(static_cast<std::size_t>(cap) * env::kObservationBytes),
      actions(cap),
      log_probs(cap),
      rewards(cap),
      values(cap),
      next_values(cap),
      episode_ends(cap),
      advantages(cap),
      returns(cap) {}

void RolloutBuffer::add(const env::Observation& obs, int action, float log_prob, float reward, float value) {
    if (full()) throw ContractViolation("RolloutBuffer::add on a full buffer");
    std::copy(obs.pixels.begin(), obs.pixels.end(),
              observations.begin() + static_cast<std::ptrdiff_t>(size) * static_cast<std::ptrdiff_t>(env::kObservationBytes));
    actions[size] = action;
    log_probs[size] = log_prob;
    rewards[size] = reward;
    values[size] = value;
    next_values[size] = 0.0f;
    episode_ends[size] = 0;
    ++size;
}

torch::Tensor normalize_advantages(const torch::Tensor& advantages) {
    if (advantages.numel() < 2) return advantages - advantages.mean();
    return (advantages - advantages.mean()) / (advantages.std() + 1e-8);
}

torch::Tensor clipped_surrogate(const torch::Tensor& ratio, const torch::Tensor& advantages, double clip_epsilon) {
    const auto unclipped = ratio * advantages;
    const auto clipped = torch::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantages;
    return torch::min(unclipped, clipped).mean();
}

PpoLoss ppo_loss(const torch::Tensor& new_log_probs, const torch::Tensor& old_log_probs,
                 const torch::Tensor& advantages, const torch::Tensor& predicted_values,
                 const torch::Tensor& returns, const torch::Tensor& entropy, const PpoConfig& config) {
    PpoLoss l;
    const auto log_ratio = new_log_probs - old_log_probs;
    const auto ratio = torch::exp(log_ratio);
    l.surrogate = clipped_surrogate(ratio, advantages, config.clip_epsilon);
    l.value_loss = torch::mse_loss(predicted_values, returns);
    l.entropy = entropy.mean();
    l.total = -l.surrogate + config.value_coef * l.value_loss - config.entropy_coef * l.entropy;
    {
        torch::NoGradGuard guard;
        l.clip_fraction = ((ratio - 1.0).abs() > config.clip_epsilon).to(torch::kFloat64).mean().item<double>();
        l.approx_kl = ((ratio - 1.0) - log_ratio).mean().item<double>();
    }
    return l;
}

UpdateStats ppo_update(PolicyNet& net, torch::optim::Adam& optimizer, const RolloutBuffer& buffer,
                       const PpoConfig& config, std::mt19937_64& rng) {
    if (!buffer.full()) throw ContractViolation("ppo_update: rollout buffer is not full");
    net->train();
    std::vector<std::int64_t> order(buffer.size);
    std::iota(order.begin(), order.end(), 0);

    UpdateStats stats;
    int batches = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int start = 0; start + config.batch_size <= buffer.size; start += config.batch_size) {
            std::vector<const std::uint8_t*> images;
            std::vector<std::int64_t> idx(order.begin() + start, order.begin() + start + config.batch_size);
            images.reserve(idx.size());
            for (auto i : idx) images.push_back(buffer.observations.data() + i * static_cast<std::int64_t>(env::kObservationBytes));
            const auto index = torch::tensor(idx, torch::kInt64);
            const auto obs = images_to_tensor(images, env::kObservationSize, env::kObservationSize);
            const auto actions = torch::tensor(buffer.actions, torch::kInt64).index_select(0, index);
            const auto old_log_probs = torch::tensor(buffer.log_probs).index_select(0, index);
            const auto advantages = normalize_advantages(torch::tensor(buffer.advantages).index_select(0, index));
            const auto returns = torch::tensor(buffer.returns).index_select(0, index);

            const auto out = net->forward(obs);
            const auto log_probs = torch::log_softmax(out.logits, -1);
            const auto new_log_probs = log_probs.gather(1, actions.unsqueeze(1)).squeeze(1);
            const auto entropy = -(log_probs.exp() * log_probs).sum(-1);
            const auto loss = ppo_loss(new_log_probs, old_log_probs, advantages, out.value, returns, entropy, config);
            require_finite(loss.total, "PPO loss");

            optimizer.zero_grad();
            loss.total.backward();
            torch::nn::utils::clip_grad_norm_(net->parameters(), config.max_grad_norm);
            optimizer.step();

            stats.surrogate += loss.surrogate.item<double>();
            stats.value_loss += loss.value_loss.item<double>();
            stats.entropy += loss.entropy.item<double>();
            stats.clip_fraction += loss.clip_fraction;
            stats.approx_kl += loss.approx_kl;
            ++batches;
        }
    }
    if (batches > 0) {
        stats.surrogate /= batches;
        stats.value_loss /= batches;
        stats.entropy /= batches;
        stats.clip_fraction /= batches;
        stats.approx_kl /= batches;
    }
    return stats;
}

int sample_categorical(std::span<const double> probs, std::mt19937_64& rng) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

PolicyActor::PolicyActor(PolicyNet net, bool greedy, std::string label)
    : net_(std::move(net)), greedy_(greedy), label_(std::move(label)) {
    net_->eval();
}

int PolicyActor::act(const env::Observation& obs, std::mt19937_64& rng) {
    torch::NoGradGuard guard;
    const auto logits = net_->forward(observation_tensor(obs)).logits[0];
    if (greedy_) return static_cast<int>(logits.argmax().item<std::int64_t>());
    const auto probs = to_vector(torch::softmax(logits, -1));
    return sample_categorical(probs, rng);
}

PolicyEvaluation evaluate_policy(PolicyNet& net, const env::DomainSpec& domain, int episodes, std::uint64_t seed,
                                 bool greedy) {
    PolicyActor actor(net, greedy);
    env::CartpoleEnv environment(domain, seed);
    std::mt19937_64 rng(derive_seed(seed, "actor"));
    PolicyEvaluation ev;
    for (int i = 0; i < episodes; ++i) {
        environment.reset(seed + static_cast<std::uint64_t>(i));
        double total = 0.0;
        bool done = false;
        while (!done) {
            const auto outcome = environment.step(actor.act(environment.observe(), rng));
            total += outcome.reward;
            done = outcome.done;
        }
        ev.episode_rewards.push_back(total);
    }
    ev.mean = std::accumulate(ev.episode_rewards.begin(), ev.episode_rewards.end(), 0.0) / episodes;
    double var = 0.0;
    for (double r : ev.episode_rewards) var += (r - ev.mean) * (r - ev.mean);
    ev.std = std::sqrt(var / episodes);
    net->train();
    return ev;
}

ExpertResult train_expert(const env::DomainSpec& domain, const PpoConfig& config, std::uint64_t seed,
                          const ExpertOptions& options) {
    env::validate_domain(domain);
    if (const auto errs = config.validate("ppo"); !errs.empty()) throw ConfigError(errs);
    const auto log = [&](const std::string& msg) {
        if (options.log) options.log(msg);
    };

    torch::manual_seed(derive_seed(seed, "init"));
    ExpertResult result;
    result.final_policy = PolicyNet(config.num_actions);
    result.best_policy = PolicyNet(config.num_actions);
    copy_parameters(result.final_policy, result.best_policy);
    PolicyNet& net = result.final_policy;

    torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(config.learning_rate).eps(1e-5));
    env::CartpoleEnv environment(domain, derive_seed(seed, "env"));
    environment.reset();
    std::mt19937_64 rng(derive_seed(seed, "actions"));
    const std::uint64_t eval_seed = derive_seed(seed, "eval");

    RolloutBuffer buffer(config.rollout_steps);
    std::int64_t next_eval = config.eval_every;
    std::vector<double> episode_returns;
    double running_return = 0.0;
    result.best_eval = -1.0;

    const auto value_of = [&](const env::Observation& obs) {
        torch::NoGradGuard guard;
        return net->forward(observation_tensor(obs)).value.item<float>();
    };

    while (result.steps < config.total_steps) {
        const double progress = static_cast<double>(result.steps) / static_cast<double>(config.lr_decay_steps);
        const double lr = config.learning_rate * std::max(0.0, 1.0 - progress);
        for (auto& group : optimizer.param_groups()) {
            static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
        }

        buffer.clear();
        net->eval();
        while (!buffer.full()) {
            const env::Observation obs = environment.observe();
            int action = 0;
            float log_prob = 0.0f;
            float value = 0.0f;
            {
                torch::NoGradGuard guard;
                const auto out = net->forward(observation_tensor(obs));
                const auto log_probs = torch::log_softmax(out.logits[0], -1);
                action = sample_categorical(to_vector(log_probs.exp()), rng);
                log_prob = log_probs[action].item<float>();
                value = out.value.item<float>();
            }
            const auto outcome = environment.step(action);
            const int t = buffer.size;
            buffer.add(obs, action, log_prob, static_cast<float>(outcome.reward), value);
            running_return += outcome.reward;
            ++result.steps;
            if (outcome.done) {
                buffer.episode_ends[t] = 1;
                buffer.next_values[t] = outcome.truncated ? value_of(environment.observe()) : 0.0f;
                episode_returns.push_back(running_return);
                running_return = 0.0;
                environment.reset();
            }
        }
        for (int t = 0; t + 1 < buffer.size; ++t) {
            if (!buffer.episode_ends[t]) buffer.next_values[t] = buffer.values[t + 1];
        }
        if (!buffer.episode_ends[buffer.size - 1]) buffer.next_values[buffer.size - 1] = value_of(environment.observe());

        auto adv = compute_gae(buffer.rewards, buffer.values, buffer.next_values, buffer.episode_ends, config.gamma,
                               config.gae_lambda);
        buffer.advantages = std::move(adv.advantages);
        buffer.returns = std::move(adv.returns);

        const auto stats = ppo_update(net, optimizer, buffer, config, rng);

        std::ostringstream msg;
        const auto recent = std::min<std::size_t>(episode_returns.size(), 20);
        const double train_mean =
            recent ? std::accumulate(episode_returns.end() - static_cast<std::ptrdiff_t>(recent), episode_returns.end(), 0.0) / recent : 0.0;
        msg << "ppo step " << result.steps << " lr " << lr << " train_return " << train_mean << " value_loss "
            << stats.value_loss << " entropy " << stats.entropy << " clip " << stats.clip_fraction << " kl "
            << stats.approx_kl;
        log(msg.str());

        if (result.steps >= next_eval || result.steps >= config.total_steps) {
            next_eval += config.eval_every;
            const auto ev = evaluate_policy(net, domain, config.eval_episodes, eval_seed, true);
            result.curve.push_back({result.steps, ev.mean, ev.std});
            log("ppo eval step " + std::to_string(result.steps) + " mean " + std::to_string(ev.mean) + " std " +
                std::to_string(ev.std));
            if (ev.mean > result.best_eval) {
                result.best_eval = ev.mean;
                result.best_step = result.steps;
                copy_parameters(net, result.best_policy);
                if (!options.output_dir.empty()) {
                    save_policy(options.output_dir / "policy_best", result.best_policy, config,
                                {{"step", result.steps}, {"seed", seed}, {"eval_mean", ev.mean}, {"domain", domain}});
                }
            }
            if (!options.output_dir.empty()) write_learning_curve(options.output_dir / "learning_curve.csv", result.curve);
            if (!result.diverged && result.steps >= config.total_steps / 2 && ev.mean < kRandomBaseline) {
                result.diverged = true;
                log("warning: PPO evaluation reward below the random baseline after half of the training budget");
            }
            if (ev.mean >= config.reward_cap) {
                result.stopped_early = true;
                log("ppo reached the reward cap; stopping");
                break;
            }
        }
    }
    if (!options.output_dir.empty()) {
        save_policy(options.output_dir / "policy_final", net, config,
                    {{"step", result.steps}, {"seed", seed}, {"domain", domain}});
    }
    net->eval();
    result.best_policy->eval();
    return result;
}

void save_policy(const fs::path& stem, const PolicyNet& net, const PpoConfig& config, const json& extra) {
    json m = extra;
    m["kind"] = "policy";
    m["config"] = config;
    m["num_actions"] = net->num_actions();
    save_checkpoint(stem, *net, m);
}

PolicyNet load_policy(const fs::path& stem) {
    const auto m = read_checkpoint_manifest(stem, "policy");
    PolicyNet net(m.at("num_actions").get<int>());
    load_checkpoint_weights(stem, *net);
    net->eval();
    return net;
}

void write_learning_curve(const fs::path& path, const std::vector<CurvePoint>& curve) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write learning curve " + path.string());
    os << "step,mean_eval_reward,std_eval_reward\n";
    for (const auto& p : curve) os << p.step << ',' << p.mean_eval_reward << ',' << p.std_eval_reward << '\n';
}

} // namespace zsil::ppo

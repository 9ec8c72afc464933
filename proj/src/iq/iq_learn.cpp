#include "zsil/iq/iq_learn.hpp"

#include "zsil/common/seed.hpp"
#include "zsil/common/tensor.hpp"

#include <random>
#include <sstream>

namespace zsil::iq {

torch::Tensor soft_value(const torch::Tensor& q) { return torch::logsumexp(q, -1); }

torch::Tensor phi(const torch::Tensor& x, double alpha) {
    if (!(alpha > 0)) throw ContractViolation("phi: alpha must be positive");
    return x - x.pow(2) / (4.0 * alpha);
}

ExpertBatch all_transitions(const traj::LatentTrajectorySet& expert) {
    if (expert.episodes.empty()) throw ContractViolation("expert archive has no episodes");
    if (expert.observation_shape.size() != 1) throw DimensionMismatch("expert archive is not latent");
    const auto d = static_cast<std::int64_t>(expert.observation_shape[0]);
    const auto n = static_cast<std::int64_t>(expert.transition_count());

    ExpertBatch b;
    b.states = torch::empty({n, d});
    b.next_states = torch::empty({n, d});
    b.actions = torch::empty({n}, torch::kInt64);
    b.dones = torch::empty({n});
    auto* s = b.states.data_ptr<float>();
    auto* s2 = b.next_states.data_ptr<float>();
    auto* a = b.actions.data_ptr<std::int64_t>();
    auto* done = b.dones.data_ptr<float>();
    std::int64_t row = 0;
    for (const auto& e : expert.episodes) {
        for (std::size_t t = 0; t < e.length(); ++t, ++row) {
            std::copy_n(e.observations.data() + t * d, d, s + row * d);
            std::copy_n(e.observations.data() + (t + 1) * d, d, s2 + row * d);
            a[row] = e.actions[t];
            done[row] = e.dones[t] ? 1.0f : 0.0f;
        }
    }
    return b;
}

IqObjective iq_objective(const torch::Tensor& q_sa, const torch::Tensor& v_state, const torch::Tensor& v_next,
                         const torch::Tensor& dones, double gamma, double alpha) {
    if (q_sa.numel() == 0) throw ContractViolation("iq_objective: empty batch");
    const auto next = gamma * (1.0 - dones) * v_next;
    IqObjective o;
    o.expert_term = phi(q_sa - next, alpha).mean();
    o.value_term = (v_state - next).mean();
    o.objective = o.expert_term - o.value_term;
    return o;
}

IqObjective iq_objective(QNetwork& q, const ExpertBatch& batch, const IqConfig& config) {
    if (batch.states.size(0) == 0) throw ContractViolation("iq_objective: empty batch");
    const auto q_now = q->forward(batch.states);
    const auto q_sa = q_now.gather(1, batch.actions.unsqueeze(1)).squeeze(1);
    const auto v_next = soft_value(q->forward(batch.next_states));
    return iq_objective(q_sa, soft_value(q_now), v_next, batch.dones.to(q_sa.dtype()), config.gamma, config.alpha);
}

IqTrainResult train_iq(const traj::LatentTrajectorySet& expert, const IqConfig& config, std::uint64_t seed,
                       const IqTrainOptions& options) {
    if (const auto errs = config.validate("iq"); !errs.empty()) throw ConfigError(errs);
    if (expert.episodes.empty()) throw ContractViolation("train_iq: empty expert set");
    if (expert.observation_shape != std::vector<std::size_t>{static_cast<std::size_t>(config.latent_dim)}) {
        throw DimensionMismatch("train_iq: expert latents do not have dimension " + std::to_string(config.latent_dim));
    }
    const auto data = all_transitions(expert);
    const auto n = data.states.size(0);

    torch::manual_seed(derive_seed(seed, "init"));
    IqTrainResult result;
    result.q = QNetwork(config.latent_dim, config.num_actions, config.hidden_width);
    torch::optim::Adam optimizer(result.q->parameters(), torch::optim::AdamOptions(config.learning_rate));
    std::mt19937_64 rng(derive_seed(seed, "batches"));
    std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(config.batch_size));

    for (std::int64_t step = 0; step < config.train_steps; ++step) {
        for (auto& i : idx) i = pick(rng);
        const auto index = torch::tensor(idx, torch::kInt64);
        const ExpertBatch batch{data.states.index_select(0, index), data.actions.index_select(0, index),
                                data.next_states.index_select(0, index), data.dones.index_select(0, index)};
        const auto obj = iq_objective(result.q, batch, config);
        if (!torch::isfinite(obj.objective).item<bool>()) {
            throw DiagnosticsError("train_iq: non-finite objective at step " + std::to_string(step));
        }
        optimizer.zero_grad();
        (-obj.objective).backward(); // ascent
        optimizer.step();

        const bool last = step + 1 == config.train_steps;
        if (step % options.log_every == 0 || last) {
            result.log.push_back({step, obj.objective.item<double>(), obj.expert_term.item<double>(),
                                  obj.value_term.item<double>()});
            if (options.log) {
                std::ostringstream msg;
                msg << "iq step " << step << " objective " << result.log.back().objective << " expert "
                    << result.log.back().expert_term << " value " << result.log.back().value_term;
                options.log(msg.str());
            }
        }
    }
    result.q->eval();
    return result;
}

torch::Tensor recover_policy(QNetwork& q, const torch::Tensor& z) {
    torch::NoGradGuard guard;
    return torch::softmax(q->forward(z), -1);
}

torch::Tensor greedy_actions(QNetwork& q, const torch::Tensor& z) {
    torch::NoGradGuard guard;
    return q->forward(z).argmax(-1);
}

torch::Tensor recover_reward(QNetwork& q, const torch::Tensor& z, const torch::Tensor& actions,
                             const torch::Tensor& next_z, const torch::Tensor& dones, double gamma) {
    torch::NoGradGuard guard;
    const auto q_sa = q->forward(z).gather(1, actions.unsqueeze(1)).squeeze(1);
    return q_sa - gamma * (1.0 - dones.to(q_sa.dtype())) * soft_value(q->forward(next_z));
}

} // namespace zsil::iq

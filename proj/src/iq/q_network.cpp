#include "zsil/iq/iq_learn.hpp"

#include "zsil/common/checkpoint.hpp"

#include <fstream>

namespace zsil::iq {
using nlohmann::json;

std::vector<FieldError> IqConfig::validate(const std::string& prefix) const {
    std::vector<FieldError> errs;
    const auto bad = [&](const char* field, const std::string& msg) { errs.push_back({prefix + "." + field, msg}); };
    if (!(gamma >= 0 && gamma < 1)) bad("gamma", "must lie in [0, 1)");
    if (!(alpha > 0)) bad("alpha", "must be positive");
    if (!(learning_rate > 0)) bad("learning_rate", "must be positive");
    if (train_steps < 1) bad("train_steps", "must be >= 1");
    if (batch_size < 1) bad("batch_size", "must be >= 1");
    if (hidden_width < 1) bad("hidden_width", "must be >= 1");
    if (num_actions < 2) bad("num_actions", "must be at least 2");
    if (latent_dim < 1) bad("latent_dim", "must be >= 1");
    return errs;
}

void to_json(json& j, const IqConfig& c) {
    j = {{"gamma", c.gamma},           {"alpha", c.alpha},           {"learning_rate", c.learning_rate},
         {"train_steps", c.train_steps}, {"batch_size", c.batch_size}, {"hidden_width", c.hidden_width},
         {"num_actions", c.num_actions}, {"latent_dim", c.latent_dim}};
}

void from_json(const json& j, IqConfig& c) {
    const IqConfig d;
    c.gamma = j.value("gamma", d.gamma);
    c.alpha = j.value("alpha", d.alpha);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.train_steps = j.value("train_steps", d.train_steps);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.hidden_width = j.value("hidden_width", d.hidden_width);
    c.num_actions = j.value("num_actions", d.num_actions);
    c.latent_dim = j.value("latent_dim", d.latent_dim);
}

QNetworkImpl::QNetworkImpl(int latent_dim, int num_actions, int hidden_width)
    : latent_dim_(latent_dim), num_actions_(num_actions) {
    namespace nn = torch::nn;
    body_ = register_module("body", nn::Sequential(nn::Linear(latent_dim, hidden_width), nn::ReLU(),
                                                   nn::Linear(hidden_width, hidden_width), nn::ReLU(),
                                                   nn::Linear(hidden_width, num_actions)));
}

torch::Tensor QNetworkImpl::forward(const torch::Tensor& z) {
    if (z.dim() != 2 || z.size(1) != latent_dim_) {
        throw DimensionMismatch("QNetwork: expected [B, " + std::to_string(latent_dim_) + "] latents");
    }
    return body_->forward(z);
}

void save_q(const std::filesystem::path& stem, const QNetwork& q, const IqConfig& config, const json& extra) {
    json m = extra;
    m["kind"] = "q";
    m["config"] = config;
    m["latent_dim"] = q->latent_dim();
    m["num_actions"] = q->num_actions();
    save_checkpoint(stem, *q, m);
}

QNetwork load_q(const std::filesystem::path& stem) {
    const auto m = read_checkpoint_manifest(stem, "q");
    const auto config = m.at("config").get<IqConfig>();
    QNetwork q(m.at("latent_dim").get<int>(), m.at("num_actions").get<int>(), config.hidden_width);
    load_checkpoint_weights(stem, *q);
    q->eval();
    return q;
}

void write_training_log(const std::filesystem::path& path, const std::vector<IqLogEntry>& log) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << "step,objective,expert_term,value_term\n";
    for (const auto& e : log) os << e.step << ',' << e.objective << ',' << e.expert_term << ',' << e.value_term << '\n';
}

} // namespace zsil::iq

#include "zsil/ppo/ppo.hpp"

#include <cmath>

namespace zsil::ppo {
namespace F = torch::nn::functional;

namespace {

constexpr int kPolicyInput = 84;

void orthogonal_init(torch::nn::Module& m, double gain) {
    torch::NoGradGuard guard;
    for (auto& p : m.named_parameters(false)) {
        if (p.key() == "weight") torch::nn::init::orthogonal_(p.value(), gain);
        else if (p.key() == "bias") p.value().zero_();
    }
}

} // namespace

PolicyNetImpl::PolicyNetImpl(int num_actions) : num_actions_(num_actions) {
    torso_ = register_module(
        "torso",
        torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 32, 8).stride(4)), torch::nn::ReLU(),
                              torch::nn::Conv2d(torch::nn::Conv2dOptions(32, 64, 4).stride(2)), torch::nn::ReLU(),
                              torch::nn::Conv2d(torch::nn::Conv2dOptions(64, 64, 3).stride(1)), torch::nn::ReLU(),
                              torch::nn::Flatten(), torch::nn::Linear(64 * 7 * 7, 512), torch::nn::ReLU()));
    policy_head_ = register_module("policy_head", torch::nn::Linear(512, num_actions));
    value_head_ = register_module("value_head", torch::nn::Linear(512, 1));

    for (auto& child : torso_->children()) orthogonal_init(*child, std::sqrt(2.0));
    orthogonal_init(*policy_head_, 0.01);
    orthogonal_init(*value_head_, 1.0);
}

PolicyNetImpl::Output PolicyNetImpl::forward(const torch::Tensor& obs) {
    auto x = F::interpolate(obs, F::InterpolateFuncOptions()
                                     .size(std::vector<int64_t>{kPolicyInput, kPolicyInput})
                                     .mode(torch::kArea));
    auto features = torso_->forward(x);
    return {policy_head_->forward(features), value_head_->forward(features).squeeze(-1)};
}

torch::Tensor PolicyNetImpl::probabilities(const torch::Tensor& obs) {
    return torch::softmax(forward(obs).logits, -1);
}

} // namespace zsil::ppo

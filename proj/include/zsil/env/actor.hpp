#pragma once

#include "zsil/env/cartpole.hpp"

#include <random>
#include <string>

namespace zsil::env {

// Anything that picks a discrete action from a pixel observation.
class Actor {
public:
    virtual ~Actor() = default;
    virtual int act(const Observation& obs, std::mt19937_64& rng) = 0;
    virtual std::string name() const = 0;
};

class RandomActor final : public Actor {
public:
    explicit RandomActor(int num_actions = kNumActions) : num_actions_(num_actions) {}

    int act(const Observation&, std::mt19937_64& rng) override {
        return std::uniform_int_distribution<int>(0, num_actions_ - 1)(rng);
    }
    std::string name() const override { return "random"; }

private:
    int num_actions_;
};

} // namespace zsil::env

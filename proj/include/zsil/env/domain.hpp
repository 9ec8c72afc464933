#pragma once

#include "zsil/env/cartpole.hpp"

#include <json.hpp>

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace zsil::env {

enum class Scenario { combi, background };
enum class Role { source, target, vae_training };

std::string to_string(Scenario s);
std::string to_string(Role r);
Scenario scenario_from_string(const std::string& s);
Role role_from_string(const std::string& s);

struct DomainSpec {
    Scenario scenario = Scenario::combi;
    Role role = Role::source;
    std::vector<ColorTheme> themes;

    friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

// Theme sets of the two transfer scenarios.
DomainSpec standard_domain(Scenario scenario, Role role);

// Throws ContractViolation when the theme count does not fit the scenario/role.
void validate_domain(const DomainSpec& spec);

struct StepOutcome {
    double reward = 0.0;
    bool done = false;
    bool truncated = false;
};

// Episodic pixel environment with a discrete action set.
class Environment {
public:
    virtual ~Environment() = default;

    // Starts a new episode; a seed re-seeds the episode stream first.
    virtual const Observation& reset(std::optional<std::uint64_t> seed = std::nullopt) = 0;
    virtual StepOutcome step(int action) = 0;
    virtual const Observation& observe() const = 0;
    virtual int num_actions() const = 0;
};

class CartpoleEnv final : public Environment {
public:
    CartpoleEnv(DomainSpec spec, std::uint64_t seed);

    const Observation& reset(std::optional<std::uint64_t> seed = std::nullopt) override;
    StepOutcome step(int action) override;
    const Observation& observe() const override;
    int num_actions() const override { return kNumActions; }

    const PhysicsState& state() const noexcept { return state_; }
    const ColorTheme& theme() const { return spec_.themes[theme_index_]; }
    std::size_t theme_index() const noexcept { return theme_index_; }
    const DomainSpec& spec() const noexcept { return spec_; }
    bool done() const noexcept { return done_; }

private:
    void refresh_observation();

    DomainSpec spec_;
    std::mt19937_64 rng_;
    PhysicsState state_;
    std::size_t theme_index_ = 0;
    std::deque<Frame> frames_;
    Observation observation_;
    bool started_ = false;
    bool done_ = true;
};

std::unique_ptr<CartpoleEnv> make_domain(const DomainSpec& spec, std::uint64_t seed);

void to_json(nlohmann::json& j, const Rgb& c);
void from_json(const nlohmann::json& j, Rgb& c);
void to_json(nlohmann::json& j, const ColorTheme& t);
void from_json(const nlohmann::json& j, ColorTheme& t);
void to_json(nlohmann::json& j, const DomainSpec& d);
void from_json(const nlohmann::json& j, DomainSpec& d);

} // namespace zsil::env

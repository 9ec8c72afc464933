#include "zsil/env/domain.hpp"

#include "zsil/common/error.hpp"

#include <utility>

namespace zsil::env {
namespace {

constexpr Rgb kBlack{0, 0, 0};
constexpr Rgb kRed{255, 0, 0};
constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kGreen{150, 202, 124};
constexpr Rgb kPink{215, 148, 187};

std::size_t expected_theme_count(Scenario s, Role r) {
    if (s == Scenario::combi) return r == Role::target ? 1 : 3;
    return r == Role::vae_training ? 2 : 1;
}

} // namespace

std::string to_string(Scenario s) { return s == Scenario::combi ? "combi" : "background"; }

std::string to_string(Role r) {
    switch (r) {
    case Role::source: return "source";
    case Role::target: return "target";
    case Role::vae_training: return "vae_training";
    }
    return "unknown";
}

Scenario scenario_from_string(const std::string& s) {
    if (s == "combi") return Scenario::combi;
    if (s == "background") return Scenario::background;
    throw ContractViolation("unknown scenario '" + s + "'");
}

Role role_from_string(const std::string& s) {
    if (s == "source") return Role::source;
    if (s == "target") return Role::target;
    if (s == "vae_training") return Role::vae_training;
    throw ContractViolation("unknown domain role '" + s + "'");
}

DomainSpec standard_domain(Scenario scenario, Role role) {
    DomainSpec d{scenario, role, {}};
    if (scenario == Scenario::combi) {
        if (role == Role::target) {
            d.themes = {{kRed, kRed, kWhite}};
        } else {
            d.themes = {{kBlack, kBlack, kWhite}, {kRed, kBlack, kWhite}, {kBlack, kRed, kWhite}};
        }
    } else {
        switch (role) {
        case Role::source: d.themes = {{kBlack, kBlack, kWhite}}; break;
        case Role::target: d.themes = {{kBlack, kBlack, kPink}}; break;
        case Role::vae_training: d.themes = {{kBlack, kBlack, kWhite}, {kBlack, kBlack, kGreen}}; break;
        }
    }
    return d;
}

void validate_domain(const DomainSpec& spec) {
    const auto want = expected_theme_count(spec.scenario, spec.role);
    if (spec.themes.size() != want) {
        throw ContractViolation("domain " + to_string(spec.scenario) + "/" + to_string(spec.role) +
                                " needs " + std::to_string(want) + " theme(s), got " +
                                std::to_string(spec.themes.size()));
    }
}

CartpoleEnv::CartpoleEnv(DomainSpec spec, std::uint64_t seed) : spec_(std::move(spec)), rng_(seed) {
    validate_domain(spec_);
}

const Observation& CartpoleEnv::reset(std::optional<std::uint64_t> seed) {
    if (seed) rng_.seed(*seed);
    if (spec_.themes.size() > 1) {
        std::uniform_int_distribution<std::size_t> pick(0, spec_.themes.size() - 1);
        theme_index_ = pick(rng_);
    }
    std::uniform_real_distribution<double> init(-0.05, 0.05);
    state_ = PhysicsState{};
    state_.cart_position = init(rng_);
    state_.cart_velocity = init(rng_);
    state_.pole_angle = init(rng_);
    state_.pole_angular_velocity = init(rng_);

    const Frame first = render_frame(state_, theme());
    frames_.assign(kFramesPerObservation, first);
    refresh_observation();
    started_ = true;
    done_ = false;
    return observation_;
}

StepOutcome CartpoleEnv::step(int action) {
    if (!started_ || done_) throw ContractViolation("CartpoleEnv::step called on a finished episode");
    const PhysicsStep s = step_physics(state_, action);
    state_ = s.state;
    done_ = s.done;
    frames_.pop_front();
    frames_.push_back(render_frame(state_, theme()));
    refresh_observation();
    return {s.reward, s.done, s.truncated};
}

const Observation& CartpoleEnv::observe() const {
    if (!started_) throw ContractViolation("CartpoleEnv::observe called before reset");
    return observation_;
}

void CartpoleEnv::refresh_observation() {
    const std::vector<Frame> window(frames_.begin(), frames_.end());
    observation_ = stack_frames(window);
}

std::unique_ptr<CartpoleEnv> make_domain(const DomainSpec& spec, std::uint64_t seed) {
    return std::make_unique<CartpoleEnv>(spec, seed);
}

void to_json(nlohmann::json& j, const Rgb& c) { j = nlohmann::json::array({c.r, c.g, c.b}); }

void from_json(const nlohmann::json& j, Rgb& c) {
    if (!j.is_array() || j.size() != 3) throw ContractViolation("color must be an [r, g, b] triple");
    const auto channel = [&](std::size_t i) {
        const int v = j.at(i).get<int>();
        if (v < 0 || v > 255) throw ContractViolation("color channel out of range [0,255]");
        return static_cast<std::uint8_t>(v);
    };
    c = {channel(0), channel(1), channel(2)};
}

void to_json(nlohmann::json& j, const ColorTheme& t) {
    j = {{"cart", t.cart}, {"pole", t.pole}, {"background", t.background}};
}

void from_json(const nlohmann::json& j, ColorTheme& t) {
    j.at("cart").get_to(t.cart);
    j.at("pole").get_to(t.pole);
    j.at("background").get_to(t.background);
}

void to_json(nlohmann::json& j, const DomainSpec& d) {
    j = {{"scenario", to_string(d.scenario)}, {"role", to_string(d.role)}, {"themes", d.themes}};
}

void from_json(const nlohmann::json& j, DomainSpec& d) {
    d.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    d.role = role_from_string(j.at("role").get<std::string>());
    if (j.contains("themes")) {
        j.at("themes").get_to(d.themes);
    } else {
        d.themes = standard_domain(d.scenario, d.role).themes;
    }
}

} // namespace zsil::env

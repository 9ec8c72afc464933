#include "zsil/common/error.hpp"
#include "zsil/env/actor.hpp"
#include "zsil/env/domain.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

using namespace zsil;
using namespace zsil::env;

namespace {

// Independent evaluation of the classic cart-pole equations of motion.
struct Accel {
    double x, theta;
};
Accel reference_accel(double theta, double theta_dot, double force) {
    const double g = 9.8, mc = 1.0, mp = 0.1, l = 0.5;
    const double total = mc + mp;
    const double temp = (force + mp * l * theta_dot * theta_dot * std::sin(theta)) / total;
    const double theta_acc =
        (g * std::sin(theta) - std::cos(theta) * temp) / (l * (4.0 / 3.0 - mp * std::cos(theta) * std::cos(theta) / total));
    return {temp - mp * l * theta_acc * std::cos(theta) / total, theta_acc};
}

std::set<std::tuple<int, int, int>> colors_of(const Frame& f) {
    std::set<std::tuple<int, int, int>> out;
    for (std::size_t i = 0; i < f.pixels.size(); i += 3) out.insert({f.pixels[i], f.pixels[i + 1], f.pixels[i + 2]});
    return out;
}

Frame solid(std::uint8_t v) {
    Frame f;
    std::fill(f.pixels.begin(), f.pixels.end(), v);
    return f;
}

} // namespace

TEST_CASE("step_physics from rest matches the closed-form accelerations") {
    const auto a = reference_accel(0.0, 0.0, 10.0);
    CHECK(a.theta == doctest::Approx(-14.634).epsilon(1e-4));
    const auto right = step_physics(PhysicsState{}, 1);
    CHECK(right.state.cart_velocity == doctest::Approx(0.19512).epsilon(1e-4));
    CHECK(right.state.cart_velocity == doctest::Approx(a.x * 0.02).epsilon(1e-12));
    CHECK(right.state.pole_angular_velocity == doctest::Approx(-0.29268).epsilon(1e-4));
    CHECK(right.state.cart_position == 0.0); // explicit Euler uses the old velocity
    CHECK(right.reward == 1.0);
    CHECK_FALSE(right.done);

    const auto left = step_physics(PhysicsState{}, 0);
    CHECK(left.state.cart_velocity == doctest::Approx(-right.state.cart_velocity));
    CHECK(left.state.pole_angular_velocity == doctest::Approx(-right.state.pole_angular_velocity));
}

TEST_CASE("step_physics agrees with the reference on random states") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (int i = 0; i < 200; ++i) {
        PhysicsState s{u(rng), u(rng) * 5, u(rng), u(rng) * 5, 0};
        const int action = static_cast<int>(rng() % 2);
        const auto a = reference_accel(s.pole_angle, s.pole_angular_velocity, action ? 10.0 : -10.0);
        const auto next = step_physics(s, action).state;
        CHECK(next.cart_position == doctest::Approx(s.cart_position + 0.02 * s.cart_velocity));
        CHECK(next.cart_velocity == doctest::Approx(s.cart_velocity + 0.02 * a.x));
        CHECK(next.pole_angle == doctest::Approx(s.pole_angle + 0.02 * s.pole_angular_velocity));
        CHECK(next.pole_angular_velocity == doctest::Approx(s.pole_angular_velocity + 0.02 * a.theta));
        CHECK(next.step_count == 1);
    }
}

TEST_CASE("termination thresholds and the step cap") {
    PhysicsState tilted;
    tilted.pole_angle = 0.2;
    tilted.pole_angular_velocity = 1.5; // 0.2 + 0.03 = 0.23 > 12 degrees
    const auto out = step_physics(tilted, 1);
    CHECK(out.done);
    CHECK_FALSE(out.truncated);
    CHECK(out.reward == 1.0);
    CHECK_THROWS_AS(step_physics(out.state, 1), ContractViolation);

    PhysicsState edge;
    edge.cart_position = 2.39;
    edge.cart_velocity = 1.0;
    CHECK(step_physics(edge, 1).done);

    PhysicsState capped;
    capped.step_count = 499;
    const auto last = step_physics(capped, 0);
    CHECK(last.done);
    CHECK(last.truncated);

    CHECK_THROWS_AS(step_physics(PhysicsState{}, 2), ContractViolation);
    CHECK_THROWS_AS(step_physics(PhysicsState{}, -1), ContractViolation);
}

TEST_CASE("render_frame is pure and uses only the theme colors") {
    const ColorTheme theme{{255, 0, 0}, {0, 0, 0}, {255, 255, 255}};
    PhysicsState s;
    s.cart_position = 0.7;
    s.pole_angle = 0.1;
    const auto a = render_frame(s, theme);
    CHECK(a == render_frame(s, theme));
    const auto colors = colors_of(a);
    CHECK(colors.size() == 3);
    CHECK(colors.count({255, 0, 0}) == 1);
    CHECK(colors.count({0, 0, 0}) == 1);
    CHECK(colors.count({255, 255, 255}) == 1);

    const ColorTheme flat{{9, 9, 9}, {9, 9, 9}, {9, 9, 9}};
    CHECK(colors_of(render_frame(s, flat)).size() == 1);

    PhysicsState moved = s;
    moved.cart_position = -0.7;
    CHECK_FALSE(render_frame(moved, theme) == a);
}

TEST_CASE("stack_frames tiles in temporal order") {
    const std::array<Frame, 4> frames{solid(1), solid(2), solid(3), solid(4)};
    const auto obs = stack_frames(frames);
    CHECK(obs.pixels.size() == 128u * 128u * 3u);
    CHECK(obs.at(0, 0).r == 1);
    CHECK(obs.at(0, 127).r == 2);
    CHECK(obs.at(127, 0).r == 3);
    CHECK(obs.at(127, 127).r == 4);
    CHECK(obs.at(63, 63).r == 1);
    CHECK(obs.at(64, 64).r == 4);

    const auto back = unstack_frames(obs);
    for (int i = 0; i < 4; ++i) CHECK(back[i] == frames[i]);

    const std::array<Frame, 3> three{solid(1), solid(2), solid(3)};
    CHECK_THROWS_AS(stack_frames(three), DimensionMismatch);
    std::array<Frame, 4> bad = frames;
    bad[2].pixels.pop_back();
    CHECK_THROWS_AS(stack_frames(bad), DimensionMismatch);
}

TEST_CASE("unstack inverts stack on rendered frames") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    const auto spec = standard_domain(Scenario::combi, Role::source);
    for (int trial = 0; trial < 10; ++trial) {
        std::array<Frame, 4> frames;
        for (auto& f : frames) f = render_frame(PhysicsState{u(rng) * 20, 0, u(rng), 0, 0}, spec.themes[trial % 3]);
        const auto back = unstack_frames(stack_frames(frames));
        for (int i = 0; i < 4; ++i) CHECK(back[i] == frames[i]);
    }
}

TEST_CASE("reset replicates the first frame") {
    CartpoleEnv environment(standard_domain(Scenario::combi, Role::target), 5);
    const auto obs = environment.reset(5);
    const auto frames = unstack_frames(obs);
    for (int i = 1; i < 4; ++i) CHECK(frames[i] == frames[0]);
    CHECK(frames[0] == render_frame(environment.state(), environment.theme()));

    environment.step(1);
    const auto next = unstack_frames(environment.observe());
    CHECK(next[0] == frames[0]);
    CHECK(next[3] == render_frame(environment.state(), environment.theme()));
}

TEST_CASE("standard domains carry the documented themes") {
    const auto source = standard_domain(Scenario::combi, Role::source);
    REQUIRE(source.themes.size() == 3);
    const Rgb black{0, 0, 0}, red{255, 0, 0}, white{255, 255, 255};
    CHECK(source.themes[0] == ColorTheme{black, black, white});
    CHECK(source.themes[1] == ColorTheme{red, black, white});
    CHECK(source.themes[2] == ColorTheme{black, red, white});
    const auto target = standard_domain(Scenario::combi, Role::target);
    REQUIRE(target.themes.size() == 1);
    CHECK(target.themes[0] == ColorTheme{red, red, white});

    const auto vae = standard_domain(Scenario::background, Role::vae_training);
    REQUIRE(vae.themes.size() == 2);
    CHECK(vae.themes[0].background == white);
    CHECK(vae.themes[1].background == Rgb{150, 202, 124});
    const auto bg_target = standard_domain(Scenario::background, Role::target);
    REQUIRE(bg_target.themes.size() == 1);
    CHECK(bg_target.themes[0].background == Rgb{215, 148, 187});
    CHECK(standard_domain(Scenario::background, Role::source).themes.size() == 1);
}

TEST_CASE("validate_domain rejects wrong theme counts") {
    auto spec = standard_domain(Scenario::combi, Role::target);
    spec.themes.push_back(spec.themes[0]);
    CHECK_THROWS_AS(validate_domain(spec), ContractViolation);
    CHECK_THROWS_AS(make_domain(spec, 0), ContractViolation);
    auto bg = standard_domain(Scenario::background, Role::vae_training);
    bg.themes.pop_back();
    CHECK_THROWS_AS(validate_domain(bg), ContractViolation);
}

TEST_CASE("domain spec JSON round trip and range checks") {
    const auto spec = standard_domain(Scenario::background, Role::vae_training);
    const nlohmann::json j = spec;
    CHECK(j.get<DomainSpec>() == spec);
    auto bad = j;
    bad["themes"][0]["cart"] = {0, 0, 256};
    CHECK_THROWS(bad.get<DomainSpec>());
    const nlohmann::json minimal = {{"scenario", "combi"}, {"role", "source"}};
    CHECK(minimal.get<DomainSpec>() == standard_domain(Scenario::combi, Role::source));
}

TEST_CASE("fixed seed gives identical episodes under identical actions") {
    const auto spec = standard_domain(Scenario::combi, Role::source);
    CartpoleEnv a(spec, 42), b(spec, 42);
    for (int episode = 0; episode < 5; ++episode) {
        a.reset();
        b.reset();
        CHECK(a.theme_index() == b.theme_index());
        int t = 0;
        while (!a.done()) {
            const int action = (t++ / 3) % 2;
            const auto sa = a.step(action);
            const auto sb = b.step(action);
            CHECK(sa.reward == sb.reward);
            CHECK(a.state().pole_angle == b.state().pole_angle);
            CHECK(a.observe() == b.observe());
        }
        CHECK(b.done());
    }
}

TEST_CASE("multi-theme domains use every theme across episodes") {
    CartpoleEnv environment(standard_domain(Scenario::combi, Role::source), 9);
    std::array<int, 3> counts{};
    for (int i = 0; i < 300; ++i) {
        environment.reset();
        counts[environment.theme_index()]++;
        CHECK(std::abs(environment.state().cart_position) <= 0.05);
    }
    for (int c : counts) CHECK(c > 60);
}

TEST_CASE("random actor episodes are short and never exceed the cap") {
    CartpoleEnv environment(standard_domain(Scenario::combi, Role::target), 1);
    RandomActor actor;
    std::mt19937_64 rng(1);
    double total = 0.0;
    const int episodes = 200;
    for (int i = 0; i < episodes; ++i) {
        environment.reset(static_cast<std::uint64_t>(i));
        double r = 0.0;
        while (!environment.done()) r += environment.step(actor.act(environment.observe(), rng)).reward;
        CHECK(r <= 500.0);
        total += r;
    }
    CHECK(total / episodes > 10.0);
    CHECK(total / episodes < 35.0);
}

TEST_CASE("stepping a finished episode is a contract violation") {
    CartpoleEnv environment(standard_domain(Scenario::combi, Role::target), 1);
    CHECK_THROWS_AS(environment.step(0), ContractViolation);
    environment.reset(0);
    while (!environment.done()) environment.step(1);
    CHECK_THROWS_AS(environment.step(1), ContractViolation);
}

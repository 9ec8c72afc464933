#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace zsil::env {

// Classic-control cart-pole constants.
struct CartpoleConstants {
    static constexpr double gravity = 9.8;
    static constexpr double cart_mass = 1.0;
    static constexpr double pole_mass = 0.1;
    static constexpr double pole_half_length = 0.5;
    static constexpr double force_magnitude = 10.0;
    static constexpr double timestep = 0.02;
    static constexpr double position_limit = 2.4;
    static constexpr double angle_limit = 12.0 * 3.14159265358979323846 / 180.0;
    static constexpr int step_cap = 500;
};

inline constexpr int kNumActions = 2;   // 0 = push left, 1 = push right
inline constexpr int kFrameSize = 64;
inline constexpr int kObservationSize = 2 * kFrameSize;
inline constexpr int kChannels = 3;
inline constexpr std::size_t kFrameBytes = std::size_t{kFrameSize} * kFrameSize * kChannels;
inline constexpr std::size_t kObservationBytes =
    std::size_t{kObservationSize} * kObservationSize * kChannels;
inline constexpr int kFramesPerObservation = 4;

struct PhysicsState {
    double cart_position = 0.0;
    double cart_velocity = 0.0;
    double pole_angle = 0.0;
    double pole_angular_velocity = 0.0;
    int step_count = 0;
};

// Out of bounds (cart or pole), independent of the step cap.
bool has_failed(const PhysicsState& s) noexcept;
// Failed or reached the step cap.
bool is_terminal(const PhysicsState& s) noexcept;

struct PhysicsStep {
    PhysicsState state;
    double reward = 0.0;
    bool done = false;
    // done because of the step cap rather than failure
    bool truncated = false;
};

// One Euler step. Throws ContractViolation on a terminal state or bad action.
PhysicsStep step_physics(const PhysicsState& state, int action);

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct ColorTheme {
    Rgb cart;
    Rgb pole;
    Rgb background;
    friend bool operator==(const ColorTheme&, const ColorTheme&) = default;
};

// 64x64 RGB frame, row-major.
struct Frame {
    std::vector<std::uint8_t> pixels = std::vector<std::uint8_t>(kFrameBytes);

    Rgb at(int row, int col) const;
    friend bool operator==(const Frame&, const Frame&) = default;
};

// 128x128 RGB image tiling four consecutive frames:
// oldest top-left, then top-right, bottom-left, newest bottom-right.
struct Observation {
    std::vector<std::uint8_t> pixels = std::vector<std::uint8_t>(kObservationBytes);

    Rgb at(int row, int col) const;
    friend bool operator==(const Observation&, const Observation&) = default;
};

Frame render_frame(const PhysicsState& state, const ColorTheme& theme);

Observation stack_frames(std::span<const Frame> frames);
std::array<Frame, kFramesPerObservation> unstack_frames(const Observation& obs);

} // namespace zsil::env

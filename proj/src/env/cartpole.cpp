#include "zsil/env/cartpole.hpp"

#include "zsil/common/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace zsil::env {
namespace {

using C = CartpoleConstants;

// Rasterization geometry, in frame pixels.
constexpr double kPixelsPerMeter = 11.0;
constexpr double kCartHalfWidth = 6.0;
constexpr double kCartTop = 40.0;
constexpr double kCartHeight = 7.0;
constexpr double kPoleLength = 26.0;
constexpr double kPoleHalfThickness = 1.5;

bool finite(const PhysicsState& s) {
    return std::isfinite(s.cart_position) && std::isfinite(s.cart_velocity) &&
           std::isfinite(s.pole_angle) && std::isfinite(s.pole_angular_velocity);
}

void put(std::vector<std::uint8_t>& px, int width, int row, int col, Rgb c) {
    const auto i = (static_cast<std::size_t>(row) * width + col) * 3;
    px[i] = c.r;
    px[i + 1] = c.g;
    px[i + 2] = c.b;
}

Rgb get(const std::vector<std::uint8_t>& px, int width, int row, int col) {
    const auto i = (static_cast<std::size_t>(row) * width + col) * 3;
    return {px[i], px[i + 1], px[i + 2]};
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
    const double dx = bx - ax;
    const double dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double qx = ax + t * dx - px;
    const double qy = ay + t * dy - py;
    return std::sqrt(qx * qx + qy * qy);
}

} // namespace

bool has_failed(const PhysicsState& s) noexcept {
    return std::abs(s.cart_position) > C::position_limit || std::abs(s.pole_angle) > C::angle_limit;
}

bool is_terminal(const PhysicsState& s) noexcept {
    return has_failed(s) || s.step_count >= C::step_cap;
}

PhysicsStep step_physics(const PhysicsState& state, int action) {
    if (action != 0 && action != 1) {
        throw ContractViolation("step_physics: action must be 0 or 1, got " + std::to_string(action));
    }
    if (!finite(state)) throw ContractViolation("step_physics: non-finite state");
    if (is_terminal(state)) throw ContractViolation("step_physics: state is terminal");

    constexpr double total_mass = C::cart_mass + C::pole_mass;
    constexpr double pole_moment = C::pole_mass * C::pole_half_length;

    const double force = action == 1 ? C::force_magnitude : -C::force_magnitude;
    const double cos_t = std::cos(state.pole_angle);
    const double sin_t = std::sin(state.pole_angle);
    const double w = state.pole_angular_velocity;

    const double temp = (force + pole_moment * w * w * sin_t) / total_mass;
    const double angular_acc =
        (C::gravity * sin_t - cos_t * temp) /
        (C::pole_half_length * (4.0 / 3.0 - C::pole_mass * cos_t * cos_t / total_mass));
    const double linear_acc = temp - pole_moment * angular_acc * cos_t / total_mass;

    PhysicsStep out;
    PhysicsState& next = out.state;
    next.cart_position = state.cart_position + C::timestep * state.cart_velocity;
    next.cart_velocity = state.cart_velocity + C::timestep * linear_acc;
    next.pole_angle = state.pole_angle + C::timestep * w;
    next.pole_angular_velocity = w + C::timestep * angular_acc;
    next.step_count = state.step_count + 1;

    out.reward = 1.0;
    const bool failed = has_failed(next);
    out.truncated = !failed && next.step_count >= C::step_cap;
    out.done = failed || out.truncated;
    return out;
}

Rgb Frame::at(int row, int col) const { return get(pixels, kFrameSize, row, col); }

Rgb Observation::at(int row, int col) const { return get(pixels, kObservationSize, row, col); }

Frame render_frame(const PhysicsState& state, const ColorTheme& theme) {
    Frame f;
    for (std::size_t i = 0; i < kFrameBytes; i += 3) {
        f.pixels[i] = theme.background.r;
        f.pixels[i + 1] = theme.background.g;
        f.pixels[i + 2] = theme.background.b;
    }

    const double cx = kFrameSize / 2.0 + state.cart_position * kPixelsPerMeter;
    for (int r = 0; r < kFrameSize; ++r) {
        const double y = r + 0.5;
        if (y < kCartTop || y >= kCartTop + kCartHeight) continue;
        for (int c = 0; c < kFrameSize; ++c) {
            const double x = c + 0.5;
            if (x >= cx - kCartHalfWidth && x < cx + kCartHalfWidth) put(f.pixels, kFrameSize, r, c, theme.cart);
        }
    }

    // Pole hinged at the cart's top centre; positive angle leans right.
    const double tip_x = cx + kPoleLength * std::sin(state.pole_angle);
    const double tip_y = kCartTop - kPoleLength * std::cos(state.pole_angle);
    for (int r = 0; r < kFrameSize; ++r) {
        for (int c = 0; c < kFrameSize; ++c) {
            if (segment_distance(c + 0.5, r + 0.5, cx, kCartTop, tip_x, tip_y) <= kPoleHalfThickness) {
                put(f.pixels, kFrameSize, r, c, theme.pole);
            }
        }
    }
    return f;
}

Observation stack_frames(std::span<const Frame> frames) {
    if (frames.size() != kFramesPerObservation) {
        throw DimensionMismatch("stack_frames: expected 4 frames, got " + std::to_string(frames.size()));
    }
    for (const auto& f : frames) {
        if (f.pixels.size() != kFrameBytes) throw DimensionMismatch("stack_frames: frame is not 64x64x3");
    }
    Observation obs;
    const std::size_t frame_row = std::size_t{kFrameSize} * kChannels;
    for (int q = 0; q < kFramesPerObservation; ++q) {
        const int row0 = (q / 2) * kFrameSize;
        const int col0 = (q % 2) * kFrameSize;
        for (int r = 0; r < kFrameSize; ++r) {
            const auto* src = frames[q].pixels.data() + r * frame_row;
            auto* dst = obs.pixels.data() +
                        (static_cast<std::size_t>(row0 + r) * kObservationSize + col0) * kChannels;
            std::copy(src, src + frame_row, dst);
        }
    }
    return obs;
}

std::array<Frame, kFramesPerObservation> unstack_frames(const Observation& obs) {
    if (obs.pixels.size() != kObservationBytes) {
        throw DimensionMismatch("unstack_frames: observation is not 128x128x3");
    }
    std::array<Frame, kFramesPerObservation> frames;
    const std::size_t frame_row = std::size_t{kFrameSize} * kChannels;
    for (int q = 0; q < kFramesPerObservation; ++q) {
        const int row0 = (q / 2) * kFrameSize;
        const int col0 = (q % 2) * kFrameSize;
        for (int r = 0; r < kFrameSize; ++r) {
            const auto* src = obs.pixels.data() +
                              (static_cast<std::size_t>(row0 + r) * kObservationSize + col0) * kChannels;
            std::copy(src, src + frame_row, frames[q].pixels.data() + r * frame_row);
        }
    }
    return frames;
}

} // namespace zsil::env

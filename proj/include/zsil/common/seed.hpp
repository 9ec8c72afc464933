#pragma once

#include <cstdint>
#include <string_view>

namespace zsil {

// splitmix64 finalizer; a bijection on 64-bit words.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

// Independent seed for a named sub-stream of a run (e.g. "expert", "vae").
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream) noexcept;

} // namespace zsil

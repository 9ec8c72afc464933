#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

namespace zsil {

// Writes an 8-bit RGB image (row-major, 3 bytes per pixel) as PNG.
void write_png(const std::filesystem::path& path, int width, int height,
               std::span<const std::uint8_t> rgb);

} // namespace zsil

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <vector>

namespace zsil {

// HWC uint8 images -> NCHW float tensor scaled to [0, 1].
torch::Tensor images_to_tensor(std::span<const std::uint8_t* const> images, int height, int width, int channels = 3);

// Single image convenience overload.
torch::Tensor image_to_tensor(std::span<const std::uint8_t> image, int height, int width, int channels = 3);

// NCHW (or CHW) float tensor in [0,1] -> HWC uint8 bytes of the first image.
std::vector<std::uint8_t> tensor_to_image(const torch::Tensor& chw);

// Throws DiagnosticsError naming `what` when the tensor holds NaN/Inf.
void require_finite(const torch::Tensor& t, const char* what);

std::vector<double> to_vector(const torch::Tensor& t);

} // namespace zsil

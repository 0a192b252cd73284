#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "selfonn/tensor.hpp"

namespace selfonn::pipeline {

/// 8-bit interleaved image with 1 (gray), 2 (gray+alpha), 3 (RGB) or 4 (RGBA) channels.
struct Image8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;
    std::vector<std::uint8_t> pixels;
};

/// Binary PGM (P5). maxval up to 255; samples are rescaled to 0..255.
[[nodiscard]] Image8 read_pgm(const std::filesystem::path& path);
/// Writes P5 with maxval 255. `image` must be single-channel.
void write_pgm(const std::filesystem::path& path, const Image8& image);

[[nodiscard]] Image8 read_png(const std::filesystem::path& path);
/// 8-bit grayscale PNG.
void write_png(const std::filesystem::path& path, const Image8& image);

/// Dispatches on file signature (P5 or PNG).
[[nodiscard]] Image8 read_image(const std::filesystem::path& path);

/// Rec.601 luma (0.299, 0.587, 0.114) scaled to [0, 1], as a 1x1xHxW tensor.
/// Alpha is ignored.
[[nodiscard]] Tensor to_gray_tensor(const Image8& image);

/// Clips to [0, 1] and rounds to 8 bits.
[[nodiscard]] Image8 to_image8(const Tensor& gray);

/// Bilinear resampling with pixel-center alignment, edges clamped.
[[nodiscard]] Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

}  // namespace selfonn::pipeline

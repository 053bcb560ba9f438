#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tfn/tensor.hpp"

namespace tfn {

// Decodes a binary PPM (P6) or PGM (P5, replicated to RGB) with maxval <= 255
// into a [H,W,3] tensor of raw 0..255 values.
TensorF load_image(const std::filesystem::path &path);
TensorF decode_image(std::span<const std::uint8_t> bytes);

void write_pgm(const std::filesystem::path &path, std::size_t width,
               std::size_t height, std::span<const std::uint8_t> pixels);
// `rgb` is row-major interleaved R,G,B.
void write_ppm(const std::filesystem::path &path, std::size_t width,
               std::size_t height, std::span<const std::uint8_t> rgb);

// Bilinear resize of a [H,W,C] image using half-pixel centers:
// src = (dst + 0.5) * in/out - 0.5, clamped to the valid range.
TensorF resize_bilinear(const TensorF &img, std::size_t out_h,
                        std::size_t out_w);

// x / 255, elementwise.
TensorF normalize(const TensorF &img);

} // namespace tfn

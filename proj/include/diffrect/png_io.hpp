// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace diffrect::png {

struct Gray16 {
  int height = 0;
  int width = 0;
  std::vector<std::uint16_t> pixels;
};

struct Indexed {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> indices;
  std::vector<std::array<std::uint8_t, 3>> palette;
};

struct Rgb8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;
};

void write_gray16(const std::filesystem::path& path, const Gray16& image);
void write_indexed(const std::filesystem::path& path, const Indexed& image);
void write_rgb8(const std::filesystem::path& path, const Rgb8& image);

/// Grayscale PNG of bit depth 8 or 16; 8-bit samples are widened (v * 257).
Gray16 read_gray16(const std::filesystem::path& path);
/// Palette PNG; throws ParseError for any other colour type.
Indexed read_indexed(const std::filesystem::path& path);
/// Any 8-bit PNG expanded to RGB (palette expanded, alpha dropped).
Rgb8 read_rgb8(const std::filesystem::path& path);

}  // namespace diffrect::png

// SPDX-License-Identifier: Apache-2.0
#include "diffrect/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "diffrect/errors.hpp"

namespace diffrect::png {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError(path, std::string("cannot open for ") + (mode[0] == 'r' ? "reading" : "writing"));
  return f;
}

void on_error(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

// Shared writer: rows already packed in PNG byte order.
void write_rows(const std::filesystem::path& path, int width, int height, int bit_depth, int color_type,
                const std::vector<std::array<std::uint8_t, 3>>* palette, const std::vector<std::uint8_t>& bytes,
                std::size_t row_bytes) {
  File f = open(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_error, on_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path, "libpng initialisation failed");
  }
  std::vector<png_color> colors;
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path, "PNG write failed: " + error);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (palette) {
    for (const auto& c : *palette) colors.push_back({c[0], c[1], c[2]});
    png_set_PLTE(png, info, colors.data(), static_cast<int>(colors.size()));
  }
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * row_bytes);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw IoError(path, "write failed");
}

struct Decoded {
  int width = 0, height = 0, bit_depth = 0, color_type = 0;
  std::vector<std::array<std::uint8_t, 3>> palette;
  std::vector<std::uint8_t> bytes;
  std::size_t row_bytes = 0;
};

enum class Expand { None, ToRgb8 };

Decoded read_rows(const std::filesystem::path& path, Expand expand) {
  File f = open(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw ParseError(path, "not a PNG file");
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_error, on_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path, "libpng initialisation failed");
  }
  Decoded d;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path, "corrupt PNG: " + error);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  d.width = static_cast<int>(png_get_image_width(png, info));
  d.height = static_cast<int>(png_get_image_height(png, info));
  d.bit_depth = png_get_bit_depth(png, info);
  d.color_type = png_get_color_type(png, info);
  if (d.color_type == PNG_COLOR_TYPE_PALETTE) {
    png_colorp colors = nullptr;
    int n = 0;
    if (png_get_PLTE(png, info, &colors, &n))
      for (int i = 0; i < n; ++i) d.palette.push_back({colors[i].red, colors[i].green, colors[i].blue});
  }
  if (d.bit_depth < 8) png_set_packing(png);
  if (expand == Expand::ToRgb8) {
    if (d.color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (d.color_type == PNG_COLOR_TYPE_GRAY || d.color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (d.color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (d.bit_depth == 16) png_set_strip_16(png);
  } else if (d.bit_depth == 16) {
    png_set_swap(png);  // host order for little-endian readers below
  }
  png_read_update_info(png, info);
  d.row_bytes = png_get_rowbytes(png, info);
  d.bytes.resize(d.row_bytes * static_cast<std::size_t>(d.height));
  rows.resize(static_cast<std::size_t>(d.height));
  for (int y = 0; y < d.height; ++y) rows[static_cast<std::size_t>(y)] = d.bytes.data() + static_cast<std::size_t>(y) * d.row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return d;
}

}  // namespace

void write_gray16(const std::filesystem::path& path, const Gray16& image) {
  const std::size_t row = static_cast<std::size_t>(image.width) * 2;
  std::vector<std::uint8_t> bytes(row * static_cast<std::size_t>(image.height));
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(image.pixels[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(image.pixels[i] & 0xff);
  }
  write_rows(path, image.width, image.height, 16, PNG_COLOR_TYPE_GRAY, nullptr, bytes, row);
}

void write_indexed(const std::filesystem::path& path, const Indexed& image) {
  require(!image.palette.empty() && image.palette.size() <= 256, "write_indexed: palette must hold 1..256 colours");
  write_rows(path, image.width, image.height, 8, PNG_COLOR_TYPE_PALETTE, &image.palette, image.indices,
             static_cast<std::size_t>(image.width));
}

void write_rgb8(const std::filesystem::path& path, const Rgb8& image) {
  write_rows(path, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, nullptr, image.rgb,
             static_cast<std::size_t>(image.width) * 3);
}

Gray16 read_gray16(const std::filesystem::path& path) {
  const auto d = read_rows(path, Expand::None);
  if (d.color_type != PNG_COLOR_TYPE_GRAY) throw ParseError(path, "expected a grayscale PNG");
  Gray16 out{d.height, d.width, std::vector<std::uint16_t>(static_cast<std::size_t>(d.width) * d.height)};
  for (int y = 0; y < d.height; ++y) {
    const auto* row = d.bytes.data() + static_cast<std::size_t>(y) * d.row_bytes;
    for (int x = 0; x < d.width; ++x) {
      const auto i = static_cast<std::size_t>(y) * d.width + x;
      if (d.bit_depth == 16)
        out.pixels[i] = static_cast<std::uint16_t>(row[2 * x] | (row[2 * x + 1] << 8));
      else
        out.pixels[i] = static_cast<std::uint16_t>(row[x] * 257);
    }
  }
  return out;
}

Indexed read_indexed(const std::filesystem::path& path) {
  auto d = read_rows(path, Expand::None);
  if (d.color_type != PNG_COLOR_TYPE_PALETTE) throw ParseError(path, "expected a palette PNG");
  Indexed out{d.height, d.width, std::vector<std::uint8_t>(static_cast<std::size_t>(d.width) * d.height),
              std::move(d.palette)};
  for (int y = 0; y < d.height; ++y)
    std::copy_n(d.bytes.data() + static_cast<std::size_t>(y) * d.row_bytes, d.width,
                out.indices.begin() + static_cast<std::ptrdiff_t>(y) * d.width);
  for (auto idx : out.indices)
    if (idx >= out.palette.size()) throw ParseError(path, "palette index out of range");
  return out;
}

Rgb8 read_rgb8(const std::filesystem::path& path) {
  const auto d = read_rows(path, Expand::ToRgb8);
  Rgb8 out{d.height, d.width, std::vector<std::uint8_t>(static_cast<std::size_t>(d.width) * d.height * 3)};
  for (int y = 0; y < d.height; ++y)
    std::copy_n(d.bytes.data() + static_cast<std::size_t>(y) * d.row_bytes, d.width * 3,
                out.rgb.begin() + static_cast<std::ptrdiff_t>(y) * d.width * 3);
  return out;
}

}  // namespace diffrect::png

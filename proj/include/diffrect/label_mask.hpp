// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace diffrect {

/// Single-channel image, row-major, values nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f);

  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// One-hot class mask stored by class index. Holding the index instead of the
/// H x W x C indicator keeps every instance a valid one-hot field; the dense
/// form is produced on demand (see tensor_ops.hpp).
struct LabelMask {
  int height = 0;
  int width = 0;
  int classes = 0;
  std::vector<std::uint8_t> labels;

  LabelMask() = default;
  LabelMask(int h, int w, int c, std::uint8_t fill = 0);

  std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }

  std::size_t size() const { return labels.size(); }

  /// Pixel count per class.
  std::vector<std::int64_t> class_counts() const;

  /// Two-class mask: 1 where this mask equals `cls`, 0 elsewhere.
  LabelMask binary(int cls) const;

  /// Throws ContractViolation if any label is >= classes or the buffer size is off.
  void validate() const;

  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

/// RGB label image (H x W x 3, interleaved), the visual-space form of a mask.
struct SemanticLabel {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;

  friend bool operator==(const SemanticLabel&, const SemanticLabel&) = default;
};

void require_same_shape(const LabelMask& a, const LabelMask& b, const char* op);

}  // namespace diffrect

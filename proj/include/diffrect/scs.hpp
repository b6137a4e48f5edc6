// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "diffrect/label_mask.hpp"

namespace diffrect {

using Rgb = std::array<std::uint8_t, 3>;

/// Class-index -> RGB lookup. Class 0 is black; classes 1..C-1 sit on evenly
/// spaced hues at full saturation and value.
struct ColorSet {
  std::vector<Rgb> colors;

  int size() const { return static_cast<int>(colors.size()); }
  double min_pairwise_distance() const;
};

constexpr int kMinClasses = 2;
constexpr int kMaxClasses = 64;

ColorSet build_color_set(int classes);

SemanticLabel encode(const LabelMask& y, const ColorSet& cs);

/// Nearest-colour decode of an arbitrary real-valued H x W x 3 image (channels
/// on the 0..255 scale). Ties go to the lowest class index.
LabelMask decode(std::span<const float> rgb, int height, int width, const ColorSet& cs);
LabelMask decode(const SemanticLabel& m, const ColorSet& cs);

/// Nearest class for a single colour sample.
int nearest_class(float r, float g, float b, const ColorSet& cs);

}  // namespace diffrect

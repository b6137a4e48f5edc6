// SPDX-License-Identifier: Apache-2.0
#include "diffrect/scs.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "diffrect/errors.hpp"

namespace diffrect {

namespace {

Rgb hue_to_rgb(double hue_degrees) {
  // HSV -> RGB with S = V = 1.
  const double h = std::fmod(hue_degrees, 360.0) / 60.0;
  const int sector = static_cast<int>(std::floor(h));
  const double f = h - sector;
  const double up = f, down = 1.0 - f;
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = 1; g = up; b = 0; break;
    case 1: r = down; g = 1; b = 0; break;
    case 2: r = 0; g = 1; b = up; break;
    case 3: r = 0; g = down; b = 1; break;
    case 4: r = up; g = 0; b = 1; break;
    default: r = 1; g = 0; b = down; break;
  }
  auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); };
  return {q(r), q(g), q(b)};
}

double distance(const Rgb& a, const Rgb& b) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double d = double(a[k]) - double(b[k]);
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

double ColorSet::min_pairwise_distance() const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < colors.size(); ++i)
    for (std::size_t j = i + 1; j < colors.size(); ++j) best = std::min(best, distance(colors[i], colors[j]));
  return best;
}

ColorSet build_color_set(int classes) {
  require(classes >= kMinClasses && classes <= kMaxClasses,
          "build_color_set: class count " + std::to_string(classes) + " outside [2, 64]");
  ColorSet cs;
  cs.colors.push_back({0, 0, 0});
  for (int k = 1; k < classes; ++k) cs.colors.push_back(hue_to_rgb(360.0 * (k - 1) / (classes - 1)));
  return cs;
}

SemanticLabel encode(const LabelMask& y, const ColorSet& cs) {
  require(y.classes == cs.size(), "encode: mask class count does not match colour set");
  SemanticLabel m{y.height, y.width, std::vector<std::uint8_t>(y.labels.size() * 3)};
  for (std::size_t i = 0; i < y.labels.size(); ++i) {
    const auto cls = y.labels[i];
    if (cls >= cs.colors.size())
      throw ContractViolation("encode: class index " + std::to_string(cls) + " outside colour set");
    const auto& c = cs.colors[cls];
    m.rgb[3 * i] = c[0];
    m.rgb[3 * i + 1] = c[1];
    m.rgb[3 * i + 2] = c[2];
  }
  return m;
}

int nearest_class(float r, float g, float b, const ColorSet& cs) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cs.size(); ++k) {
    const auto& c = cs.colors[static_cast<std::size_t>(k)];
    const double dr = r - double(c[0]), dg = g - double(c[1]), db = b - double(c[2]);
    const double d = dr * dr + dg * dg + db * db;
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

LabelMask decode(std::span<const float> rgb, int height, int width, const ColorSet& cs) {
  require(rgb.size() == static_cast<std::size_t>(height) * width * 3, "decode: buffer size mismatch");
  LabelMask y(height, width, cs.size());
  for (std::size_t i = 0; i < y.labels.size(); ++i)
    y.labels[i] = static_cast<std::uint8_t>(nearest_class(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2], cs));
  return y;
}

LabelMask decode(const SemanticLabel& m, const ColorSet& cs) {
  std::vector<float> f(m.rgb.begin(), m.rgb.end());
  return decode(f, m.height, m.width, cs);
}

}  // namespace diffrect

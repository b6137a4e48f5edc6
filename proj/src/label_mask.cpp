// SPDX-License-Identifier: Apache-2.0
#include "diffrect/label_mask.hpp"

#include <string>

#include "diffrect/errors.hpp"

namespace diffrect {

Image::Image(int h, int w, float fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {
  require(h >= 0 && w >= 0, "Image: negative dimensions");
}

LabelMask::LabelMask(int h, int w, int c, std::uint8_t fill)
    : height(h), width(w), classes(c), labels(static_cast<std::size_t>(h) * w, fill) {
  require(h >= 0 && w >= 0, "LabelMask: negative dimensions");
  require(c >= 1 && c <= 256, "LabelMask: class count must be in [1, 256]");
  require(fill < c, "LabelMask: fill label out of range");
}

std::vector<std::int64_t> LabelMask::class_counts() const {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(classes), 0);
  for (auto v : labels) ++counts[v];
  return counts;
}

LabelMask LabelMask::binary(int cls) const {
  require(cls >= 0 && cls < classes, "LabelMask::binary: class out of range");
  LabelMask out(height, width, 2);
  for (std::size_t i = 0; i < labels.size(); ++i) out.labels[i] = labels[i] == cls ? 1 : 0;
  return out;
}

void LabelMask::validate() const {
  require(labels.size() == static_cast<std::size_t>(height) * width,
          "LabelMask: buffer size does not match dimensions");
  for (auto v : labels) {
    if (v >= classes)
      throw ContractViolation("LabelMask: class index " + std::to_string(v) +
                              " >= class count " + std::to_string(classes));
  }
}

void require_same_shape(const LabelMask& a, const LabelMask& b, const char* op) {
  if (a.height != b.height || a.width != b.width || a.classes != b.classes) {
    throw ContractViolation(std::string(op) + ": shape mismatch (" + std::to_string(a.height) +
                            "x" + std::to_string(a.width) + "x" + std::to_string(a.classes) +
                            " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) +
                            "x" + std::to_string(b.classes) + ")");
  }
}

}  // namespace diffrect

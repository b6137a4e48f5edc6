// SPDX-License-Identifier: Apache-2.0
#include "diffrect/tensor_ops.hpp"

#include <string>

#include "diffrect/errors.hpp"

namespace diffrect {

torch::Tensor to_tensor(std::span<const Image> images, torch::Dtype dtype) {
  require(!images.empty(), "to_tensor: empty batch");
  const int h = images.front().height, w = images.front().width;
  auto out = torch::empty({static_cast<int64_t>(images.size()), 1, h, w}, torch::kFloat32);
  auto* p = out.data_ptr<float>();
  for (const auto& im : images) {
    require(im.height == h && im.width == w, "to_tensor: images differ in size");
    p = std::copy(im.pixels.begin(), im.pixels.end(), p);
  }
  return out.to(dtype);
}

torch::Tensor one_hot(std::span<const LabelMask> masks, torch::Dtype dtype) {
  require(!masks.empty(), "one_hot: empty batch");
  const auto& m0 = masks.front();
  auto idx = torch::empty({static_cast<int64_t>(masks.size()), m0.height, m0.width}, torch::kLong);
  auto* p = idx.data_ptr<int64_t>();
  for (const auto& m : masks) {
    require_same_shape(m, m0, "one_hot");
    for (auto v : m.labels) *p++ = v;
  }
  return torch::one_hot(idx, m0.classes).permute({0, 3, 1, 2}).contiguous().to(dtype);
}

std::vector<LabelMask> argmax_masks(const torch::Tensor& scores) {
  require(scores.dim() == 4, "argmax_masks: expected [B, C, H, W]");
  const auto idx = scores.detach().argmax(1).to(torch::kUInt8).contiguous();
  const int64_t b = scores.size(0), c = scores.size(1), h = scores.size(2), w = scores.size(3);
  std::vector<LabelMask> out;
  const auto* p = idx.data_ptr<uint8_t>();
  for (int64_t i = 0; i < b; ++i) {
    LabelMask m(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    std::copy_n(p + i * h * w, h * w, m.labels.begin());
    out.push_back(std::move(m));
  }
  return out;
}

torch::Tensor argmax_one_hot(const torch::Tensor& scores) {
  const auto c = scores.size(1);
  return torch::one_hot(scores.detach().argmax(1), c).permute({0, 3, 1, 2}).to(scores.scalar_type());
}

torch::Tensor semantic_input(std::span<const LabelMask> masks, const ColorSet& cs, torch::Dtype dtype) {
  require(!masks.empty(), "semantic_input: empty batch");
  const int h = masks.front().height, w = masks.front().width;
  auto out = torch::empty({static_cast<int64_t>(masks.size()), 3, h, w}, torch::kFloat32);
  auto* p = out.data_ptr<float>();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const auto m = encode(masks[i], cs);
    require(m.height == h && m.width == w, "semantic_input: masks differ in size");
    for (std::size_t px = 0; px < plane; ++px)
      for (std::size_t ch = 0; ch < 3; ++ch)
        p[(i * 3 + ch) * plane + px] = static_cast<float>(m.rgb[3 * px + ch]) / 127.5f - 1.0f;
  }
  return out.to(dtype);
}

void require_one_hot(const torch::Tensor& t, const char* op) {
  require(t.dim() == 4, std::string(op) + ": target must be [B, C, H, W]");
  const auto binary = torch::logical_or(t == 0, t == 1).all().item<bool>();
  const auto sums_to_one = (t.sum(1) == 1).all().item<bool>();
  if (!binary || !sums_to_one) throw ContractViolation(std::string(op) + ": target is not one-hot");
}

void require_finite(const torch::Tensor& t, const char* op) {
  if (!torch::isfinite(t).all().item<bool>())
    throw ContractViolation(std::string(op) + ": non-finite input");
}

}  // namespace diffrect

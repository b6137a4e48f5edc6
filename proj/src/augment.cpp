// SPDX-License-Identifier: Apache-2.0
#include "diffrect/augment.hpp"

#include <algorithm>
#include <cmath>

#include "diffrect/errors.hpp"

namespace diffrect {

namespace {

// Geometric remap of an n x n grid with `channels` interleaved values per cell.
template <class T>
std::vector<T> remap(const std::vector<T>& src, int n, int channels, const WeakParams& p) {
  std::vector<T> cur = src, next(src.size());
  const auto idx = [&](int y, int x) { return (static_cast<std::size_t>(y) * n + x) * channels; };
  if (p.flip) {
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        std::copy_n(cur.begin() + idx(y, n - 1 - x), channels, next.begin() + idx(y, x));
    std::swap(cur, next);
  }
  const int turns = ((p.quarter_turns % 4) + 4) % 4;
  for (int k = 0; k < turns; ++k) {
    // 90 degrees counter-clockwise: out(y, x) = in(x, n - 1 - y)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        std::copy_n(cur.begin() + idx(x, n - 1 - y), channels, next.begin() + idx(y, x));
    std::swap(cur, next);
  }
  return cur;
}

void require_square(int h, int w) { require(h == w, "weak_perturb: input must be square"); }

std::vector<float> blur(const Image& im, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= total;

  const int h = im.height, w = im.width;
  auto clampi = [](int v, int lo, int hi) { return std::min(std::max(v, lo), hi); };
  std::vector<double> tmp(im.pixels.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[static_cast<std::size_t>(i + radius)] * im.at(y, clampi(x + i, 0, w - 1));
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  std::vector<float> out(im.pixels.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i)
        s += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(clampi(y + i, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(s);
    }
  return out;
}

// 3x3 smoothing filter [[1,1,1],[1,5,1],[1,1,1]] / 13 with replicated borders.
std::vector<float> smooth(const Image& im) {
  const int h = im.height, w = im.width;
  std::vector<float> out(im.pixels.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = std::clamp(y + dy, 0, h - 1), xx = std::clamp(x + dx, 0, w - 1);
          s += (dy == 0 && dx == 0 ? 5.0 : 1.0) * im.at(yy, xx);
        }
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(s / 13.0);
    }
  return out;
}

}  // namespace

void to_json(nlohmann::json& j, const PerturbSpec& s) {
  j = {{"weak", {{"flip_prob", s.flip_prob}, {"rot_choices", {0, 90, 180, 270}}}},
       {"strong", {{"blur_sigma_range", {s.blur_sigma_min, s.blur_sigma_max}},
                   {"factor_range", {s.factor_min, s.factor_max}}}}};
}

void from_json(const nlohmann::json& j, PerturbSpec& s) {
  s.flip_prob = j.at("weak").at("flip_prob");
  const auto& st = j.at("strong");
  s.blur_sigma_min = st.at("blur_sigma_range").at(0);
  s.blur_sigma_max = st.at("blur_sigma_range").at(1);
  s.factor_min = st.at("factor_range").at(0);
  s.factor_max = st.at("factor_range").at(1);
}

WeakParams sample_weak(const PerturbSpec& spec, Rng& rng) {
  WeakParams p;
  p.flip = rng.uniform() < spec.flip_prob;
  p.quarter_turns = static_cast<int>(rng.uniform_int(0, 3));
  return p;
}

StrongParams sample_strong(const PerturbSpec& spec, Rng& rng) {
  StrongParams p;
  p.blur_sigma = rng.uniform(spec.blur_sigma_min, spec.blur_sigma_max);
  p.contrast = rng.uniform(spec.factor_min, spec.factor_max);
  p.sharpness = rng.uniform(spec.factor_min, spec.factor_max);
  p.brightness = rng.uniform(spec.factor_min, spec.factor_max);
  return p;
}

Image apply_weak(const Image& image, const WeakParams& p) {
  require_square(image.height, image.width);
  Image out = image;
  out.pixels = remap(image.pixels, image.height, 1, p);
  return out;
}

LabelMask apply_weak(const LabelMask& mask, const WeakParams& p) {
  require_square(mask.height, mask.width);
  LabelMask out = mask;
  out.labels = remap(mask.labels, mask.height, 1, p);
  return out;
}

SemanticLabel apply_weak(const SemanticLabel& label, const WeakParams& p) {
  require_square(label.height, label.width);
  SemanticLabel out = label;
  out.rgb = remap(label.rgb, label.height, 3, p);
  return out;
}

Image apply_strong(const Image& image, const StrongParams& p) {
  Image out = image;
  if (p.blur_sigma > 0.0) out.pixels = blur(out, p.blur_sigma);

  if (p.contrast != 1.0) {
    double mean = 0.0;
    for (float v : out.pixels) mean += v;
    mean /= static_cast<double>(std::max<std::size_t>(out.pixels.size(), 1));
    for (auto& v : out.pixels) v = static_cast<float>(mean + p.contrast * (v - mean));
  }
  if (p.sharpness != 1.0) {
    const auto soft = smooth(out);
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
      out.pixels[i] = static_cast<float>(soft[i] + p.sharpness * (out.pixels[i] - soft[i]));
  }
  if (p.brightness != 1.0)
    for (auto& v : out.pixels) v = static_cast<float>(p.brightness * v);

  for (auto& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

std::pair<Image, LabelMask> weak_perturb(const Image& image, const LabelMask& mask, const PerturbSpec& spec,
                                         Rng& rng) {
  require(image.height == mask.height && image.width == mask.width, "weak_perturb: image and mask differ in size");
  require_square(image.height, image.width);
  const auto p = sample_weak(spec, rng);
  return {apply_weak(image, p), apply_weak(mask, p)};
}

Image strong_perturb(const Image& image, const PerturbSpec& spec, Rng& rng) {
  return apply_strong(image, sample_strong(spec, rng));
}

}  // namespace diffrect

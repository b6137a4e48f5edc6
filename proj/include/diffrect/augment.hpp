// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>

#include <json.hpp>

#include "diffrect/label_mask.hpp"
#include "diffrect/rng.hpp"

namespace diffrect {

struct PerturbSpec {
  // weak: horizontal flip with this probability, then 0/90/180/270 degree rotation
  double flip_prob = 0.5;
  // strong: Gaussian blur, then contrast, sharpness and brightness enhancement
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  double factor_min = 0.5;
  double factor_max = 1.5;
};

void to_json(nlohmann::json& j, const PerturbSpec& s);
void from_json(const nlohmann::json& j, PerturbSpec& s);

struct WeakParams {
  bool flip = false;
  int quarter_turns = 0;  // counter-clockwise
};

struct StrongParams {
  double blur_sigma = 0.0;  // 0 disables the blur
  double contrast = 1.0;
  double sharpness = 1.0;
  double brightness = 1.0;
};

WeakParams sample_weak(const PerturbSpec& spec, Rng& rng);
StrongParams sample_strong(const PerturbSpec& spec, Rng& rng);

Image apply_weak(const Image& image, const WeakParams& p);
LabelMask apply_weak(const LabelMask& mask, const WeakParams& p);
SemanticLabel apply_weak(const SemanticLabel& label, const WeakParams& p);

Image apply_strong(const Image& image, const StrongParams& p);

/// Draws one geometric transform and applies it to both image and mask.
std::pair<Image, LabelMask> weak_perturb(const Image& image, const LabelMask& mask, const PerturbSpec& spec,
                                         Rng& rng);

/// Photometric-only perturbation; output clipped to [0, 1].
Image strong_perturb(const Image& image, const PerturbSpec& spec, Rng& rng);

}  // namespace diffrect

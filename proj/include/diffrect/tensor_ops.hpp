// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include <torch/torch.h>

#include "diffrect/label_mask.hpp"
#include "diffrect/scs.hpp"

namespace diffrect {

/// [B, 1, H, W] batch from grayscale images.
torch::Tensor to_tensor(std::span<const Image> images, torch::Dtype dtype = torch::kFloat32);

/// Dense one-hot [B, C, H, W] from class-index masks.
torch::Tensor one_hot(std::span<const LabelMask> masks, torch::Dtype dtype = torch::kFloat32);

/// Per-item argmax of [B, C, H, W] logits or probabilities.
std::vector<LabelMask> argmax_masks(const torch::Tensor& scores);

/// [B, C, H, W] one-hot of the channel argmax, detached.
torch::Tensor argmax_one_hot(const torch::Tensor& scores);

/// SCS-encoded labels as network input: [B, 3, H, W], channels mapped from
/// 0..255 to [-1, 1].
torch::Tensor semantic_input(std::span<const LabelMask> masks, const ColorSet& cs,
                             torch::Dtype dtype = torch::kFloat32);

/// Throws ContractViolation unless `t` is [B, C, H, W] with exactly one 1 and
/// zeros elsewhere along the class axis.
void require_one_hot(const torch::Tensor& t, const char* op);

void require_finite(const torch::Tensor& t, const char* op);

}  // namespace diffrect

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

#include <torch/torch.h>

namespace diffrect {

struct LossWeights {
  double lambda1 = 1.0;           // S2W latent loss
  double lambda2 = 1.0;           // W2G latent loss
  double pseudo_threshold = 0.95; // weak-view confidence needed to keep a pseudo label
};

/// Unweighted loss terms of one iteration.
struct LossParts {
  double seg_semi = 0.0;
  double rect = 0.0;
  double lat_semi = 0.0;
  double lat_u = 0.0;
  double lat_l = 0.0;
};

struct LossBreakdown {
  double seg_semi = 0.0;
  double rect = 0.0;
  double lat_semi = 0.0;
  double lat_u = 0.0;
  double lat_l = 0.0;
  double total = 0.0;
};

constexpr double kDiceSmooth = 1e-5;

/// 1 - mean_c (2 sum(p g) + eps) / (sum(p) + sum(g) + eps), p = softmax(logits),
/// sums taken over batch and pixels per class.
torch::Tensor soft_dice_loss(const torch::Tensor& logits, const torch::Tensor& target);

/// Mean per-pixel cross-entropy against a one-hot target.
torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& target);

/// CE + soft Dice against the rectified label. The target is detached.
torch::Tensor rect_loss(const torch::Tensor& weak_logits, const torch::Tensor& rectified);

/// Mean squared difference.
torch::Tensor latent_loss(const torch::Tensor& clean, const torch::Tensor& reconstructed);

/// Cross-entropy of `logits` against argmax(probs), restricted to pixels whose
/// max probability reaches `threshold` and averaged over those pixels; 0 when
/// none qualify.
torch::Tensor pseudo_label_loss(const torch::Tensor& logits, const torch::Tensor& probs, double threshold);

/// Supervised CE + Dice on the labeled batch plus the thresholded pseudo-label
/// CE of the strong view against the weak view.
torch::Tensor semi_seg_loss(const torch::Tensor& labeled_logits, const torch::Tensor& labels,
                            const torch::Tensor& strong_logits, const torch::Tensor& weak_probs,
                            const LossWeights& weights);

/// seg_semi + rect + lat_semi + lambda1 lat_u + lambda2 lat_l.
LossBreakdown total_loss(const LossParts& parts, const LossWeights& weights);

void write_loss_header(std::ostream& os);
void write_loss_row(std::ostream& os, long long iteration, const LossBreakdown& b);

}  // namespace diffrect

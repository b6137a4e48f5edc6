// SPDX-License-Identifier: Apache-2.0
#include "diffrect/losses.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "diffrect/errors.hpp"
#include "diffrect/tensor_ops.hpp"

namespace diffrect {

namespace {

void require_shape(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
  if (!a.sizes().equals(b.sizes())) throw ContractViolation(std::string(op) + ": shape mismatch");
}

void require_prob_field(const torch::Tensor& p) {
  require(p.dim() == 4, "semi_seg_loss: weak_probs must be [B, C, H, W]");
  const bool nonneg = (p >= 0).all().item<bool>();
  const bool normalized = ((p.sum(1) - 1.0).abs() <= 1e-4).all().item<bool>();
  if (!nonneg || !normalized) throw ContractViolation("semi_seg_loss: weak_probs is not a probability field");
}

}  // namespace

torch::Tensor soft_dice_loss(const torch::Tensor& logits, const torch::Tensor& target) {
  require_shape(logits, target, "soft_dice_loss");
  require(logits.dim() == 4, "soft_dice_loss: expected [B, C, H, W]");
  const auto p = torch::softmax(logits, 1);
  const std::vector<int64_t> reduce{0, 2, 3};
  const auto inter = (p * target).sum(reduce);
  const auto denom = p.sum(reduce) + target.sum(reduce);
  return 1.0 - ((2.0 * inter + kDiceSmooth) / (denom + kDiceSmooth)).mean();
}

torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& target) {
  require_shape(logits, target, "cross_entropy");
  return -(torch::log_softmax(logits, 1) * target).sum(1).mean();
}

torch::Tensor rect_loss(const torch::Tensor& weak_logits, const torch::Tensor& rectified) {
  require_shape(weak_logits, rectified, "rect_loss");
  require_one_hot(rectified, "rect_loss");
  const auto target = rectified.detach();
  return cross_entropy(weak_logits, target) + soft_dice_loss(weak_logits, target);
}

torch::Tensor latent_loss(const torch::Tensor& clean, const torch::Tensor& reconstructed) {
  require_shape(clean, reconstructed, "latent_loss");
  return (clean - reconstructed).pow(2).mean();
}

torch::Tensor pseudo_label_loss(const torch::Tensor& logits, const torch::Tensor& probs, double threshold) {
  require_shape(logits, probs, "pseudo_label_loss");
  const auto p = probs.detach();
  const auto [confidence, label] = p.max(1);
  const auto keep = (confidence >= threshold).to(logits.scalar_type());
  const auto kept = keep.sum();
  const auto ce = -torch::log_softmax(logits, 1).gather(1, label.unsqueeze(1)).squeeze(1);
  if (kept.item<double>() == 0.0) return (logits * 0.0).sum();
  return (ce * keep).sum() / kept;
}

torch::Tensor semi_seg_loss(const torch::Tensor& labeled_logits, const torch::Tensor& labels,
                            const torch::Tensor& strong_logits, const torch::Tensor& weak_probs,
                            const LossWeights& weights) {
  require_shape(labeled_logits, labels, "semi_seg_loss");
  require_one_hot(labels, "semi_seg_loss");
  require_prob_field(weak_probs);
  const auto supervised = cross_entropy(labeled_logits, labels) + soft_dice_loss(labeled_logits, labels);
  return supervised + pseudo_label_loss(strong_logits, weak_probs, weights.pseudo_threshold);
}

LossBreakdown total_loss(const LossParts& parts, const LossWeights& weights) {
  const std::pair<const char*, double> named[] = {{"seg_semi", parts.seg_semi}, {"rect", parts.rect},
                                                  {"lat_semi", parts.lat_semi}, {"lat_u", parts.lat_u},
                                                  {"lat_l", parts.lat_l}};
  for (const auto& [name, v] : named)
    if (!std::isfinite(v)) throw ContractViolation(std::string("total_loss: non-finite ") + name);
  require(weights.lambda1 >= 0 && weights.lambda2 >= 0 && std::isfinite(weights.lambda1) &&
              std::isfinite(weights.lambda2),
          "total_loss: lambdas must be finite and non-negative");
  LossBreakdown b{parts.seg_semi, parts.rect, parts.lat_semi, parts.lat_u, parts.lat_l, 0.0};
  b.total = b.seg_semi + b.rect + b.lat_semi + weights.lambda1 * b.lat_u + weights.lambda2 * b.lat_l;
  return b;
}

void write_loss_header(std::ostream& os) { os << "iter,seg_semi,rect,lat_semi,lat_u,lat_l,total\n"; }

void write_loss_row(std::ostream& os, long long iteration, const LossBreakdown& b) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", iteration, b.seg_semi, b.rect, b.lat_semi,
                b.lat_u, b.lat_l, b.total);
  os << buf;
}

}  // namespace diffrect

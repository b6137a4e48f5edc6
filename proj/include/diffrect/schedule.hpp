// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "diffrect/rng.hpp"

namespace diffrect {

/// Per-step diffusion coefficients. Vectors are indexed by t - 1 for t in [1, T].
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> posterior_var;

  double alpha_at(int t) const { return alpha[static_cast<std::size_t>(t - 1)]; }
  double alpha_bar_at(int t) const { return alpha_bar[static_cast<std::size_t>(t - 1)]; }
  /// alpha_bar with the convention alpha_bar(0) = 1.
  double alpha_bar_prev(int t) const { return t <= 1 ? 1.0 : alpha_bar_at(t - 1); }
  double posterior_var_at(int t) const { return posterior_var[static_cast<std::size_t>(t - 1)]; }

  void check_step(int t) const;
};

constexpr double kCosineOffset = 0.008;
constexpr double kMaxBeta = 0.999;

/// Improved-DDPM cosine schedule; beta_t is clipped to kMaxBeta and alpha_bar
/// is the running product of the clipped alphas.
NoiseSchedule make_cosine_schedule(int steps);

/// Closed-form forward diffusion sqrt(ab_t) z0 + sqrt(1 - ab_t) eta.
torch::Tensor q_sample(const torch::Tensor& z0, int t, const torch::Tensor& eta, const NoiseSchedule& s);
/// Batched form; `t` holds one step per leading-dimension item.
torch::Tensor q_sample(const torch::Tensor& z0, std::span<const int> t, const torch::Tensor& eta,
                       const NoiseSchedule& s);

/// Single forward transition sqrt(a_t) z_{t-1} + sqrt(1 - a_t) eta.
torch::Tensor q_step(const torch::Tensor& z_prev, int t, const torch::Tensor& eta, const NoiseSchedule& s);

/// Inverse of q_sample given a noise estimate.
torch::Tensor predict_z0(const torch::Tensor& z_t, int t, const torch::Tensor& eps_hat, const NoiseSchedule& s);
torch::Tensor predict_z0(const torch::Tensor& z_t, std::span<const int> t, const torch::Tensor& eps_hat,
                         const NoiseSchedule& s);

/// Mean of q(z_{t-1} | z_t, z0).
torch::Tensor posterior_mean(const torch::Tensor& z_t, const torch::Tensor& z0, int t, const NoiseSchedule& s);

struct DiffusionStepInput {
  torch::Tensor z_t;
  int t = 1;
  torch::Tensor eps_hat;
  torch::Tensor eta;  // undefined tensor means zero
};

/// One ancestral step with fixed posterior variance. The final step (t = 1)
/// is deterministic: a nonzero eta there is rejected.
torch::Tensor reverse_step(const DiffusionStepInput& in, const NoiseSchedule& s);

/// eps_hat = denoiser(z_t, t, cond, aux)
using ConditionalDenoiser =
    std::function<torch::Tensor(const torch::Tensor&, int, const torch::Tensor&, const torch::Tensor&)>;

/// Full ancestral loop from z_T ~ N(0, I) down to t = 1. The starting noise
/// and every per-step eta come from `rng`, so equal seeds give equal outputs.
torch::Tensor sample_loop(const ConditionalDenoiser& denoiser, const torch::Tensor& cond,
                          const torch::Tensor& aux, const NoiseSchedule& s, Rng& rng);

/// Standard-normal tensor drawn from the portable stream (row-major fill).
torch::Tensor normal_like(const torch::Tensor& like, Rng& rng);
torch::Tensor normal_tensor(at::IntArrayRef shape, Rng& rng, torch::Dtype dtype = torch::kFloat32);

/// CSV `t,alpha,alpha_bar,posterior_var`.
void write_schedule_csv(std::ostream& os, const NoiseSchedule& s);

}  // namespace diffrect

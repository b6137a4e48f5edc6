// SPDX-License-Identifier: Apache-2.0
#include "diffrect/schedule.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "diffrect/errors.hpp"

namespace diffrect {

namespace {

double cosine_f(double t, double steps) {
  const double c = std::cos((t / steps + kCosineOffset) / (1.0 + kCosineOffset) * std::numbers::pi / 2.0);
  return c * c;
}

// [B, 1, 1, ...] coefficient tensor matching x's rank, one value per item.
torch::Tensor per_item(const torch::Tensor& x, std::span<const int> t, const auto& fn) {
  require(x.dim() >= 1 && static_cast<std::size_t>(x.size(0)) == t.size(),
          "diffusion: one step per batch item required");
  std::vector<double> v(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) v[i] = fn(t[i]);
  std::vector<int64_t> shape(static_cast<std::size_t>(x.dim()), 1);
  shape[0] = static_cast<int64_t>(t.size());
  return torch::tensor(v, torch::kFloat64).to(x.scalar_type()).reshape(shape);
}

void require_same(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
  if (!a.sizes().equals(b.sizes()))
    throw ContractViolation(std::string(op) + ": tensor shapes differ");
}

}  // namespace

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > steps)
    throw ContractViolation("diffusion step " + std::to_string(t) + " outside [1, " +
                            std::to_string(steps) + "]");
}

NoiseSchedule make_cosine_schedule(int steps) {
  require(steps >= 1, "make_cosine_schedule: T must be >= 1");
  NoiseSchedule s;
  s.steps = steps;
  const double T = steps;
  const double f0 = cosine_f(0.0, T);
  double prev_bar = 1.0;
  double running = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double bar = cosine_f(t, T) / f0;
    const double beta = std::min(1.0 - bar / prev_bar, kMaxBeta);
    prev_bar = bar;
    const double a = 1.0 - beta;
    const double prev_running = running;
    running *= a;
    s.alpha.push_back(a);
    s.alpha_bar.push_back(running);
    s.posterior_var.push_back((1.0 - prev_running) / (1.0 - running) * beta);
  }
  return s;
}

torch::Tensor q_sample(const torch::Tensor& z0, int t, const torch::Tensor& eta, const NoiseSchedule& s) {
  s.check_step(t);
  require_same(z0, eta, "q_sample");
  const double ab = s.alpha_bar_at(t);
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eta;
}

torch::Tensor q_sample(const torch::Tensor& z0, std::span<const int> t, const torch::Tensor& eta,
                       const NoiseSchedule& s) {
  for (int ti : t) s.check_step(ti);
  require_same(z0, eta, "q_sample");
  const auto a = per_item(z0, t, [&](int ti) { return std::sqrt(s.alpha_bar_at(ti)); });
  const auto b = per_item(z0, t, [&](int ti) { return std::sqrt(1.0 - s.alpha_bar_at(ti)); });
  return a * z0 + b * eta;
}

torch::Tensor q_step(const torch::Tensor& z_prev, int t, const torch::Tensor& eta, const NoiseSchedule& s) {
  s.check_step(t);
  require_same(z_prev, eta, "q_step");
  const double a = s.alpha_at(t);
  return std::sqrt(a) * z_prev + std::sqrt(1.0 - a) * eta;
}

torch::Tensor predict_z0(const torch::Tensor& z_t, int t, const torch::Tensor& eps_hat, const NoiseSchedule& s) {
  s.check_step(t);
  require_same(z_t, eps_hat, "predict_z0");
  const double ab = s.alpha_bar_at(t);
  return (z_t - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

torch::Tensor predict_z0(const torch::Tensor& z_t, std::span<const int> t, const torch::Tensor& eps_hat,
                         const NoiseSchedule& s) {
  for (int ti : t) s.check_step(ti);
  require_same(z_t, eps_hat, "predict_z0");
  const auto b = per_item(z_t, t, [&](int ti) { return std::sqrt(1.0 - s.alpha_bar_at(ti)); });
  const auto a = per_item(z_t, t, [&](int ti) { return std::sqrt(s.alpha_bar_at(ti)); });
  return (z_t - b * eps_hat) / a;
}

torch::Tensor posterior_mean(const torch::Tensor& z_t, const torch::Tensor& z0, int t, const NoiseSchedule& s) {
  s.check_step(t);
  require_same(z_t, z0, "posterior_mean");
  const double ab = s.alpha_bar_at(t), ab_prev = s.alpha_bar_prev(t), a = s.alpha_at(t);
  const double c0 = std::sqrt(ab_prev) * (1.0 - a) / (1.0 - ab);
  const double ct = std::sqrt(a) * (1.0 - ab_prev) / (1.0 - ab);
  return c0 * z0 + ct * z_t;
}

torch::Tensor reverse_step(const DiffusionStepInput& in, const NoiseSchedule& s) {
  s.check_step(in.t);
  require_same(in.z_t, in.eps_hat, "reverse_step");
  const double a = s.alpha_at(in.t);
  const double ab = s.alpha_bar_at(in.t);
  auto mean = (in.z_t - ((1.0 - a) / std::sqrt(1.0 - ab)) * in.eps_hat) / std::sqrt(a);
  if (!in.eta.defined()) return mean;
  require_same(in.z_t, in.eta, "reverse_step");
  if (in.t == 1) {
    require(in.eta.abs().max().item<double>() == 0.0, "reverse_step: eta must be zero at t = 1");
    return mean;
  }
  return mean + std::sqrt(s.posterior_var_at(in.t)) * in.eta;
}

torch::Tensor normal_tensor(at::IntArrayRef shape, Rng& rng, torch::Dtype dtype) {
  auto out = torch::empty(shape, torch::kFloat64);
  rng.fill_normal(std::span<double>(out.data_ptr<double>(), static_cast<std::size_t>(out.numel())));
  return out.to(dtype);
}

torch::Tensor normal_like(const torch::Tensor& like, Rng& rng) {
  return normal_tensor(like.sizes(), rng, like.scalar_type());
}

torch::Tensor sample_loop(const ConditionalDenoiser& denoiser, const torch::Tensor& cond,
                          const torch::Tensor& aux, const NoiseSchedule& s, Rng& rng) {
  torch::NoGradGuard no_grad;
  auto z = normal_like(cond, rng);
  for (int t = s.steps; t >= 1; --t) {
    auto eps = denoiser(z, t, cond, aux);
    if (!eps.sizes().equals(z.sizes()))
      throw ContractViolation("sample_loop: denoiser output shape differs from latent shape");
    DiffusionStepInput in{z, t, eps, t > 1 ? normal_like(z, rng) : torch::Tensor()};
    z = reverse_step(in, s);
  }
  return z;
}

void write_schedule_csv(std::ostream& os, const NoiseSchedule& s) {
  os << "t,alpha,alpha_bar,posterior_var\n";
  char buf[128];
  for (int t = 1; t <= s.steps; ++t) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", t, s.alpha_at(t), s.alpha_bar_at(t),
                  s.posterior_var_at(t));
    os << buf;
  }
}

}  // namespace diffrect

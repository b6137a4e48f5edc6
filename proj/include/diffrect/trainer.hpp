// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "diffrect/augment.hpp"
#include "diffrect/data.hpp"
#include "diffrect/losses.hpp"
#include "diffrect/metrics.hpp"
#include "diffrect/nets.hpp"
#include "diffrect/rng.hpp"
#include "diffrect/schedule.hpp"
#include "diffrect/scs.hpp"

namespace diffrect {

/// Which rectification machinery is active.
///  - Baseline: FixMatch-style seg loss only.
///  - LccOnly: B_sem + decoder trained; the rectified target is the decoded
///    tau = 1 embedding of the weak label (no diffusion).
///  - DiffRect: full LCC + LFR with diffusion sampling.
enum class Variant { Baseline, LccOnly, DiffRect };

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant v);

struct TrainConfig {
  std::int64_t iterations = 2000;
  int labeled_bs = 2;
  int unlabeled_bs = 2;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double poly_power = 0.9;
  int diffusion_steps = 100;
  LossWeights weights;
  GuidanceMode guidance;
  Variant variant = Variant::DiffRect;
  int rectify_every = 1;
  std::int64_t eval_every = 200;
  std::uint64_t seed = 0;
  double labeled_ratio = 0.05;
  ModelConfig model;
  PerturbSpec perturb;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Everything a run needs to continue bit-exactly: networks, optimiser
/// accumulators, iteration counter, random stream, best-score bookkeeping.
struct TrainState {
  explicit TrainState(const TrainConfig& cfg);

  TrainConfig config;
  Networks nets{nullptr};
  std::unique_ptr<torch::optim::SGD> optimizer;
  NoiseSchedule schedule;
  ColorSet colors;
  std::int64_t iteration = 0;
  Rng rng;
  double best_dice = -1.0;
  std::int64_t best_iteration = -1;
};

/// eps_hat for a batch with one step per item.
using NoisePredictor = std::function<torch::Tensor(const torch::Tensor& z_t, std::span<const int> t,
                                                   const torch::Tensor& cond, const torch::Tensor& feats)>;

/// Noise-prediction views of the denoiser network. The network itself
/// regresses the clean latent; these adapters convert that estimate to the
/// equivalent noise for step t.
NoisePredictor noise_predictor(Networks& nets, const NoiseSchedule& s);
ConditionalDenoiser stepwise_denoiser(Networks& nets, const NoiseSchedule& s);

/// Segmentation forward with the encoder features pooled to the latent grid.
struct SegResult {
  torch::Tensor logits;
  torch::Tensor feats;
};
SegResult seg_forward(Networks& nets, const torch::Tensor& images);

struct PseudoLabels {
  std::vector<LabelMask> weak;    // y_w
  std::vector<LabelMask> strong;  // y_s
  torch::Tensor weak_logits;
  torch::Tensor weak_probs;       // detached softmax of the weak view
  torch::Tensor strong_logits;
  torch::Tensor feats;            // weak-view features, detached
};

/// Weak view: geometric perturbation. Strong view: the same geometry followed
/// by photometric perturbation. Both views go through one segmentation pass.
PseudoLabels pseudo_labels(TrainState& state, std::span<const Image> images, Rng& rng);
PseudoLabels pseudo_labels(TrainState& state, std::span<const Image> images, std::span<const WeakParams> weak,
                           std::span<const StrongParams> strong);

struct LabelEmbedding {
  torch::Tensor first;   // z of the first (lower-quality) label
  torch::Tensor second;  // z of the second (higher-quality) label
  std::vector<double> tau;
};

/// Unlabeled pair: first = z_s, second = z_w, tau_u = guidance(y_s, y_w).
LabelEmbedding lcc_embed_unlabeled(TrainState& state, std::span<const LabelMask> y_s,
                                   std::span<const LabelMask> y_w, const GuidanceMode& mode, Rng& rng);
/// Labeled pair: first = z_w, second = z_l, tau_l = guidance(y_w, y_l).
LabelEmbedding lcc_embed_labeled(TrainState& state, std::span<const LabelMask> y_w, std::span<const LabelMask> y_l,
                                 const GuidanceMode& mode, Rng& rng);

struct LatentLosses {
  torch::Tensor lat_u;  // S2W
  torch::Tensor lat_l;  // W2G
  torch::Tensor r_w;    // one-step reconstruction of z_w
  torch::Tensor r_l;    // one-step reconstruction of z_l
};

/// Pre-drawn diffusion randomness for lfr_train_losses.
struct DiffusionDraws {
  std::vector<int> t_u, t_l;
  torch::Tensor eta_u, eta_l;
};

DiffusionDraws draw_diffusion(const NoiseSchedule& s, const torch::Tensor& z_u, const torch::Tensor& z_l, Rng& rng);

/// S2W: diffuse z_w, predict with condition z_s; W2G: diffuse z_l, predict
/// with condition z_w of the labeled image. Reconstructions come from
/// predict_z0 and are compared to the clean latents.
LatentLosses lfr_train_losses(const NoisePredictor& denoiser, const torch::Tensor& z_s, const torch::Tensor& z_w,
                              const torch::Tensor& z_w_labeled, const torch::Tensor& z_l, const torch::Tensor& feats_u,
                              const torch::Tensor& feats_l, const NoiseSchedule& s, const DiffusionDraws& draws);

/// Rectified labels for weak pseudo labels (no gradient). DiffRect samples
/// the full reverse chain conditioned on the tau = 1 embedding; LccOnly
/// decodes that embedding directly.
std::vector<LabelMask> rectify(TrainState& state, std::span<const LabelMask> y_w, const torch::Tensor& feats, Rng& rng);

/// Randomness of one iteration, drawn up front so the loss is a fixed
/// function of the parameters.
struct IterationDraws {
  std::vector<WeakParams> labeled_weak;
  std::vector<WeakParams> unlabeled_weak;
  std::vector<StrongParams> unlabeled_strong;
  std::uint64_t guidance_seed = 0;
  std::uint64_t diffusion_seed = 0;
  std::uint64_t sampler_seed = 0;
};

IterationDraws draw_iteration(TrainState& state, std::size_t n_labeled, std::size_t n_unlabeled);

struct IterationGraph {
  torch::Tensor total;
  LossParts parts;
  LossBreakdown breakdown;
};

/// Forward pass of one iteration (no optimiser step).
IterationGraph build_iteration(TrainState& state, std::span<const Sample> labeled, std::span<const Sample> unlabeled,
                               const IterationDraws& draws);

/// One joint optimiser step on every component.
LossBreakdown train_iteration(TrainState& state, std::span<const Sample> labeled, std::span<const Sample> unlabeled);

/// Inference path: segmentation network only.
MetricsReport evaluate(Networks& nets, std::span<const Sample> ds);
std::vector<LabelMask> predict(Networks& nets, std::span<const Image> images);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path);

struct FitOptions {
  bool resume = false;
  std::optional<std::int64_t> stop_after;  // halt (and checkpoint) early at this iteration
  bool quiet = true;
};

struct FitResult {
  double best_dice = 0.0;
  std::int64_t best_iteration = 0;
  MetricsReport final_report;
};

/// Full training run. Writes config.json, losses.csv, metrics.csv,
/// last.ckpt and best.ckpt into out_dir.
FitResult fit(const TrainConfig& cfg, const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
              const FitOptions& options = {});

}  // namespace diffrect

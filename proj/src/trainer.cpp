// SPDX-License-Identifier: Apache-2.0
#include "diffrect/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "diffrect/errors.hpp"
#include "diffrect/tensor_ops.hpp"

namespace diffrect {

namespace fs = std::filesystem;
using nlohmann::json;

Variant parse_variant(std::string_view name) {
  if (name == "baseline") return Variant::Baseline;
  if (name == "lcc") return Variant::LccOnly;
  if (name == "diffrect") return Variant::DiffRect;
  throw ContractViolation("unknown variant '" + std::string(name) + "' (expected baseline|lcc|diffrect)");
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::LccOnly: return "lcc";
    case Variant::DiffRect: return "diffrect";
  }
  return "?";
}

void TrainConfig::validate() const {
  require(iterations > 0, "TrainConfig: iterations must be positive");
  require(labeled_bs > 0 && unlabeled_bs > 0, "TrainConfig: batch sizes must be positive");
  require(learning_rate > 0 && std::isfinite(learning_rate), "TrainConfig: learning rate must be positive");
  require(momentum >= 0 && momentum < 1, "TrainConfig: momentum must be in [0, 1)");
  require(weight_decay >= 0, "TrainConfig: weight decay must be non-negative");
  require(poly_power >= 0, "TrainConfig: poly power must be non-negative");
  require(diffusion_steps > 0, "TrainConfig: T must be positive");
  require(weights.lambda1 >= 0 && weights.lambda2 >= 0, "TrainConfig: lambdas must be non-negative");
  require(weights.pseudo_threshold >= 0 && weights.pseudo_threshold <= 1,
          "TrainConfig: pseudo-label threshold must be in [0, 1]");
  require(rectify_every > 0, "TrainConfig: rectify stride must be positive");
  require(eval_every > 0, "TrainConfig: eval interval must be positive");
  require(labeled_ratio > 0 && labeled_ratio <= 1, "TrainConfig: labeled ratio must be in (0, 1]");
  model.validate();
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"iterations", c.iterations},
           {"labeled_bs", c.labeled_bs},
           {"unlabeled_bs", c.unlabeled_bs},
           {"learning_rate", c.learning_rate},
           {"momentum", c.momentum},
           {"weight_decay", c.weight_decay},
           {"poly_power", c.poly_power},
           {"T", c.diffusion_steps},
           {"lambda1", c.weights.lambda1},
           {"lambda2", c.weights.lambda2},
           {"pseudo_threshold", c.weights.pseudo_threshold},
           {"guidance", std::string(to_string(c.guidance.kind))},
           {"guidance_fixed", c.guidance.fixed_value},
           {"variant", std::string(to_string(c.variant))},
           {"rectify_every", c.rectify_every},
           {"eval_every", c.eval_every},
           {"seed", c.seed},
           {"labeled_ratio", c.labeled_ratio},
           {"model", c.model},
           {"perturb", c.perturb}};
}

void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.iterations = j.value("iterations", d.iterations);
  c.labeled_bs = j.value("labeled_bs", d.labeled_bs);
  c.unlabeled_bs = j.value("unlabeled_bs", d.unlabeled_bs);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.momentum = j.value("momentum", d.momentum);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.poly_power = j.value("poly_power", d.poly_power);
  c.diffusion_steps = j.value("T", d.diffusion_steps);
  c.weights.lambda1 = j.value("lambda1", d.weights.lambda1);
  c.weights.lambda2 = j.value("lambda2", d.weights.lambda2);
  c.weights.pseudo_threshold = j.value("pseudo_threshold", d.weights.pseudo_threshold);
  c.guidance.kind = parse_guidance_kind(j.value("guidance", std::string("dice")));
  c.guidance.fixed_value = j.value("guidance_fixed", d.guidance.fixed_value);
  c.variant = parse_variant(j.value("variant", std::string("diffrect")));
  c.rectify_every = j.value("rectify_every", d.rectify_every);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.seed = j.value("seed", d.seed);
  c.labeled_ratio = j.value("labeled_ratio", d.labeled_ratio);
  c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
  c.perturb = j.contains("perturb") ? j.at("perturb").get<PerturbSpec>() : d.perturb;
}

TrainState::TrainState(const TrainConfig& cfg) : config(cfg), rng(cfg.seed) {
  config.validate();
  schedule = make_cosine_schedule(config.diffusion_steps);
  colors = build_color_set(static_cast<int>(config.model.seg.num_classes));
  torch::manual_seed(config.seed);
  nets = Networks(config.model);
  optimizer = std::make_unique<torch::optim::SGD>(nets->parameters(),
                                                  torch::optim::SGDOptions(config.learning_rate)
                                                      .momentum(config.momentum)
                                                      .weight_decay(config.weight_decay));
}

namespace {

torch::Dtype dtype_of(Networks& nets) { return nets->parameters().front().scalar_type(); }

torch::Tensor tau_tensor(const std::vector<double>& tau, torch::Dtype dtype) {
  return torch::tensor(tau, torch::kFloat64).to(dtype);
}

PseudoLabels assemble(torch::Tensor weak_logits, torch::Tensor strong_logits, torch::Tensor feats) {
  PseudoLabels p;
  p.weak_probs = torch::softmax(weak_logits, 1).detach();
  p.weak = argmax_masks(p.weak_probs);
  p.strong = argmax_masks(strong_logits.detach());
  p.weak_logits = std::move(weak_logits);
  p.strong_logits = std::move(strong_logits);
  p.feats = feats.detach();
  return p;
}

LabelEmbedding embed_pair(TrainState& state, std::span<const LabelMask> first, std::span<const LabelMask> second,
                          const GuidanceMode& mode, Rng& rng, const char* op) {
  require(!first.empty() && first.size() == second.size(), std::string(op) + ": mask lists must match in length");
  LabelEmbedding e;
  for (std::size_t i = 0; i < first.size(); ++i) {
    require_same_shape(first[i], second[i], op);
    e.tau.push_back(calibration_guidance(second[i], first[i], mode, rng));
  }
  std::vector<LabelMask> both(first.begin(), first.end());
  both.insert(both.end(), second.begin(), second.end());
  std::vector<double> tau2 = e.tau;
  tau2.insert(tau2.end(), e.tau.begin(), e.tau.end());
  const auto dtype = dtype_of(state.nets);
  const auto z = state.nets->bsem->forward(semantic_input(both, state.colors, dtype), tau_tensor(tau2, dtype));
  const auto n = static_cast<int64_t>(first.size());
  e.first = z.narrow(0, 0, n);
  e.second = z.narrow(0, n, n);
  return e;
}

}  // namespace

namespace {

// The network regresses the clean latent o; the matching noise estimate is
// (z_t - sqrt(ab_t) o) / sqrt(1 - ab_t), so predict_z0 hands back o.
torch::Tensor as_noise(const torch::Tensor& z_t, const torch::Tensor& o, std::span<const int> t,
                       const NoiseSchedule& s) {
  std::vector<double> a, b;
  for (int step : t) {
    s.check_step(step);
    a.push_back(std::sqrt(s.alpha_bar_at(step)));
    b.push_back(1.0 / std::sqrt(1.0 - s.alpha_bar_at(step)));
  }
  const auto shape = std::vector<int64_t>{static_cast<int64_t>(t.size()), 1, 1, 1};
  const auto ta = torch::tensor(a, torch::kFloat64).to(z_t.scalar_type()).view(shape);
  const auto tb = torch::tensor(b, torch::kFloat64).to(z_t.scalar_type()).view(shape);
  return (z_t - ta * o) * tb;
}

}  // namespace

NoisePredictor noise_predictor(Networks& nets, const NoiseSchedule& s) {
  return [&nets, &s](const torch::Tensor& z_t, std::span<const int> t, const torch::Tensor& cond,
                     const torch::Tensor& feats) {
    std::vector<int64_t> steps(t.begin(), t.end());
    const auto o = nets->denoiser->forward(z_t, torch::tensor(steps, torch::kInt64), cond, feats);
    return as_noise(z_t, o, t, s);
  };
}

ConditionalDenoiser stepwise_denoiser(Networks& nets, const NoiseSchedule& s) {
  return [&nets, &s](const torch::Tensor& z_t, int t, const torch::Tensor& cond, const torch::Tensor& feats) {
    const auto o = nets->denoiser->forward(z_t, torch::full({z_t.size(0)}, t, torch::kInt64), cond, feats);
    const std::vector<int> steps(static_cast<std::size_t>(z_t.size(0)), t);
    return as_noise(z_t, o, steps, s);
  };
}

SegResult seg_forward(Networks& nets, const torch::Tensor& images) {
  auto out = nets->seg->forward(images);
  auto feats = image_feature_bundle(out, nets->config().latent_size());
  return {std::move(out.logits), std::move(feats)};
}

PseudoLabels pseudo_labels(TrainState& state, std::span<const Image> images, Rng& rng) {
  std::vector<WeakParams> weak;
  std::vector<StrongParams> strong;
  for (std::size_t i = 0; i < images.size(); ++i) {
    weak.push_back(sample_weak(state.config.perturb, rng));
    strong.push_back(sample_strong(state.config.perturb, rng));
  }
  return pseudo_labels(state, images, weak, strong);
}

PseudoLabels pseudo_labels(TrainState& state, std::span<const Image> images, std::span<const WeakParams> weak,
                           std::span<const StrongParams> strong) {
  require(!images.empty(), "pseudo_labels: empty batch");
  require(weak.size() == images.size() && strong.size() == images.size(),
          "pseudo_labels: one perturbation per image");
  std::vector<Image> views;
  for (std::size_t i = 0; i < images.size(); ++i) views.push_back(apply_weak(images[i], weak[i]));
  for (std::size_t i = 0; i < images.size(); ++i) views.push_back(apply_strong(views[i], strong[i]));
  const auto n = static_cast<int64_t>(images.size());
  auto r = seg_forward(state.nets, to_tensor(views, dtype_of(state.nets)));
  return assemble(r.logits.narrow(0, 0, n), r.logits.narrow(0, n, n), r.feats.narrow(0, 0, n));
}

LabelEmbedding lcc_embed_unlabeled(TrainState& state, std::span<const LabelMask> y_s, std::span<const LabelMask> y_w,
                                   const GuidanceMode& mode, Rng& rng) {
  return embed_pair(state, y_s, y_w, mode, rng, "lcc_embed_unlabeled");
}

LabelEmbedding lcc_embed_labeled(TrainState& state, std::span<const LabelMask> y_w, std::span<const LabelMask> y_l,
                                 const GuidanceMode& mode, Rng& rng) {
  return embed_pair(state, y_w, y_l, mode, rng, "lcc_embed_labeled");
}

DiffusionDraws draw_diffusion(const NoiseSchedule& s, const torch::Tensor& z_u, const torch::Tensor& z_l, Rng& rng) {
  DiffusionDraws d;
  for (int64_t i = 0; i < z_u.size(0); ++i) d.t_u.push_back(static_cast<int>(rng.uniform_int(1, s.steps)));
  for (int64_t i = 0; i < z_l.size(0); ++i) d.t_l.push_back(static_cast<int>(rng.uniform_int(1, s.steps)));
  d.eta_u = normal_tensor(z_u.sizes(), rng, z_u.scalar_type());
  d.eta_l = normal_tensor(z_l.sizes(), rng, z_l.scalar_type());
  return d;
}

LatentLosses lfr_train_losses(const NoisePredictor& denoiser, const torch::Tensor& z_s, const torch::Tensor& z_w,
                              const torch::Tensor& z_w_labeled, const torch::Tensor& z_l, const torch::Tensor& feats_u,
                              const torch::Tensor& feats_l, const NoiseSchedule& s, const DiffusionDraws& draws) {
  require(z_s.sizes().equals(z_w.sizes()), "lfr_train_losses: z_s and z_w differ in shape");
  require(z_w_labeled.sizes().equals(z_l.sizes()), "lfr_train_losses: labeled latents differ in shape");
  const auto nu = z_w.size(0);
  const auto nl = z_l.size(0);
  const auto zt_u = q_sample(z_w, draws.t_u, draws.eta_u, s);
  const auto zt_l = q_sample(z_l, draws.t_l, draws.eta_l, s);
  // S2W and W2G share the denoiser; one batched call covers both.
  std::vector<int> t(draws.t_u);
  t.insert(t.end(), draws.t_l.begin(), draws.t_l.end());
  const auto eps =
      denoiser(torch::cat({zt_u, zt_l}), t, torch::cat({z_s, z_w_labeled}), torch::cat({feats_u, feats_l}));
  LatentLosses out;
  out.r_w = predict_z0(zt_u, draws.t_u, eps.narrow(0, 0, nu), s);
  out.r_l = predict_z0(zt_l, draws.t_l, eps.narrow(0, nu, nl), s);
  out.lat_u = latent_loss(z_w, out.r_w);
  out.lat_l = latent_loss(z_l, out.r_l);
  return out;
}

std::vector<LabelMask> rectify(TrainState& state, std::span<const LabelMask> y_w, const torch::Tensor& feats, Rng& rng) {
  require(!y_w.empty(), "rectify: empty batch");
  torch::NoGradGuard no_grad;
  const auto dtype = dtype_of(state.nets);
  const auto n = static_cast<int64_t>(y_w.size());
  const auto z_w = state.nets->bsem->forward(semantic_input(y_w, state.colors, dtype), torch::ones({n}, dtype));
  torch::Tensor logits;
  if (state.config.variant == Variant::LccOnly) {
    logits = state.nets->decoder->forward(z_w);
  } else {
    const auto r = sample_loop(stepwise_denoiser(state.nets, state.schedule), z_w, feats.detach(), state.schedule, rng);
    logits = state.nets->decoder->forward(r);
  }
  return argmax_masks(logits);
}

IterationDraws draw_iteration(TrainState& state, std::size_t n_labeled, std::size_t n_unlabeled) {
  IterationDraws d;
  const auto& spec = state.config.perturb;
  for (std::size_t i = 0; i < n_labeled; ++i) d.labeled_weak.push_back(sample_weak(spec, state.rng));
  for (std::size_t i = 0; i < n_unlabeled; ++i) {
    d.unlabeled_weak.push_back(sample_weak(spec, state.rng));
    d.unlabeled_strong.push_back(sample_strong(spec, state.rng));
  }
  d.guidance_seed = state.rng.next_u64();
  d.diffusion_seed = state.rng.next_u64();
  d.sampler_seed = state.rng.next_u64();
  return d;
}

IterationGraph build_iteration(TrainState& state, std::span<const Sample> labeled, std::span<const Sample> unlabeled,
                               const IterationDraws& draws) {
  require(!labeled.empty() && !unlabeled.empty(), "train_iteration: batches must be nonempty");
  require(draws.labeled_weak.size() == labeled.size() && draws.unlabeled_weak.size() == unlabeled.size() &&
              draws.unlabeled_strong.size() == unlabeled.size(),
          "train_iteration: draws do not match the batch");
  const auto& cfg = state.config;
  auto& nets = state.nets;
  const auto dtype = dtype_of(nets);
  const auto nl = static_cast<int64_t>(labeled.size());
  const auto nu = static_cast<int64_t>(unlabeled.size());

  std::vector<Image> views;
  std::vector<LabelMask> y_l;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    views.push_back(apply_weak(labeled[i].image, draws.labeled_weak[i]));
    y_l.push_back(apply_weak(labeled[i].mask, draws.labeled_weak[i]));
  }
  for (std::size_t i = 0; i < unlabeled.size(); ++i)
    views.push_back(apply_weak(unlabeled[i].image, draws.unlabeled_weak[i]));
  for (std::size_t i = 0; i < unlabeled.size(); ++i)
    views.push_back(apply_strong(views[labeled.size() + i], draws.unlabeled_strong[i]));

  auto seg = seg_forward(nets, to_tensor(views, dtype));
  const auto logits_l = seg.logits.narrow(0, 0, nl);
  const auto feats_l = seg.feats.narrow(0, 0, nl).detach();
  auto pl = assemble(seg.logits.narrow(0, nl, nu), seg.logits.narrow(0, nl + nu, nu), seg.feats.narrow(0, nl, nu));
  const auto y_l_t = one_hot(y_l, dtype);

  const auto seg_semi = semi_seg_loss(logits_l, y_l_t, pl.strong_logits, pl.weak_probs, cfg.weights);
  const auto zero = torch::zeros({}, dtype);
  torch::Tensor rect = zero, lat_semi = zero, lat_u = zero, lat_l = zero;

  if (cfg.variant != Variant::Baseline) {
    const auto y_w_l = argmax_masks(logits_l.detach());
    Rng guidance_rng(draws.guidance_seed);
    const auto emb_u = lcc_embed_unlabeled(state, pl.strong, pl.weak, cfg.guidance, guidance_rng);
    const auto emb_l = lcc_embed_labeled(state, y_w_l, y_l, cfg.guidance, guidance_rng);

    torch::Tensor unlabeled_latent = emb_u.second;
    if (cfg.variant == Variant::DiffRect) {
      Rng diffusion_rng(draws.diffusion_seed);
      // The latent losses train the denoiser only. Left attached, they let
      // B_sem shrink every embedding towards one point, which zeroes both
      // losses and leaves nothing for the decoder to read.
      const auto dd = draw_diffusion(state.schedule, emb_u.second, emb_l.second, diffusion_rng);
      auto lat = lfr_train_losses(noise_predictor(nets, state.schedule), emb_u.first.detach(), emb_u.second.detach(),
                                  emb_l.first.detach(), emb_l.second.detach(), pl.feats, feats_l, state.schedule, dd);
      lat_u = lat.lat_u;
      lat_l = lat.lat_l;
      unlabeled_latent = lat.r_w;
    }
    const auto decoded = nets->decoder->forward(torch::cat({emb_l.second, unlabeled_latent}));
    lat_semi = semi_seg_loss(decoded.narrow(0, 0, nl), y_l_t, decoded.narrow(0, nl, nu), pl.weak_probs, cfg.weights);

    if (state.iteration % cfg.rectify_every == 0) {
      Rng sampler_rng(draws.sampler_seed);
      const auto y_r = rectify(state, pl.weak, pl.feats, sampler_rng);
      rect = rect_loss(pl.weak_logits, one_hot(y_r, dtype));
    }
  }

  IterationGraph g;
  const std::pair<const char*, const torch::Tensor*> terms[] = {
      {"seg_semi", &seg_semi}, {"rect", &rect}, {"lat_semi", &lat_semi}, {"lat_u", &lat_u}, {"lat_l", &lat_l}};
  double values[5];
  for (int i = 0; i < 5; ++i) {
    values[i] = terms[i].second->item<double>();
    if (!std::isfinite(values[i])) {
      std::ostringstream msg;
      msg << "train_iteration: non-finite " << terms[i].first << " loss at iteration " << state.iteration + 1;
      throw NonFiniteLoss(msg.str());
    }
  }
  g.parts = {values[0], values[1], values[2], values[3], values[4]};
  g.breakdown = total_loss(g.parts, cfg.weights);
  g.total = seg_semi + rect + lat_semi + cfg.weights.lambda1 * lat_u + cfg.weights.lambda2 * lat_l;
  return g;
}

LossBreakdown train_iteration(TrainState& state, std::span<const Sample> labeled, std::span<const Sample> unlabeled) {
  const auto draws = draw_iteration(state, labeled.size(), unlabeled.size());
  state.nets->train();
  auto g = build_iteration(state, labeled, unlabeled, draws);
  state.optimizer->zero_grad();
  g.total.backward();
  const double progress = static_cast<double>(state.iteration) / static_cast<double>(state.config.iterations);
  const double lr = state.config.learning_rate * std::pow(std::max(0.0, 1.0 - progress), state.config.poly_power);
  for (auto& group : state.optimizer->param_groups())
    static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
  state.optimizer->step();
  ++state.iteration;
  return g.breakdown;
}

std::vector<LabelMask> predict(Networks& nets, std::span<const Image> images) {
  torch::NoGradGuard no_grad;
  const bool was_training = nets->is_training();
  nets->eval();
  std::vector<LabelMask> out;
  constexpr std::size_t kChunk = 16;
  for (std::size_t i = 0; i < images.size(); i += kChunk) {
    const auto chunk = images.subspan(i, std::min(kChunk, images.size() - i));
    const auto logits = nets->seg->forward(to_tensor(chunk, dtype_of(nets))).logits;
    for (auto& m : argmax_masks(logits)) out.push_back(std::move(m));
  }
  if (was_training) nets->train();
  return out;
}

MetricsReport evaluate(Networks& nets, std::span<const Sample> ds) {
  require(!ds.empty(), "evaluate: empty dataset");
  std::vector<Image> images;
  for (const auto& s : ds) images.push_back(s.image);
  const auto preds = predict(nets, images);
  std::vector<MetricsReport> reports;
  for (std::size_t i = 0; i < ds.size(); ++i) reports.push_back(score_case(preds[i], ds[i].mask));
  return average_reports(reports);
}

namespace {

// Drops CSV rows whose leading iteration is beyond `iteration`.
void truncate_log(const fs::path& path, std::int64_t iteration) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot read log for resume");
  std::string line, kept;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      kept += line + "\n";
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) <= iteration) kept += line + "\n";
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path, "cannot rewrite log");
  out << kept;
}

std::ofstream open_log(const fs::path& path, bool append) {
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  if (!os) throw IoError(path, "cannot open for writing");
  return os;
}

}  // namespace

FitResult fit(const TrainConfig& cfg, const fs::path& data_dir, const fs::path& out_dir, const FitOptions& options) {
  const Dataset ds = load_dataset(data_dir);
  require(ds.meta.classes == cfg.model.seg.num_classes, "fit: dataset class count differs from the model");
  require(ds.meta.size == cfg.model.image_size, "fit: dataset image size differs from the model");
  require(!ds.val.empty(), "fit: dataset has no validation split");
  const auto split = split_labeled(ds.train, {cfg.labeled_ratio, cfg.seed});
  require(!split.unlabeled.empty(), "fit: no unlabeled training samples at this labeled ratio");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir, "cannot create output directory: " + ec.message());
  const auto last_path = out_dir / "last.ckpt";
  const auto best_path = out_dir / "best.ckpt";
  const auto losses_path = out_dir / "losses.csv";
  const auto metrics_path = out_dir / "metrics.csv";

  std::unique_ptr<TrainState> state;
  const bool resuming = options.resume && fs::exists(last_path);
  if (resuming) {
    state = load_checkpoint(last_path);
    state->config.iterations = cfg.iterations;
    truncate_log(losses_path, state->iteration);
    truncate_log(metrics_path, state->iteration);
  } else {
    state = std::make_unique<TrainState>(cfg);
    std::ofstream conf(out_dir / "config.json");
    if (!conf) throw IoError(out_dir / "config.json", "cannot open for writing");
    conf << json(cfg).dump(2) << "\n";
  }
  auto losses = open_log(losses_path, resuming);
  auto metrics = open_log(metrics_path, resuming);
  if (!resuming) {
    write_loss_header(losses);
    write_metrics_header(metrics, "iter");
  }

  FitResult result;
  const auto& tc = state->config;
  std::vector<Sample> lb(static_cast<std::size_t>(tc.labeled_bs)), ub(static_cast<std::size_t>(tc.unlabeled_bs));
  while (state->iteration < tc.iterations) {
    if (options.stop_after && state->iteration >= *options.stop_after) {
      save_checkpoint(*state, last_path);
      return result;
    }
    for (auto& s : lb)
      s = split.labeled[static_cast<std::size_t>(state->rng.uniform_int(0, std::ssize(split.labeled) - 1))];
    for (auto& s : ub)
      s = split.unlabeled[static_cast<std::size_t>(state->rng.uniform_int(0, std::ssize(split.unlabeled) - 1))];
    const auto b = train_iteration(*state, lb, ub);
    write_loss_row(losses, state->iteration, b);
    losses.flush();
    if (state->iteration % tc.eval_every == 0 || state->iteration == tc.iterations) {
      const auto report = evaluate(state->nets, ds.val);
      write_metrics_rows(metrics, std::to_string(state->iteration), report);
      metrics.flush();
      if (!options.quiet)
        std::cerr << "iter " << state->iteration << " loss " << b.total << " val dice " << report.dice_mean << "\n";
      if (report.dice_mean > state->best_dice) {
        state->best_dice = report.dice_mean;
        state->best_iteration = state->iteration;
        save_checkpoint(*state, best_path);
      }
      save_checkpoint(*state, last_path);
      result.final_report = report;
    }
  }
  if (!losses || !metrics) throw IoError(out_dir, "failed writing training logs");
  result.best_dice = state->best_dice;
  result.best_iteration = state->best_iteration;
  if (result.final_report.per_class.empty()) result.final_report = evaluate(state->nets, ds.val);
  return result;
}

}  // namespace diffrect

// SPDX-License-Identifier: Apache-2.0
#include "testing.hpp"

#include <fstream>

#include "diffrect/errors.hpp"
#include "diffrect/tensor_ops.hpp"
#include "diffrect/trainer.hpp"
#include "support.hpp"

using namespace diffrect;

namespace {

TrainConfig tiny_config(int classes = 3, std::uint64_t seed = 0) {
  TrainConfig cfg;
  cfg.model = testing::tiny_model(classes, 32);
  cfg.diffusion_steps = 5;
  cfg.iterations = 50;
  cfg.seed = seed;
  cfg.eval_every = 5;
  cfg.labeled_ratio = 0.25;
  return cfg;
}

std::vector<Sample> tiny_samples(int n, int classes = 3, std::uint64_t seed = 1) {
  return synth_generate(n, classes, 32, seed);
}

std::vector<Image> images_of(const std::vector<Sample>& s) {
  std::vector<Image> out;
  for (const auto& x : s) out.push_back(x.image);
  return out;
}

std::vector<LabelMask> masks_of(const std::vector<Sample>& s) {
  std::vector<LabelMask> out;
  for (const auto& x : s) out.push_back(x.mask);
  return out;
}

bool same_tensors(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!torch::equal(a[i], b[i])) return false;
  return true;
}

std::vector<torch::Tensor> all_state(Networks& nets) {
  std::vector<torch::Tensor> out;
  for (auto& p : nets->parameters()) out.push_back(p.detach().clone());
  for (auto& b : nets->buffers()) out.push_back(b.clone());
  return out;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("pseudo labels from an untrained net") {
    TrainState st(tiny_config());
    const auto ds = tiny_samples(3);
    Rng rng(1);
    const auto imgs = images_of(ds);
    const auto pl = pseudo_labels(st, imgs, rng);
    REQUIRE(pl.weak.size() == 3);
    for (const auto& m : pl.weak) {
      m.validate();
      CHECK(m.height == 32);
    }
    CHECK(pl.strong_logits.sizes() == std::vector<int64_t>{3, 3, 32, 32});
    CHECK(pl.feats.sizes() == std::vector<int64_t>{3, 12, 4, 4});
    CHECK((argmax_masks(pl.weak_probs) == pl.weak));
  }

  TEST_CASE("identity perturbations reproduce the plain forward pass") {
    TrainState st(tiny_config());
    const auto imgs = images_of(tiny_samples(2));
    const std::vector<WeakParams> weak(2);
    const std::vector<StrongParams> strong(2);
    const auto pl = pseudo_labels(st, imgs, weak, strong);
    const auto plain = seg_forward(st.nets, to_tensor(imgs)).logits;
    CHECK((pl.weak_logits - plain).abs().max().item<double>() < 1e-5);
    CHECK((pl.strong_logits - plain).abs().max().item<double>() < 1e-5);
  }

  TEST_CASE("label context embedding and guidance") {
    TrainState st(tiny_config());
    const auto ds = tiny_samples(2);
    const auto y = masks_of(ds);
    Rng rng(0);
    const auto same = lcc_embed_unlabeled(st, y, y, {GuidanceKind::Dice}, rng);
    CHECK(same.tau == std::vector<double>{1.0, 1.0});
    CHECK(same.first.sizes() == std::vector<int64_t>{2, 8, 4, 4});
    CHECK(same.second.sizes() == same.first.sizes());

    std::vector<LabelMask> empty{LabelMask(32, 32, 3), LabelMask(32, 32, 3)};
    CHECK(lcc_embed_unlabeled(st, empty, y, {GuidanceKind::Dice}, rng).tau == std::vector<double>{0.0, 0.0});

    Rng mrng(3);
    std::vector<LabelMask> noisy{testing::random_mask(32, 32, 3, mrng), testing::random_mask(32, 32, 3, mrng)};
    const auto lab = lcc_embed_labeled(st, noisy, y, {GuidanceKind::Dice}, rng);
    for (std::size_t i = 0; i < 2; ++i) {
      double acc = 0;
      for (int c = 1; c < 3; ++c) acc += testing::brute_overlap(noisy[i], y[i], c).dice;
      CHECK(lab.tau[i] == doctest::Approx(acc / 2).epsilon(1e-12));
    }
  }

  TEST_CASE("latent losses vanish with the true noise at t = 1") {
    const auto s = make_cosine_schedule(10);
    Rng rng(2);
    const auto z_w = normal_tensor({2, 8, 4, 4}, rng, torch::kFloat64);
    const auto z_l = normal_tensor({2, 8, 4, 4}, rng, torch::kFloat64);
    DiffusionDraws d{{1, 1}, {1, 1}, normal_tensor({2, 8, 4, 4}, rng, torch::kFloat64),
                     normal_tensor({2, 8, 4, 4}, rng, torch::kFloat64)};
    NoisePredictor oracle = [&](const torch::Tensor&, std::span<const int>, const torch::Tensor&,
                                const torch::Tensor&) { return torch::cat({d.eta_u, d.eta_l}); };
    const auto feats = torch::zeros({2, 3, 4, 4}, torch::kFloat64);
    const auto out = lfr_train_losses(oracle, z_w, z_w, z_l, z_l, feats, feats, s, d);
    CHECK(out.lat_u.item<double>() < 1e-6);
    CHECK(out.lat_l.item<double>() < 1e-6);
  }

  TEST_CASE("zero noise estimate at t = T gives the closed-form latent loss") {
    const auto s = make_cosine_schedule(10);
    Rng rng(3);
    const auto z_w = normal_tensor({2, 8, 4, 4}, rng, torch::kFloat64);
    const auto z_l = normal_tensor({2, 8, 4, 4}, rng, torch::kFloat64);
    DiffusionDraws d{{10, 10}, {10, 10}, normal_tensor({2, 8, 4, 4}, rng, torch::kFloat64),
                     normal_tensor({2, 8, 4, 4}, rng, torch::kFloat64)};
    NoisePredictor zero = [](const torch::Tensor& z, std::span<const int>, const torch::Tensor&,
                             const torch::Tensor&) { return torch::zeros_like(z); };
    const auto feats = torch::zeros({2, 3, 4, 4}, torch::kFloat64);
    const auto out = lfr_train_losses(zero, z_w, z_w, z_l, z_l, feats, feats, s, d);
    // r = z_t / sqrt(ab) = z + sqrt((1 - ab) / ab) eta, so the loss is (1 - ab) / ab * mean(eta^2).
    const double ab = s.alpha_bar_at(10);
    CHECK(out.lat_u.item<double>() == doctest::Approx((1 - ab) / ab * d.eta_u.pow(2).mean().item<double>()));
    CHECK(out.lat_l.item<double>() == doctest::Approx((1 - ab) / ab * d.eta_l.pow(2).mean().item<double>()));
  }

  TEST_CASE("the noise adapter hands the network's latent estimate back through predict_z0") {
    TrainState st(tiny_config());
    st.nets->to(torch::kFloat64);
    st.nets->eval();
    torch::NoGradGuard ng;
    Rng rng(4);
    const auto z = normal_tensor({2, 8, 4, 4}, rng, torch::kFloat64);
    const auto feats = normal_tensor({2, 12, 4, 4}, rng, torch::kFloat64);
    const std::vector<int> t{1, 5};
    const auto raw = st.nets->denoiser->forward(z, torch::tensor({1, 5}), z, feats);
    const auto eps = noise_predictor(st.nets, st.schedule)(z, t, z, feats);
    CHECK((predict_z0(z, t, eps, st.schedule) - raw).abs().max().item<double>() < 1e-9);
  }

  TEST_CASE("latent losses are finite for random networks") {
    TrainState st(tiny_config());
    Rng rng(5);
    const auto z = normal_tensor({2, 8, 4, 4}, rng);
    const auto feats = normal_tensor({2, 12, 4, 4}, rng);
    const auto d = draw_diffusion(st.schedule, z, z, rng);
    const auto out = lfr_train_losses(noise_predictor(st.nets, st.schedule), z, z, z, z, feats, feats, st.schedule, d);
    CHECK(std::isfinite(out.lat_u.item<double>()));
    CHECK(std::isfinite(out.lat_l.item<double>()));
  }

  TEST_CASE("rectify yields full-resolution labels, fixed by the seed") {
    TrainState st(tiny_config());
    const auto ds = tiny_samples(2);
    const auto y = masks_of(ds);
    const auto feats = torch::randn({2, 12, 4, 4});
    Rng a(7), b(7);
    const auto ya = rectify(st, y, feats, a);
    const auto yb = rectify(st, y, feats, b);
    REQUIRE(ya.size() == 2);
    for (const auto& m : ya) {
      m.validate();
      CHECK(m.height == 32);
      CHECK(m.classes == 3);
    }
    CHECK((ya == yb));
  }

  TEST_CASE("one iteration: breakdown sum and counter") {
    TrainState st(tiny_config());
    const auto ds = tiny_samples(4);
    const std::vector<Sample> lab(ds.begin(), ds.begin() + 2), unl(ds.begin() + 2, ds.end());
    const auto b = train_iteration(st, lab, unl);
    CHECK(st.iteration == 1);
    const auto& w = st.config.weights;
    CHECK(std::abs(b.total - (b.seg_semi + b.rect + b.lat_semi + w.lambda1 * b.lat_u + w.lambda2 * b.lat_l)) <= 1e-7);
    for (double v : {b.seg_semi, b.rect, b.lat_semi, b.lat_u, b.lat_l}) CHECK(v >= 0.0);
    CHECK(b.rect > 0.0);
    CHECK(b.lat_u > 0.0);
    CHECK_THROWS_AS(train_iteration(st, {}, unl), ContractViolation);
  }

  TEST_CASE("dead branches receive no gradient") {
    auto cfg = tiny_config();
    cfg.weights.lambda1 = cfg.weights.lambda2 = 0.0;
    cfg.weights.pseudo_threshold = 1.0;
    TrainState st(cfg);
    const auto ds = tiny_samples(4);
    const std::vector<Sample> lab(ds.begin(), ds.begin() + 2), unl(ds.begin() + 2, ds.end());
    const auto draws = draw_iteration(st, 2, 2);
    auto g = build_iteration(st, lab, unl, draws);
    st.optimizer->zero_grad();
    g.total.backward();
    auto grad_norm = [](torch::nn::Module& m) {
      double s = 0;
      for (auto& p : m.parameters())
        if (p.grad().defined()) s += p.grad().abs().sum().item<double>();
      return s;
    };
    CHECK(grad_norm(*st.nets->denoiser) == 0.0);
    CHECK(grad_norm(*st.nets->seg) > 0.0);
    CHECK(grad_norm(*st.nets->decoder) > 0.0);
  }

  TEST_CASE("baseline variant skips every rectification component") {
    auto cfg = tiny_config();
    cfg.variant = Variant::Baseline;
    TrainState st(cfg);
    const auto ds = tiny_samples(4);
    const std::vector<Sample> lab(ds.begin(), ds.begin() + 2), unl(ds.begin() + 2, ds.end());
    const auto b = train_iteration(st, lab, unl);
    CHECK(b.rect == 0.0);
    CHECK(b.lat_semi == 0.0);
    CHECK(b.lat_u == 0.0);
    CHECK(b.lat_l == 0.0);
    CHECK(st.nets->bsem->calls() == 0);
    CHECK(st.nets->denoiser->calls() == 0);
    CHECK(st.nets->decoder->calls() == 0);
  }

  TEST_CASE("lcc variant trains the embedding but never the denoiser") {
    auto cfg = tiny_config();
    cfg.variant = Variant::LccOnly;
    TrainState st(cfg);
    const auto ds = tiny_samples(4);
    const std::vector<Sample> lab(ds.begin(), ds.begin() + 2), unl(ds.begin() + 2, ds.end());
    const auto b = train_iteration(st, lab, unl);
    CHECK(b.rect > 0.0);
    CHECK(b.lat_u == 0.0);
    CHECK(st.nets->bsem->calls() > 0);
    CHECK(st.nets->denoiser->calls() == 0);
  }

  TEST_CASE("non-finite losses name the offending term") {
    TrainState st(tiny_config());
    {
      torch::NoGradGuard ng;
      st.nets->decoder->parameters().back().fill_(std::numeric_limits<float>::quiet_NaN());
    }
    const auto ds = tiny_samples(4);
    const std::vector<Sample> lab(ds.begin(), ds.begin() + 2), unl(ds.begin() + 2, ds.end());
    try {
      train_iteration(st, lab, unl);
      FAIL("expected NonFiniteLoss");
    } catch (const NonFiniteLoss& e) {
      CHECK(std::string(e.what()).find("lat_semi") != std::string::npos);
    }
  }

  TEST_CASE("total loss falls over a short run") {
    auto cfg = tiny_config();
    cfg.iterations = 200;
    TrainState st(cfg);
    const auto ds = tiny_samples(32, 3, 4);
    const auto split = split_labeled(ds, {0.25, 1});
    std::vector<double> totals;
    Rng pick(9);
    for (int it = 0; it < 200; ++it) {
      std::vector<Sample> lab, unl;
      for (int k = 0; k < 2; ++k) {
        lab.push_back(split.labeled[static_cast<std::size_t>(pick.uniform_int(0, std::ssize(split.labeled) - 1))]);
        unl.push_back(
            split.unlabeled[static_cast<std::size_t>(pick.uniform_int(0, std::ssize(split.unlabeled) - 1))]);
      }
      totals.push_back(train_iteration(st, lab, unl).total);
    }
    auto avg = [&](std::size_t from) {
      double s = 0;
      for (std::size_t i = from; i < from + 20; ++i) s += totals[i];
      return s / 20;
    };
    CHECK(avg(180) < avg(0));
  }

  TEST_CASE("evaluation touches only the segmentation network") {
    TrainState st(tiny_config());
    const auto ds = tiny_samples(5);
    const auto calls = [&] {
      return st.nets->bsem->calls() + st.nets->denoiser->calls() + st.nets->decoder->calls();
    };
    const auto before = calls();
    const auto r1 = evaluate(st.nets, ds);
    const auto r2 = evaluate(st.nets, ds);
    CHECK(calls() == before);
    CHECK(r1.per_class.size() == 2);
    CHECK(r1.dice_mean == r2.dice_mean);
    CHECK(r1.hd95 == r2.hd95);
    CHECK_THROWS_AS(evaluate(st.nets, std::span<const Sample>{}), ContractViolation);

    std::vector<MetricsReport> perfect;
    for (const auto& s : ds) perfect.push_back(score_case(s.mask, s.mask));
    CHECK(average_reports(perfect).dice_mean == 1.0);
  }

  TEST_CASE("checkpoint round trip is exact and training continues identically") {
    testing::TempDir dir("ckpt");
    TrainState st(tiny_config());
    const auto ds = tiny_samples(4);
    const std::vector<Sample> lab(ds.begin(), ds.begin() + 2), unl(ds.begin() + 2, ds.end());
    for (int i = 0; i < 3; ++i) train_iteration(st, lab, unl);
    st.best_dice = 0.25;
    save_checkpoint(st, dir / "a.ckpt");
    auto back = load_checkpoint(dir / "a.ckpt");
    CHECK(back->iteration == 3);
    CHECK((back->rng == st.rng));
    CHECK(back->best_dice == 0.25);
    CHECK(nlohmann::json(back->config) == nlohmann::json(st.config));
    CHECK(same_tensors(all_state(st.nets), all_state(back->nets)));
    // The archive carries a fresh serialization id per save, so compare contents, not bytes.
    save_checkpoint(*back, dir / "b.ckpt");
    auto again = load_checkpoint(dir / "b.ckpt");
    CHECK(same_tensors(all_state(st.nets), all_state(again->nets)));
    CHECK(again->iteration == 3);
    CHECK((again->rng == st.rng));
    for (int i = 0; i < 2; ++i) {
      const auto x = train_iteration(st, lab, unl);
      const auto y = train_iteration(*back, lab, unl);
      CHECK(x.total == y.total);
      CHECK(x.lat_l == y.lat_l);
    }
    CHECK(same_tensors(all_state(st.nets), all_state(back->nets)));
  }

  TEST_CASE("checkpoint errors carry the path") {
    testing::TempDir dir("ckpt_err");
    CHECK_THROWS_AS(load_checkpoint(dir / "none.ckpt"), IoError);
    std::ofstream(dir / "junk.ckpt") << "junk";
    try {
      load_checkpoint(dir / "junk.ckpt");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("junk.ckpt") != std::string::npos);
    }
  }

  TEST_CASE("config json round trip and validation") {
    auto cfg = tiny_config();
    cfg.guidance = {GuidanceKind::Fixed, 0.5};
    cfg.variant = Variant::LccOnly;
    const nlohmann::json j = cfg;
    const auto back = j.get<TrainConfig>();
    CHECK(nlohmann::json(back) == j);
    cfg.iterations = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractViolation);
    CHECK_THROWS_AS(parse_variant("full"), ContractViolation);
  }

  TEST_CASE("fit writes logs and checkpoints, and resumes on the same trajectory") {
    testing::TempDir data("fit_data"), full("fit_full"), part("fit_part");
    save_dataset(make_dataset(tiny_samples(16), 3, 32, 1, 0.25), data.path());
    auto cfg = tiny_config();
    cfg.iterations = 12;
    cfg.eval_every = 4;
    const auto r = fit(cfg, data.path(), full.path());
    for (const char* f : {"best.ckpt", "last.ckpt", "losses.csv", "metrics.csv", "config.json"})
      CHECK(std::filesystem::exists(full / f));
    CHECK(r.best_iteration > 0);

    FitOptions stop;
    stop.stop_after = 6;
    fit(cfg, data.path(), part.path(), stop);
    FitOptions resume;
    resume.resume = true;
    fit(cfg, data.path(), part.path(), resume);
    CHECK(testing::read_file(full / "losses.csv") == testing::read_file(part / "losses.csv"));
    CHECK(testing::read_file(full / "metrics.csv") == testing::read_file(part / "metrics.csv"));

    testing::TempDir again("fit_again");
    fit(cfg, data.path(), again.path());
    CHECK(testing::read_file(full / "losses.csv") == testing::read_file(again / "losses.csv"));

    CHECK_THROWS_AS(fit(cfg, data / "missing", full / "x"), IoError);
  }
}

// SPDX-License-Identifier: Apache-2.0
#include "diffrect/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "diffrect/data.hpp"
#include "diffrect/errors.hpp"
#include "diffrect/metrics.hpp"
#include "diffrect/plot.hpp"
#include "diffrect/tensor_ops.hpp"
#include "diffrect/trainer.hpp"

namespace diffrect::cli {

namespace fs = std::filesystem;

namespace {

struct SynthArgs {
  int n = 64, classes = 4, size = 64;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  double spread = SynthConfig{}.class_spread;
  std::string out;
};

struct TrainArgs {
  std::string data, out;
  TrainConfig cfg;
  std::string guidance = "dice", variant = "diffrect";
  bool resume = false, verbose = false;
};

struct EvalArgs {
  std::string ckpt, data, out, split = "val";
};

struct RectifyArgs {
  std::string ckpt, image, mask, out;
  std::uint64_t seed = 0;
};

struct SampleArgs {
  std::string ckpt, image, out;
  int n = 4;
  std::uint64_t seed = 0;
};

struct PlotArgs {
  std::string run, out;
};

std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthConfig sc;
  sc.count = a.n;
  sc.classes = a.classes;
  sc.size = a.size;
  sc.seed = a.seed;
  sc.class_spread = a.spread;
  require(a.n > 0, "synth: --n must be positive");
  auto samples = synth_generate(sc);
  const auto ds = make_dataset(std::move(samples), a.classes, a.size, a.seed, a.val_fraction);
  save_dataset(ds, a.out);
  out << "wrote " << ds.train.size() + ds.val.size() << " samples (" << ds.train.size() << " train, "
      << ds.val.size() << " val) to " << a.out << "\n";
}

void cmd_train(TrainArgs a, std::ostream& out) {
  if (!fs::is_directory(a.data)) throw IoError(a.data, "data directory not found");
  require(a.cfg.labeled_ratio > 0 && a.cfg.labeled_ratio <= 1, "train: --labeled-ratio must be in (0, 1]");
  a.cfg.guidance.kind = parse_guidance_kind(a.guidance);
  a.cfg.variant = parse_variant(a.variant);
  const auto meta = load_dataset(a.data).meta;
  a.cfg.model.seg.num_classes = meta.classes;
  a.cfg.model.image_size = meta.size;
  FitOptions opts;
  opts.resume = a.resume;
  opts.quiet = !a.verbose;
  const auto r = fit(a.cfg, a.data, a.out, opts);
  out << "best dice " << fmt4(r.best_dice) << " at iteration " << r.best_iteration << "\n";
}

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto state = load_checkpoint(a.ckpt);
  const auto ds = load_dataset(a.data);
  std::vector<Sample> items;
  if (a.split == "val" || a.split == "all") items.insert(items.end(), ds.val.begin(), ds.val.end());
  if (a.split == "train" || a.split == "all") items.insert(items.end(), ds.train.begin(), ds.train.end());
  require(a.split == "val" || a.split == "train" || a.split == "all", "eval: --split must be val|train|all");
  require(!items.empty(), "eval: dataset split is empty");
  require(ds.meta.classes == state->config.model.seg.num_classes, "eval: class count differs from checkpoint");
  const auto report = evaluate(state->nets, items);
  if (!a.out.empty()) {
    std::error_code ec;
    fs::create_directories(a.out, ec);
    const auto path = fs::path(a.out) / "metrics.csv";
    std::ofstream os(path);
    if (!os) throw IoError(path, "cannot open for writing");
    write_metrics_header(os);
    write_metrics_rows(os, "all", report);
  }
  out << "dice jaccard hd95 asd\n"
      << fmt4(report.dice_mean) << ' ' << fmt4(report.jaccard_mean) << ' ' << fmt4(report.hd95) << ' '
      << fmt4(report.asd) << "\n";
}

// Inference-mode weak prediction and encoder features for a single image.
std::pair<LabelMask, torch::Tensor> weak_prediction(TrainState& state, const Image& image) {
  require(image.height == state.config.model.image_size && image.width == state.config.model.image_size,
          "image size differs from the checkpoint");
  torch::NoGradGuard no_grad;
  state.nets->eval();
  std::vector<Image> one{image};
  auto r = seg_forward(state.nets, to_tensor(one));
  return {argmax_masks(r.logits).front(), r.feats};
}

void cmd_rectify(const RectifyArgs& a, std::ostream& out) {
  auto state = load_checkpoint(a.ckpt);
  const auto image = load_image(a.image);
  std::optional<LabelMask> truth;
  if (!a.mask.empty()) truth = load_mask(a.mask, state->colors);
  auto [y_w, feats] = weak_prediction(*state, image);
  Rng rng(a.seed);
  std::vector<LabelMask> weak{y_w};
  const auto y_r = rectify(*state, weak, feats, rng).front();
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError(a.out, "cannot create output directory: " + ec.message());
  save_mask(fs::path(a.out) / "y_w.png", y_w);
  save_mask(fs::path(a.out) / "y_r.png", y_r);
  if (truth) {
    require_same_shape(*truth, y_w, "rectify");
    out << "dice_weak " << fmt4(foreground_mean(dice(y_w, *truth))) << "\n";
    out << "dice_rectified " << fmt4(foreground_mean(dice(y_r, *truth))) << "\n";
  }
}

void cmd_sample(const SampleArgs& a, std::ostream& out) {
  require(a.n > 0, "sample: --n must be positive");
  auto state = load_checkpoint(a.ckpt);
  const auto image = load_image(a.image);
  auto [y_w, feats] = weak_prediction(*state, image);
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError(a.out, "cannot create output directory: " + ec.message());
  save_mask(fs::path(a.out) / "y_w.png", y_w);
  std::vector<LabelMask> weak{y_w};
  for (int k = 0; k < a.n; ++k) {
    Rng rng(a.seed + static_cast<std::uint64_t>(k));
    const auto y_r = rectify(*state, weak, feats, rng).front();
    char name[32];
    std::snprintf(name, sizeof name, "y_r_%03d.png", k);
    save_mask(fs::path(a.out) / name, y_r);
    out << name << " agreement_with_weak " << fmt4(foreground_mean(dice(y_r, y_w))) << "\n";
  }
  const auto sched_path = fs::path(a.out) / "schedule.csv";
  std::ofstream os(sched_path);
  if (!os) throw IoError(sched_path, "cannot open for writing");
  write_schedule_csv(os, state->schedule);
}

void cmd_plot(const PlotArgs& a, std::ostream& out) {
  const auto dest = a.out.empty() ? fs::path(a.run) : fs::path(a.out);
  try {
    plot_run(a.run, dest);
  } catch (const ParseError& e) {
    throw ContractViolation(e.what());
  }
  out << "wrote " << (dest / "loss.png").string() << " and " << (dest / "dice.png").string() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-supervised segmentation with diffusion-based label rectification", "diffrect"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic shape dataset");
  synth->add_option("--n", sa.n, "Number of samples")->capture_default_str();
  synth->add_option("--classes", sa.classes, "Classes including background")->capture_default_str();
  synth->add_option("--size", sa.size, "Image side length in pixels")->capture_default_str();
  synth->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  synth->add_option("--val-fraction", sa.val_fraction, "Fraction held out for validation")->capture_default_str();
  synth->add_option("--spread", sa.spread, "Intensity gap between background and brightest class")
      ->capture_default_str();
  synth->add_option("--out", sa.out, "Output dataset directory")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model on a dataset directory");
  train->add_option("--data", ta.data, "Dataset directory")->required();
  train->add_option("--out", ta.out, "Run directory")->required();
  train->add_option("--labeled-ratio", ta.cfg.labeled_ratio, "Fraction of training samples with labels")
      ->capture_default_str();
  train->add_option("--iters", ta.cfg.iterations, "Training iterations")->capture_default_str();
  train->add_option("--T", ta.cfg.diffusion_steps, "Diffusion steps")->capture_default_str();
  train->add_option("--guidance", ta.guidance, "Calibration guidance: dice|jaccard|fixed|random|both")
      ->capture_default_str();
  train->add_option("--guidance-value", ta.cfg.guidance.fixed_value, "Value used by --guidance fixed")
      ->capture_default_str();
  train->add_option("--lambda1", ta.cfg.weights.lambda1, "Weight of the strong-to-weak latent loss")
      ->capture_default_str();
  train->add_option("--lambda2", ta.cfg.weights.lambda2, "Weight of the weak-to-ground-truth latent loss")
      ->capture_default_str();
  train->add_option("--threshold", ta.cfg.weights.pseudo_threshold, "Pseudo-label confidence threshold")
      ->capture_default_str();
  train->add_option("--variant", ta.variant, "baseline|lcc|diffrect")->capture_default_str();
  train->add_option("--labeled-bs", ta.cfg.labeled_bs, "Labeled images per iteration")->capture_default_str();
  train->add_option("--unlabeled-bs", ta.cfg.unlabeled_bs, "Unlabeled images per iteration")
      ->capture_default_str();
  train->add_option("--lr", ta.cfg.learning_rate, "Base learning rate")->capture_default_str();
  train->add_option("--weight-decay", ta.cfg.weight_decay, "Weight decay")->capture_default_str();
  train->add_option("--eval-every", ta.cfg.eval_every, "Validation interval in iterations")->capture_default_str();
  train->add_option("--rectify-every", ta.cfg.rectify_every, "Rectification stride in iterations")
      ->capture_default_str();
  train->add_option("--seed", ta.cfg.seed, "Random seed")->capture_default_str();
  train->add_flag("--resume", ta.resume, "Continue from last.ckpt in the run directory");
  train->add_flag("--verbose", ta.verbose, "Print validation progress to stderr");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  eval->add_option("--ckpt", ea.ckpt, "Checkpoint file")->required();
  eval->add_option("--data", ea.data, "Dataset directory")->required();
  eval->add_option("--out", ea.out, "Directory for metrics.csv");
  eval->add_option("--split", ea.split, "val|train|all")->capture_default_str();

  RectifyArgs ra;
  auto* rect = app.add_subcommand("rectify", "Rectify the prediction for one image");
  rect->add_option("--ckpt", ra.ckpt, "Checkpoint file")->required();
  rect->add_option("--image", ra.image, "16-bit grayscale PNG")->required();
  rect->add_option("--mask", ra.mask, "Ground-truth mask PNG (optional)");
  rect->add_option("--out", ra.out, "Output directory for y_w.png and y_r.png")->required();
  rect->add_option("--seed", ra.seed, "Sampler seed")->capture_default_str();

  SampleArgs pa;
  auto* sample = app.add_subcommand("sample", "Draw several rectified labels for one image");
  sample->add_option("--ckpt", pa.ckpt, "Checkpoint file")->required();
  sample->add_option("--image", pa.image, "16-bit grayscale PNG")->required();
  sample->add_option("--n", pa.n, "Number of draws")->capture_default_str();
  sample->add_option("--out", pa.out, "Output directory")->required();
  sample->add_option("--seed", pa.seed, "First sampler seed; draw k uses seed + k")->capture_default_str();

  PlotArgs la;
  auto* plot = app.add_subcommand("plot", "Render loss and Dice curves of a run");
  plot->add_option("--run", la.run, "Run directory with losses.csv and metrics.csv")->required();
  plot->add_option("--out", la.out, "Output directory (default: the run directory)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kContract;
  }

  try {
    if (*synth) cmd_synth(sa, out);
    else if (*train) cmd_train(ta, out);
    else if (*eval) cmd_eval(ea, out);
    else if (*rect) cmd_rectify(ra, out);
    else if (*sample) cmd_sample(pa, out);
    else if (*plot) cmd_plot(la, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << "\n";
    return kContract;
  } catch (const NonFiniteLoss& e) {
    err << "error: " << e.what() << "\n";
    return kContract;
  }
  return kOk;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace diffrect::cli

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "diffrect/label_mask.hpp"
#include "diffrect/scs.hpp"

namespace diffrect {

enum class ShapeKind { Disk, Ring, Ellipse };

/// Placement of one foreground object. `radius` is the disk/ring outer radius
/// or the ellipse semi-major axis; `inner` is the ring hole radius or the
/// ellipse semi-minor axis.
struct ShapeGeometry {
  int cls = 0;
  ShapeKind kind = ShapeKind::Disk;
  double cy = 0, cx = 0;
  double radius = 0;
  double inner = 0;
  double angle = 0;

  bool contains(double y, double x) const;
  double area() const;
};

struct Sample {
  std::string id;
  Image image;
  LabelMask mask;
  std::vector<ShapeGeometry> shapes;  // generator output only; not persisted

  friend bool operator==(const Sample& a, const Sample& b) {
    return a.id == b.id && a.image == b.image && a.mask == b.mask;
  }
};

struct SynthConfig {
  int count = 64;
  int classes = 4;
  int size = 64;
  std::uint64_t seed = 0;
  double noise_sigma = 0.05;
  double bias_amplitude = 0.2;
  double intensity_jitter = 0.05;
  /// Distance between the darkest (background) and brightest class means.
  /// Small values leave shape as the main cue for telling classes apart.
  double class_spread = 0.6;
  double min_radius_frac = 0.10;  // of the image size
  double max_radius_frac = 0.20;
  int max_retries = 200;
};

/// Each sample carries one object per foreground class (disk, ring, ellipse,
/// cycled by class) on a noisy, unevenly lit background. Objects never
/// overlap. Samples are derived from per-index child streams, so sample i is
/// independent of how many others are generated.
std::vector<Sample> synth_generate(const SynthConfig& cfg);
std::vector<Sample> synth_generate(int n, int classes, int size, std::uint64_t seed);

struct SplitSpec {
  double labeled_ratio = 0.05;
  std::uint64_t seed = 0;
};

struct LabeledSplit {
  std::vector<Sample> labeled;
  std::vector<Sample> unlabeled;
};

/// Deterministic shuffle, then the first max(1, round(ratio N)) items are labeled.
LabeledSplit split_labeled(const std::vector<Sample>& ds, const SplitSpec& spec);
std::size_t labeled_count(std::size_t n, double ratio);

struct DatasetMeta {
  int classes = 0;
  int size = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> train;
  std::vector<std::string> val;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Sample> train;
  std::vector<Sample> val;
};

/// Deterministic train/validation partition of generated samples.
Dataset make_dataset(std::vector<Sample> samples, int classes, int size, std::uint64_t seed, double val_fraction);

/// Layout: images/<id>.png (16-bit gray), masks/<id>.png (palette = SCS colours), meta.json.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

void save_image(const std::filesystem::path& path, const Image& image);
Image load_image(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const LabelMask& mask);
/// Palette or RGB PNG; every colour must belong to `cs`.
LabelMask load_mask(const std::filesystem::path& path, const ColorSet& cs);

}  // namespace diffrect

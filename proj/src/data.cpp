// SPDX-License-Identifier: Apache-2.0
#include "diffrect/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "diffrect/errors.hpp"
#include "diffrect/png_io.hpp"
#include "diffrect/rng.hpp"

namespace diffrect {

namespace fs = std::filesystem;

bool ShapeGeometry::contains(double y, double x) const {
  const double dy = y - cy, dx = x - cx;
  switch (kind) {
    case ShapeKind::Disk: return dy * dy + dx * dx <= radius * radius;
    case ShapeKind::Ring: {
      const double r2 = dy * dy + dx * dx;
      return r2 <= radius * radius && r2 > inner * inner;
    }
    case ShapeKind::Ellipse: {
      const double c = std::cos(angle), s = std::sin(angle);
      const double u = c * dx + s * dy, v = -s * dx + c * dy;
      return (u * u) / (radius * radius) + (v * v) / (inner * inner) <= 1.0;
    }
  }
  return false;
}

double ShapeGeometry::area() const {
  switch (kind) {
    case ShapeKind::Disk: return std::numbers::pi * radius * radius;
    case ShapeKind::Ring: return std::numbers::pi * (radius * radius - inner * inner);
    case ShapeKind::Ellipse: return std::numbers::pi * radius * inner;
  }
  return 0.0;
}

namespace {

constexpr double kPlacementGap = 2.0;

std::string case_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%04d", i);
  return buf;
}

// One attempt at placing every object; empty result means "start over".
std::vector<ShapeGeometry> place_shapes(const SynthConfig& cfg, Rng& rng) {
  const double rmin = cfg.min_radius_frac * cfg.size, rmax = cfg.max_radius_frac * cfg.size;
  std::vector<ShapeGeometry> shapes;
  for (int cls = 1; cls < cfg.classes; ++cls) {
    ShapeGeometry g;
    g.cls = cls;
    g.kind = static_cast<ShapeKind>((cls - 1) % 3);
    g.radius = rng.uniform(rmin, rmax);
    if (g.kind == ShapeKind::Ring) g.inner = g.radius * rng.uniform(0.4, 0.6);
    if (g.kind == ShapeKind::Ellipse) {
      g.inner = std::max(rmin * 0.5, g.radius * rng.uniform(0.5, 0.8));
      g.angle = rng.uniform(0.0, std::numbers::pi);
    }
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      g.cy = rng.uniform(g.radius + 1.0, cfg.size - g.radius - 1.0);
      g.cx = rng.uniform(g.radius + 1.0, cfg.size - g.radius - 1.0);
      placed = std::all_of(shapes.begin(), shapes.end(), [&](const ShapeGeometry& o) {
        return std::hypot(o.cy - g.cy, o.cx - g.cx) >= o.radius + g.radius + kPlacementGap;
      });
    }
    if (!placed) return {};
    shapes.push_back(g);
  }
  return shapes;
}

Sample render(const SynthConfig& cfg, int index, Rng rng) {
  std::vector<ShapeGeometry> shapes;
  constexpr int kMaxRegenerations = 1000;
  for (int attempt = 0; shapes.empty(); ++attempt) {
    if (attempt == kMaxRegenerations)
      throw ContractViolation("synth_generate: cannot place " + std::to_string(cfg.classes - 1) +
                              " non-overlapping objects in a " + std::to_string(cfg.size) + " px image");
    shapes = place_shapes(cfg, rng);
  }

  // Per-class mean intensity, jittered per sample.
  std::vector<double> level(static_cast<std::size_t>(cfg.classes));
  for (int c = 0; c < cfg.classes; ++c)
    level[static_cast<std::size_t>(c)] =
        0.5 + cfg.class_spread * (static_cast<double>(c) / (cfg.classes - 1) - 0.5) + rng.uniform(-cfg.intensity_jitter, cfg.intensity_jitter);
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  Sample s;
  s.id = case_id(index);
  s.mask = LabelMask(cfg.size, cfg.size, cfg.classes);
  s.image = Image(cfg.size, cfg.size);
  for (int y = 0; y < cfg.size; ++y) {
    for (int x = 0; x < cfg.size; ++x) {
      const double py = y + 0.5, px = x + 0.5;
      int cls = 0;
      for (const auto& g : shapes)
        if (g.contains(py, px)) cls = g.cls;
      s.mask.at(y, x) = static_cast<std::uint8_t>(cls);
      const double u = px / cfg.size - 0.5, v = py / cfg.size - 0.5;
      const double bias = cfg.bias_amplitude * (std::cos(theta) * u + std::sin(theta) * v) +
                          0.25 * cfg.bias_amplitude * std::sin(2.0 * std::numbers::pi * u + phase);
      double value = level[static_cast<std::size_t>(cls)] + bias + cfg.noise_sigma * rng.normal();
      value = std::clamp(value, 0.0, 1.0);
      // Quantised to the 16-bit file precision so that save/load is lossless.
      s.image.at(y, x) = static_cast<float>(std::lround(value * 65535.0)) / 65535.0f;
    }
  }
  s.shapes = std::move(shapes);
  return s;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
  return idx;
}

}  // namespace

std::vector<Sample> synth_generate(const SynthConfig& cfg) {
  require(cfg.classes >= 2 && cfg.classes <= 64, "synth_generate: classes must be in [2, 64]");
  require(cfg.size >= 32, "synth_generate: size must be >= 32");
  require(cfg.count >= 1, "synth_generate: count must be positive");
  require(cfg.class_spread >= 0.0 && cfg.class_spread <= 1.0, "synth_generate: class spread must be in [0, 1]");
  require(cfg.min_radius_frac > 0 && cfg.min_radius_frac <= cfg.max_radius_frac && cfg.max_radius_frac < 0.5,
          "synth_generate: radius fractions must satisfy 0 < min <= max < 0.5");
  const Rng root(cfg.seed);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(cfg.count));
  for (int i = 0; i < cfg.count; ++i) out.push_back(render(cfg, i, root.derive(static_cast<std::uint64_t>(i))));
  return out;
}

std::vector<Sample> synth_generate(int n, int classes, int size, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.count = n;
  cfg.classes = classes;
  cfg.size = size;
  cfg.seed = seed;
  return synth_generate(cfg);
}

std::size_t labeled_count(std::size_t n, double ratio) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n))));
}

LabeledSplit split_labeled(const std::vector<Sample>& ds, const SplitSpec& spec) {
  require(!ds.empty(), "split_labeled: empty dataset");
  require(spec.labeled_ratio > 0.0 && spec.labeled_ratio <= 1.0, "split_labeled: ratio must be in (0, 1]");
  const auto idx = shuffled_indices(ds.size(), spec.seed);
  const auto k = std::min(labeled_count(ds.size(), spec.labeled_ratio), ds.size());
  LabeledSplit out;
  for (std::size_t i = 0; i < idx.size(); ++i) (i < k ? out.labeled : out.unlabeled).push_back(ds[idx[i]]);
  return out;
}

Dataset make_dataset(std::vector<Sample> samples, int classes, int size, std::uint64_t seed, double val_fraction) {
  require(val_fraction >= 0.0 && val_fraction < 1.0, "make_dataset: val fraction must be in [0, 1)");
  Dataset ds;
  ds.meta = {classes, size, seed, {}, {}};
  const auto idx = shuffled_indices(samples.size(), seed ^ 0x5eedULL);
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(samples.size())));
  std::vector<bool> is_val(samples.size(), false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[idx[i]] = true;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& bucket = is_val[i] ? ds.val : ds.train;
    auto& ids = is_val[i] ? ds.meta.val : ds.meta.train;
    ids.push_back(samples[i].id);
    bucket.push_back(std::move(samples[i]));
  }
  return ds;
}

void save_image(const fs::path& path, const Image& image) {
  png::Gray16 g{image.height, image.width, std::vector<std::uint16_t>(image.pixels.size())};
  for (std::size_t i = 0; i < g.pixels.size(); ++i)
    g.pixels[i] = static_cast<std::uint16_t>(std::lround(std::clamp(image.pixels[i], 0.0f, 1.0f) * 65535.0));
  png::write_gray16(path, g);
}

Image load_image(const fs::path& path) {
  const auto g = png::read_gray16(path);
  Image im(g.height, g.width);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) im.pixels[i] = static_cast<float>(g.pixels[i]) / 65535.0f;
  return im;
}

void save_mask(const fs::path& path, const LabelMask& mask) {
  const auto cs = build_color_set(mask.classes);
  png::write_indexed(path, {mask.height, mask.width, mask.labels, cs.colors});
}

LabelMask load_mask(const fs::path& path, const ColorSet& cs) {
  auto class_of = [&](const Rgb& c) -> int {
    for (int k = 0; k < cs.size(); ++k)
      if (cs.colors[static_cast<std::size_t>(k)] == c) return k;
    throw ParseError(path, "unknown palette colour (" + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," +
                               std::to_string(c[2]) + ")");
  };
  // Palette files are checked entry by entry; other colour types pixel by pixel.
  png::Indexed indexed;
  bool is_palette = true;
  try {
    indexed = png::read_indexed(path);
  } catch (const ParseError&) {
    is_palette = false;
  }
  if (is_palette) {
    std::vector<std::uint8_t> lut;
    for (const auto& c : indexed.palette) lut.push_back(static_cast<std::uint8_t>(class_of(c)));
    LabelMask m(indexed.height, indexed.width, cs.size());
    for (std::size_t i = 0; i < m.labels.size(); ++i) m.labels[i] = lut[indexed.indices[i]];
    return m;
  }
  const auto rgb = png::read_rgb8(path);
  LabelMask m(rgb.height, rgb.width, cs.size());
  for (std::size_t i = 0; i < m.labels.size(); ++i)
    m.labels[i] = static_cast<std::uint8_t>(class_of({rgb.rgb[3 * i], rgb.rgb[3 * i + 1], rgb.rgb[3 * i + 2]}));
  return m;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError(dir, "cannot create directory: " + ec.message());
  fs::create_directories(dir / "masks", ec);
  if (ec) throw IoError(dir, "cannot create directory: " + ec.message());
  for (const auto* part : {&ds.train, &ds.val}) {
    for (const auto& s : *part) {
      save_image(dir / "images" / (s.id + ".png"), s.image);
      save_mask(dir / "masks" / (s.id + ".png"), s.mask);
    }
  }
  nlohmann::json meta = {{"classes", ds.meta.classes}, {"size", ds.meta.size}, {"seed", ds.meta.seed},
                         {"train", ds.meta.train}, {"val", ds.meta.val}};
  nlohmann::json palette = nlohmann::json::array();
  for (const auto& c : build_color_set(ds.meta.classes).colors) palette.push_back({c[0], c[1], c[2]});
  meta["palette"] = palette;
  std::ofstream os(dir / "meta.json");
  if (!os) throw IoError(dir / "meta.json", "cannot open for writing");
  os << meta.dump(2) << '\n';
  if (!os) throw IoError(dir / "meta.json", "write failed");
}

Dataset load_dataset(const fs::path& dir) {
  const auto meta_path = dir / "meta.json";
  std::ifstream is(meta_path);
  if (!is) throw IoError(meta_path, "cannot open for reading");
  Dataset ds;
  try {
    const auto j = nlohmann::json::parse(is);
    ds.meta.classes = j.at("classes");
    ds.meta.size = j.at("size");
    ds.meta.seed = j.at("seed");
    ds.meta.train = j.at("train").get<std::vector<std::string>>();
    ds.meta.val = j.at("val").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_path, e.what());
  }
  if (ds.meta.classes < kMinClasses || ds.meta.classes > kMaxClasses) throw ParseError(meta_path, "class count out of range");
  const auto cs = build_color_set(ds.meta.classes);
  auto load_one = [&](const std::string& id) {
    Sample s;
    s.id = id;
    s.image = load_image(dir / "images" / (id + ".png"));
    s.mask = load_mask(dir / "masks" / (id + ".png"), cs);
    if (s.image.height != s.mask.height || s.image.width != s.mask.width)
      throw ParseError(dir / "masks" / (id + ".png"), "mask size differs from image size");
    return s;
  };
  for (const auto& id : ds.meta.train) ds.train.push_back(load_one(id));
  for (const auto& id : ds.meta.val) ds.val.push_back(load_one(id));
  return ds;
}

}  // namespace diffrect

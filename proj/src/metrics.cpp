// SPDX-License-Identifier: Apache-2.0
#include "diffrect/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "diffrect/errors.hpp"

namespace diffrect {

namespace {

struct Overlap {
  std::vector<std::int64_t> inter, count_a, count_b;
};

Overlap overlap(const LabelMask& a, const LabelMask& b, const char* op) {
  require_same_shape(a, b, op);
  const auto c = static_cast<std::size_t>(a.classes);
  Overlap o{std::vector<std::int64_t>(c, 0), std::vector<std::int64_t>(c, 0),
            std::vector<std::int64_t>(c, 0)};
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    const auto la = a.labels[i], lb = b.labels[i];
    if (la >= a.classes || lb >= b.classes) throw ContractViolation(std::string(op) + ": label out of range");
    ++o.count_a[la];
    ++o.count_b[lb];
    if (la == lb) ++o.inter[la];
  }
  return o;
}

constexpr double kFar = 1e20;

// Exact 1-D squared Euclidean distance transform (lower envelope of parabolas).
void edt_1d(std::span<const double> f, std::span<double> d, std::vector<int>& v,
            std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = v[static_cast<std::size_t>(k)];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
    const int p = v[static_cast<std::size_t>(k)];
    d[q] = double(q - p) * (q - p) + f[p];
  }
}

// Squared distance from every pixel to the nearest site.
std::vector<double> squared_distance_map(int h, int w, const std::vector<std::pair<int, int>>& sites) {
  std::vector<double> grid(static_cast<std::size_t>(h) * w, kFar);
  for (auto [y, x] : sites) grid[static_cast<std::size_t>(y) * w + x] = 0.0;
  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> line, out;
  line.resize(static_cast<std::size_t>(h));
  out.resize(static_cast<std::size_t>(std::max(h, w)));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) line[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(line, std::span<double>(out.data(), static_cast<std::size_t>(h)), v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = out[static_cast<std::size_t>(y)];
  }
  line.resize(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(y) * w, w, line.begin());
    edt_1d(line, std::span<double>(out.data(), static_cast<std::size_t>(w)), v, z);
    std::copy_n(out.begin(), w, grid.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  return grid;
}

std::vector<double> directed(const std::vector<std::pair<int, int>>& from,
                             const std::vector<double>& dist_to, int w) {
  std::vector<double> d;
  d.reserve(from.size());
  for (auto [y, x] : from) d.push_back(std::sqrt(dist_to[static_cast<std::size_t>(y) * w + x]));
  return d;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// numpy.percentile default (linear) interpolation.
double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + (v[hi] - v[lo]) * frac;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::vector<double> dice(const LabelMask& a, const LabelMask& b) {
  const auto o = overlap(a, b, "dice");
  std::vector<double> out(o.inter.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const auto denom = o.count_a[c] + o.count_b[c];
    out[c] = denom == 0 ? 1.0 : 2.0 * static_cast<double>(o.inter[c]) / static_cast<double>(denom);
  }
  return out;
}

std::vector<double> jaccard(const LabelMask& a, const LabelMask& b) {
  const auto o = overlap(a, b, "jaccard");
  std::vector<double> out(o.inter.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const auto uni = o.count_a[c] + o.count_b[c] - o.inter[c];
    out[c] = uni == 0 ? 1.0 : static_cast<double>(o.inter[c]) / static_cast<double>(uni);
  }
  return out;
}

double foreground_mean(std::span<const double> per_class) {
  require(per_class.size() >= 2, "foreground_mean: need at least one foreground class");
  double s = 0.0;
  for (std::size_t c = 1; c < per_class.size(); ++c) s += per_class[c];
  return s / static_cast<double>(per_class.size() - 1);
}

std::vector<std::pair<int, int>> boundary_pixels(const LabelMask& m) {
  std::vector<std::pair<int, int>> out;
  auto fg = [&](int y, int x) { return m.at(y, x) != 0; };
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!fg(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y == m.height - 1 || x == m.width - 1;
      if (edge || !fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1))
        out.emplace_back(y, x);
    }
  }
  return out;
}

std::optional<SurfaceDistances> surface_distances(const LabelMask& a, const LabelMask& b) {
  require(a.height == b.height && a.width == b.width, "surface_distances: shape mismatch");
  const auto ba = boundary_pixels(a);
  const auto bb = boundary_pixels(b);
  if (ba.empty() || bb.empty()) return std::nullopt;

  const auto to_b = squared_distance_map(a.height, a.width, bb);
  const auto to_a = squared_distance_map(a.height, a.width, ba);
  const auto d_ab = directed(ba, to_b, a.width);
  const auto d_ba = directed(bb, to_a, a.width);

  // Concatenate in a canonical order so the result is exactly symmetric.
  std::vector<double> all;
  all.reserve(d_ab.size() + d_ba.size());
  all.insert(all.end(), d_ab.begin(), d_ab.end());
  all.insert(all.end(), d_ba.begin(), d_ba.end());

  const double m1 = mean_of(d_ab), m2 = mean_of(d_ba);
  return SurfaceDistances{percentile(std::move(all), 95.0), 0.5 * std::min(m1, m2) + 0.5 * std::max(m1, m2)};
}

GuidanceKind parse_guidance_kind(std::string_view name) {
  if (name == "dice") return GuidanceKind::Dice;
  if (name == "jaccard") return GuidanceKind::Jaccard;
  if (name == "fixed") return GuidanceKind::Fixed;
  if (name == "random") return GuidanceKind::Random;
  if (name == "both") return GuidanceKind::Both;
  throw ContractViolation("unknown guidance mode '" + std::string(name) +
                          "' (expected dice|jaccard|fixed|random|both)");
}

std::string_view to_string(GuidanceKind kind) {
  switch (kind) {
    case GuidanceKind::Dice: return "dice";
    case GuidanceKind::Jaccard: return "jaccard";
    case GuidanceKind::Fixed: return "fixed";
    case GuidanceKind::Random: return "random";
    case GuidanceKind::Both: return "both";
  }
  return "dice";
}

double calibration_guidance(const LabelMask& hi, const LabelMask& lo, const GuidanceMode& mode,
                            Rng& rng) {
  require_same_shape(hi, lo, "calibration_guidance");
  switch (mode.kind) {
    case GuidanceKind::Dice: return foreground_mean(dice(hi, lo));
    case GuidanceKind::Jaccard: return foreground_mean(jaccard(hi, lo));
    case GuidanceKind::Fixed:
      require(mode.fixed_value >= 0.0 && mode.fixed_value <= 1.0,
              "calibration_guidance: fixed value must be in [0, 1]");
      return mode.fixed_value;
    case GuidanceKind::Random: return rng.uniform();
    case GuidanceKind::Both:
      return foreground_mean(dice(hi, lo)) + foreground_mean(jaccard(hi, lo));
  }
  return 0.0;
}

MetricsReport score_case(const LabelMask& prediction, const LabelMask& truth) {
  require_same_shape(prediction, truth, "score_case");
  require(truth.classes >= 2, "score_case: need at least one foreground class");
  const auto d = dice(prediction, truth);
  const auto j = jaccard(prediction, truth);
  const double diagonal = std::hypot(double(truth.height), double(truth.width));
  const auto pc = prediction.class_counts();
  const auto tc = truth.class_counts();

  MetricsReport r;
  for (int c = 1; c < truth.classes; ++c) {
    ClassMetrics m{c, d[static_cast<std::size_t>(c)], j[static_cast<std::size_t>(c)], 0.0, 0.0};
    const bool p_empty = pc[static_cast<std::size_t>(c)] == 0;
    const bool t_empty = tc[static_cast<std::size_t>(c)] == 0;
    if (p_empty != t_empty) {
      m.hd95 = m.asd = diagonal;
    } else if (!p_empty) {
      const auto sd = surface_distances(prediction.binary(c), truth.binary(c));
      m.hd95 = sd->hd95;
      m.asd = sd->asd;
    }
    r.per_class.push_back(m);
  }
  for (const auto& m : r.per_class) {
    r.dice_mean += m.dice;
    r.jaccard_mean += m.jaccard;
    r.hd95 += m.hd95;
    r.asd += m.asd;
  }
  const double n = static_cast<double>(r.per_class.size());
  r.dice_mean /= n;
  r.jaccard_mean /= n;
  r.hd95 /= n;
  r.asd /= n;
  return r;
}

MetricsReport average_reports(std::span<const MetricsReport> reports) {
  require(!reports.empty(), "average_reports: no reports");
  MetricsReport out;
  out.per_class = reports.front().per_class;
  for (auto& m : out.per_class) m.dice = m.jaccard = m.hd95 = m.asd = 0.0;
  for (const auto& r : reports) {
    require(r.per_class.size() == out.per_class.size(), "average_reports: class count mismatch");
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
      out.per_class[c].dice += r.per_class[c].dice;
      out.per_class[c].jaccard += r.per_class[c].jaccard;
      out.per_class[c].hd95 += r.per_class[c].hd95;
      out.per_class[c].asd += r.per_class[c].asd;
    }
  }
  const double n = static_cast<double>(reports.size());
  for (auto& m : out.per_class) {
    m.dice /= n;
    m.jaccard /= n;
    m.hd95 /= n;
    m.asd /= n;
    out.dice_mean += m.dice;
    out.jaccard_mean += m.jaccard;
    out.hd95 += m.hd95;
    out.asd += m.asd;
  }
  const double k = static_cast<double>(out.per_class.size());
  out.dice_mean /= k;
  out.jaccard_mean /= k;
  out.hd95 /= k;
  out.asd /= k;
  return out;
}

void write_metrics_header(std::ostream& os, std::string_view first_column) {
  os << first_column << ",class,dice,jaccard,hd95,asd\n";
}

void write_metrics_rows(std::ostream& os, std::string_view case_id, const MetricsReport& report) {
  for (const auto& m : report.per_class) {
    os << case_id << ',' << m.cls << ',' << fmt(m.dice) << ',' << fmt(m.jaccard) << ','
       << fmt(m.hd95) << ',' << fmt(m.asd) << '\n';
  }
  os << case_id << ",mean," << fmt(report.dice_mean) << ',' << fmt(report.jaccard_mean) << ','
     << fmt(report.hd95) << ',' << fmt(report.asd) << '\n';
}

}  // namespace diffrect

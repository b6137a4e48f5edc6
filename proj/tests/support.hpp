// SPDX-License-Identifier: Apache-2.0
// Reference implementations and helpers shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include <torch/torch.h>

#include "diffrect/label_mask.hpp"
#include "diffrect/nets.hpp"
#include "diffrect/rng.hpp"

namespace testing {

using diffrect::LabelMask;
using diffrect::Rng;

inline LabelMask random_mask(int h, int w, int classes, Rng& rng, double fg_prob = 0.5) {
  LabelMask m(h, w, classes);
  for (auto& v : m.labels)
    v = rng.uniform() < fg_prob ? static_cast<std::uint8_t>(rng.uniform_int(1, classes - 1)) : 0;
  return m;
}

// Blocky masks: a few random rectangles, closer to real segmentations than noise.
inline LabelMask blob_mask(int h, int w, int classes, Rng& rng) {
  LabelMask m(h, w, classes);
  const int n = static_cast<int>(rng.uniform_int(1, 4));
  for (int k = 0; k < n; ++k) {
    const int y0 = static_cast<int>(rng.uniform_int(0, h - 1)), x0 = static_cast<int>(rng.uniform_int(0, w - 1));
    const int y1 = static_cast<int>(rng.uniform_int(y0, h - 1)), x1 = static_cast<int>(rng.uniform_int(x0, w - 1));
    const auto c = static_cast<std::uint8_t>(rng.uniform_int(1, classes - 1));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) m.at(y, x) = c;
  }
  return m;
}

// Small network for gradient checks and fast trainer tests.
inline diffrect::ModelConfig tiny_model(int classes = 2, int size = 16) {
  diffrect::ModelConfig m;
  m.image_size = size;
  m.seg = {1, classes, 4, 2};
  m.embed.stages = 3;
  m.embed.base_width = 4;
  m.embed.out_channels = 8;
  m.embed.guidance_dim = 8;
  m.denoiser = {8, 1, 2, 8};
  m.decoder.base_width = 4;
  return m;
}

struct Overlap {
  double dice, jaccard;
};

inline Overlap brute_overlap(const LabelMask& a, const LabelMask& b, int cls) {
  long inter = 0, na = 0, nb = 0, uni = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      const bool pa = a.at(y, x) == cls, pb = b.at(y, x) == cls;
      inter += pa && pb;
      na += pa;
      nb += pb;
      uni += pa || pb;
    }
  if (na + nb == 0) return {1.0, 1.0};
  return {2.0 * inter / double(na + nb), double(inter) / double(uni)};
}

inline bool fg(const LabelMask& m, int y, int x) { return m.at(y, x) != 0; }

inline std::vector<std::pair<int, int>> brute_boundary(const LabelMask& m) {
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!fg(m, y, x)) continue;
      const bool edge = y == 0 || x == 0 || y == m.height - 1 || x == m.width - 1;
      const bool touches = !edge && (!fg(m, y - 1, x) || !fg(m, y + 1, x) || !fg(m, y, x - 1) || !fg(m, y, x + 1));
      if (edge || touches) out.emplace_back(y, x);
    }
  return out;
}

// Linear-interpolation percentile on the sorted sample (numpy default).
inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * double(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

struct BruteSurface {
  double hd95, asd;
};

// All-pairs boundary distances.
inline std::optional<BruteSurface> brute_surface(const LabelMask& a, const LabelMask& b) {
  const auto ba = brute_boundary(a), bb = brute_boundary(b);
  if (ba.empty() || bb.empty()) return std::nullopt;
  auto directed = [](const auto& from, const auto& to) {
    std::vector<double> d;
    for (auto [y, x] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (auto [v, u] : to) best = std::min(best, std::hypot(double(y - v), double(x - u)));
      d.push_back(best);
    }
    return d;
  };
  const auto dab = directed(ba, bb), dba = directed(bb, ba);
  std::vector<double> all(dab);
  all.insert(all.end(), dba.begin(), dba.end());
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
  };
  return BruteSurface{percentile(all, 95.0), 0.5 * (mean(dab) + mean(dba))};
}

struct GradCheck {
  int checked = 0;
  double max_rel_err = 0.0;
};

// Central differences on up to `max_entries` scalar entries spread over
// `params`, compared with autograd. Tensors must be float64 leaves.
inline GradCheck grad_check(const std::function<torch::Tensor()>& f, const std::vector<torch::Tensor>& params,
                            int max_entries, double h = 1e-6, double floor = 1e-6) {
  for (auto p : params)
    if (p.grad().defined()) p.mutable_grad().zero_();
  auto loss = f();
  loss.backward();
  std::vector<torch::Tensor> analytic;
  int64_t total = 0;
  for (const auto& p : params) {
    analytic.push_back(p.grad().defined() ? p.grad().clone() : torch::zeros_like(p));
    total += p.numel();
  }
  GradCheck r;
  const int64_t stride = std::max<int64_t>(1, total / max_entries);
  torch::NoGradGuard no_grad;
  int64_t flat = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].view(-1);
    auto g = analytic[k].view(-1);
    for (int64_t i = 0; i < p.numel(); ++i, ++flat) {
      if (flat % stride != 0 || r.checked >= max_entries) continue;
      const double orig = p[i].item<double>();
      p[i] = orig + h;
      const double up = f().item<double>();
      p[i] = orig - h;
      const double down = f().item<double>();
      p[i] = orig;
      const double num = (up - down) / (2 * h);
      const double ana = g[i].item<double>();
      const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), floor});
      r.max_rel_err = std::max(r.max_rel_err, rel);
      ++r.checked;
    }
  }
  return r;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("diffrect_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace diffrect {

// Portable random stream. std::mt19937_64 output is fixed by the standard, but
// the std distributions are not, so the variates are derived here by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], unbiased (rejection sampling).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Standard normal via Box-Muller. Consumes exactly two draws per call and
  /// keeps no cached spare, so the textual state fully describes the stream.
  double normal();

  void fill_normal(std::span<float> out);
  void fill_normal(std::span<double> out);

  /// Independent child stream; does not advance this stream.
  Rng derive(std::uint64_t stream) const;

  std::string state() const;
  void set_state(const std::string& text);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace diffrect

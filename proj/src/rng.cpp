// SPDX-License-Identifier: Apache-2.0
#include "diffrect/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "diffrect/errors.hpp"

namespace diffrect {

namespace {

// splitmix64 finalizer, used to decorrelate derived seeds.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  require(lo <= hi, "uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(engine_());
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t draw;
  do {
    draw = engine_();
  } while (draw >= limit);
  return lo + static_cast<std::int64_t>(draw % span);
}

double Rng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void Rng::fill_normal(std::span<float> out) {
  for (auto& v : out) v = static_cast<float>(normal());
}

void Rng::fill_normal(std::span<double> out) {
  for (auto& v : out) v = normal();
}

Rng Rng::derive(std::uint64_t stream) const {
  std::mt19937_64 copy = engine_;
  const std::uint64_t base = copy();
  return Rng(mix(base ^ mix(stream)));
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& text) {
  std::istringstream is(text);
  is >> engine_;
  if (is.fail()) throw ContractViolation("Rng::set_state: malformed state string");
}

}  // namespace diffrect

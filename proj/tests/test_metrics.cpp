// SPDX-License-Identifier: Apache-2.0
#include "testing.hpp"

#include <sstream>

#include "diffrect/errors.hpp"
#include "diffrect/metrics.hpp"
#include "support.hpp"

using namespace diffrect;
using testing::brute_overlap;
using testing::brute_surface;

TEST_SUITE("metrics") {
  TEST_CASE("dice and jaccard match pixel counting") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      const int c = static_cast<int>(rng.uniform_int(2, 5));
      const auto a = trial % 2 ? testing::random_mask(16, 16, c, rng) : testing::blob_mask(16, 16, c, rng);
      const auto b = testing::random_mask(16, 16, c, rng, rng.uniform());
      const auto d = dice(a, b), j = jaccard(a, b);
      REQUIRE(d.size() == static_cast<std::size_t>(c));
      for (int k = 0; k < c; ++k) {
        const auto o = brute_overlap(a, b, k);
        CHECK(std::abs(d[k] - o.dice) <= 1e-12);
        CHECK(std::abs(j[k] - o.jaccard) <= 1e-12);
        CHECK(std::abs(j[k] - d[k] / (2.0 - d[k])) <= 1e-12);
      }
    }
  }

  TEST_CASE("hand-counted overlap") {
    LabelMask a(2, 4, 2), b(2, 4, 2);
    a.labels = {1, 1, 1, 0, 0, 0, 0, 0};
    b.labels = {0, 1, 1, 1, 0, 0, 0, 0};
    CHECK(dice(a, b)[1] == doctest::Approx(4.0 / 6.0));
    CHECK(jaccard(a, b)[1] == doctest::Approx(0.5));
    CHECK(dice(a, b)[0] == doctest::Approx(2.0 * 4 / 10.0));
  }

  TEST_CASE("absent class scores one; shape mismatch is rejected") {
    LabelMask a(4, 4, 3), b(4, 4, 3);
    CHECK(dice(a, b)[2] == 1.0);
    CHECK(jaccard(a, b)[2] == 1.0);
    CHECK_THROWS_AS(dice(a, LabelMask(4, 5, 3)), ContractViolation);
    CHECK_THROWS_AS(dice(a, LabelMask(4, 4, 2)), ContractViolation);
  }

  TEST_CASE("boundary pixels match the neighbourhood definition") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const auto m = testing::random_mask(12, 10, 3, rng);
      CHECK(boundary_pixels(m) == testing::brute_boundary(m));
    }
  }

  TEST_CASE("surface distances match the all-pairs oracle") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      const auto a = trial % 3 ? testing::blob_mask(16, 16, 2, rng) : testing::random_mask(16, 16, 2, rng, 0.2);
      const auto b = trial % 2 ? testing::blob_mask(16, 16, 2, rng) : testing::random_mask(16, 16, 2, rng, 0.3);
      const auto got = surface_distances(a, b);
      const auto want = brute_surface(a, b);
      REQUIRE(got.has_value() == want.has_value());
      if (!got) continue;
      CHECK(std::abs(got->hd95 - want->hd95) <= 1e-9);
      CHECK(std::abs(got->asd - want->asd) <= 1e-9);
    }
  }

  TEST_CASE("surface distance hand cases") {
    LabelMask a(8, 8, 2), b(8, 8, 2);
    a.at(2, 2) = 1;
    b.at(2, 5) = 1;
    auto s = surface_distances(a, b);
    REQUIRE(s);
    CHECK(s->hd95 == doctest::Approx(3.0));
    CHECK(s->asd == doctest::Approx(3.0));
    s = surface_distances(a, a);
    CHECK(s->hd95 == 0.0);
    CHECK(s->asd == 0.0);
    CHECK_FALSE(surface_distances(a, LabelMask(8, 8, 2)).has_value());
  }

  TEST_CASE("score_case conventions for empty classes") {
    LabelMask truth(10, 10, 3), pred(10, 10, 3);
    truth.at(4, 4) = 1;
    const auto r = score_case(pred, truth);
    REQUIRE(r.per_class.size() == 2);
    CHECK(r.per_class[0].dice == 0.0);
    CHECK(r.per_class[0].hd95 == doctest::Approx(std::hypot(10.0, 10.0)));
    CHECK(r.per_class[1].dice == 1.0);
    CHECK(r.per_class[1].hd95 == 0.0);
    CHECK(r.per_class[1].asd == 0.0);
    CHECK(r.dice_mean == doctest::Approx(0.5));
    const auto perfect = score_case(truth, truth);
    CHECK(perfect.dice_mean == 1.0);
    CHECK(perfect.hd95 == 0.0);
  }

  TEST_CASE("average_reports is the class-wise mean") {
    Rng rng(3);
    const auto t1 = testing::blob_mask(16, 16, 3, rng), p1 = testing::blob_mask(16, 16, 3, rng);
    const auto t2 = testing::blob_mask(16, 16, 3, rng), p2 = testing::blob_mask(16, 16, 3, rng);
    const std::vector<MetricsReport> rs{score_case(p1, t1), score_case(p2, t2)};
    const auto avg = average_reports(rs);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(avg.per_class[k].dice == doctest::Approx((rs[0].per_class[k].dice + rs[1].per_class[k].dice) / 2));
      CHECK(avg.per_class[k].hd95 == doctest::Approx((rs[0].per_class[k].hd95 + rs[1].per_class[k].hd95) / 2));
    }
    CHECK(avg.dice_mean == doctest::Approx((avg.per_class[0].dice + avg.per_class[1].dice) / 2));
  }

  TEST_CASE("calibration guidance modes") {
    Rng rng(4);
    LabelMask a(6, 6, 2), b(6, 6, 2);
    for (int x = 0; x < 3; ++x) a.at(1, x) = 1;
    for (int x = 3; x < 6; ++x) b.at(1, x) = 1;
    CHECK(calibration_guidance(a, a, {GuidanceKind::Dice}, rng) == 1.0);
    CHECK(calibration_guidance(a, b, {GuidanceKind::Dice}, rng) == 0.0);
    CHECK(calibration_guidance(a, b, {GuidanceKind::Fixed, 0.5}, rng) == 0.5);
    LabelMask c = a;
    c.at(1, 3) = 1;
    const double d = calibration_guidance(a, c, {GuidanceKind::Dice}, rng);
    const double j = calibration_guidance(a, c, {GuidanceKind::Jaccard}, rng);
    CHECK(d == doctest::Approx(6.0 / 7.0));
    CHECK(j == doctest::Approx(0.75));
    CHECK(calibration_guidance(a, c, {GuidanceKind::Both}, rng) == doctest::Approx(d + j));
    Rng before = rng;
    calibration_guidance(a, c, {GuidanceKind::Dice}, rng);
    CHECK(before == rng);
    const double r = calibration_guidance(a, c, {GuidanceKind::Random}, rng);
    CHECK(r >= 0.0);
    CHECK(r < 1.0);
    CHECK_FALSE(before == rng);
  }

  TEST_CASE("guidance names") {
    for (auto k : {GuidanceKind::Dice, GuidanceKind::Jaccard, GuidanceKind::Fixed, GuidanceKind::Random,
                   GuidanceKind::Both})
      CHECK(parse_guidance_kind(to_string(k)) == k);
    CHECK_THROWS_AS(parse_guidance_kind("nope"), ContractViolation);
  }

  TEST_CASE("metrics rows: one per foreground class plus mean") {
    Rng rng(8);
    const auto r = score_case(testing::blob_mask(16, 16, 4, rng), testing::blob_mask(16, 16, 4, rng));
    std::ostringstream os;
    write_metrics_header(os);
    write_metrics_rows(os, "case_0001", r);
    std::istringstream is(os.str());
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line)) lines.push_back(line);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "case_id,class,dice,jaccard,hd95,asd");
    CHECK(lines[1].rfind("case_0001,1,", 0) == 0);
    CHECK(lines[4].rfind("case_0001,mean,", 0) == 0);
  }
}

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffrect/label_mask.hpp"
#include "diffrect/rng.hpp"

namespace diffrect {

/// Per-class overlap: 2|a∩b| / (|a|+|b|). A class absent from both masks scores 1.
std::vector<double> dice(const LabelMask& a, const LabelMask& b);

/// Per-class |a∩b| / |a∪b|. Empty union scores 1.
std::vector<double> jaccard(const LabelMask& a, const LabelMask& b);

/// Mean over classes 1..C-1 of a per-class vector.
double foreground_mean(std::span<const double> per_class);

struct SurfaceDistances {
  double hd95 = 0.0;
  double asd = 0.0;
};

/// Boundary distances between the foreground (label != 0) of two masks.
///
/// A boundary pixel is a foreground pixel with a background 4-neighbour or one
/// lying on the image edge. HD95 is the 95th percentile (linear interpolation)
/// of the union of both directed boundary-distance sets; ASD is the average of
/// the two directed mean distances. Returns nullopt when either foreground is
/// empty.
std::optional<SurfaceDistances> surface_distances(const LabelMask& a, const LabelMask& b);

/// Boundary pixels as (y, x) pairs, row-major order. Exposed for tests.
std::vector<std::pair<int, int>> boundary_pixels(const LabelMask& m);

enum class GuidanceKind { Dice, Jaccard, Fixed, Random, Both };

struct GuidanceMode {
  GuidanceKind kind = GuidanceKind::Dice;
  double fixed_value = 0.5;
};

GuidanceKind parse_guidance_kind(std::string_view name);
std::string_view to_string(GuidanceKind kind);

/// Calibration guidance tau between a higher- and a lower-quality mask.
/// Dice/Jaccard average the foreground classes; Both returns their sum.
/// `rng` is only consumed in Random mode.
double calibration_guidance(const LabelMask& hi, const LabelMask& lo, const GuidanceMode& mode,
                            Rng& rng);

struct ClassMetrics {
  int cls = 0;
  double dice = 0.0;
  double jaccard = 0.0;
  double hd95 = 0.0;
  double asd = 0.0;
};

struct MetricsReport {
  double dice_mean = 0.0;
  double jaccard_mean = 0.0;
  double hd95 = 0.0;
  double asd = 0.0;
  std::vector<ClassMetrics> per_class;  // foreground classes only
};

/// Scores one prediction against ground truth class by class. Surface
/// distances that are undefined (one side empty) are replaced by the image
/// diagonal; a class absent from both scores Dice 1 and distance 0.
MetricsReport score_case(const LabelMask& prediction, const LabelMask& truth);

/// Class-wise average of several case reports; means are recomputed.
MetricsReport average_reports(std::span<const MetricsReport> reports);

void write_metrics_header(std::ostream& os, std::string_view first_column = "case_id");
/// Rows `case_id, class, dice, jaccard, hd95, asd`; one per foreground class plus a `mean` row.
void write_metrics_rows(std::ostream& os, std::string_view case_id, const MetricsReport& report);

}  // namespace diffrect

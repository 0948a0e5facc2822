#pragma once

#include <string>
#include <vector>

#include "asd/geo.hpp"

namespace asd {

struct SegmentStats {
  double v_mean = 0.0;  // km/h
  double v_max = 0.0;   // km/h
  std::size_t n_points = 0;
  double total_stay = 0.0;  // s
};

/// Inclusive index range [start_idx, end_idx] of one trip.
struct Segment {
  std::string trip_id;
  std::size_t start_idx = 0;
  std::size_t end_idx = 0;
  double length_m = 0.0;
  SegmentStats stats;
};

/// Adaptive break thresholds of one trip: lambda = mean + k * stddev.
struct SasThresholds {
  double lambda_d = 0.0;  // m
  double lambda_t = 0.0;  // s
  double alpha = 2.0;
  double beta = 2.0;
  double mu_d = 0.0, sigma_d = 0.0;
  double mu_t = 0.0, sigma_t = 0.0;
};

SasThresholds compute_thresholds(const Trip& trip, double alpha, double beta);

/// Strict: a pair exactly at a threshold stays in the same segment.
bool segment_break(double d, double dt, const SasThresholds& thr);

std::vector<Segment> segment_trip(const Trip& trip, const SasThresholds& thr);

/// Fixed-length baseline: a new segment starts whenever the cumulative
/// along-track distance crosses the next multiple of `interval_m`.
std::vector<Segment> segment_fixed(const Trip& trip, double interval_m);

/// Builds a segment over [start, end] with cached length and motion stats.
Segment make_segment(const Trip& trip, std::size_t start, std::size_t end);

}  // namespace asd

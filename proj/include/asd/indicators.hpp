#pragma once

#include <string>
#include <vector>

#include "asd/geo.hpp"
#include "asd/segmentation.hpp"
#include "asd/stops.hpp"

namespace asd {

struct IndicatorParams {
  double delta = 0.1;  // mean-speed weight in the speed deviation score
  std::size_t k = 3;   // top-k stays aggregated by the temporal score
  double eps = 1e-6;
  bool merge_runs = true;  // consecutive stop samples count as one stop
};

/// One graph node: a stop-classified sample with its indicator vector
/// (tis, msd, tta_k) and the confidence of its segment.
struct NodeFeature {
  std::size_t node_id = 0;
  std::size_t segment_id = 0;
  std::string trip_id;
  std::size_t point_index = 0;
  double t = 0.0;
  double lng = 0.0;
  double lat = 0.0;
  double stay = 0.0;
  StopKind kind = StopKind::NormalStop;

  double tis = 0.0;
  double msd = 0.0;
  double tta_k = 0.0;
  double confidence = 0.0;

  // Indicator vector after refinement; equals raw() until smoothing runs.
  Vec3 refined{0.0, 0.0, 0.0};
  bool smoothed = false;

  Vec3 raw() const { return {tis, msd, tta_k}; }
};

double median(std::vector<double> xs);
double population_std(const std::vector<double>& xs);

/// Robust z-score of one stay against the segment's stays, clipped to [0, 3].
double tis(double stay, const std::vector<double>& segment_stays, double eps);

/// Speed range plus a delta-weighted mean speed.
double msd(double v_max, double v_mean, double delta);

/// Softmax-weighted mean of the top-k stays. With `normalize`, stays are
/// divided by the segment maximum first.
double tta_k(const std::vector<double>& segment_stays, std::size_t k, bool normalize = true);

/// Density ratio times speed-stability ratio; density ratio alone for a
/// fully stationary segment.
double confidence(std::size_t n_points, std::size_t n_max, double v_avg, double v_max, double eps);

/// One feature per stop. Node and segment ids start at the given bases;
/// segment ids follow the order of `segments`.
std::vector<NodeFeature> features_for_trip(const Trip& trip, const std::vector<Segment>& segments,
                                           const std::vector<StopEvent>& stops,
                                           const IndicatorParams& params, std::size_t node_base = 0,
                                           std::size_t segment_base = 0);

}  // namespace asd

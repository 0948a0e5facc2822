#include "asd/segmentation.hpp"

#include <algorithm>
#include <cmath>

#include "asd/error.hpp"

namespace asd {

namespace {

std::pair<double, double> mean_and_pstd(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

// Distances below this are treated as equal when comparing against
// fixed-interval boundaries (accumulated haversine rounding).
constexpr double kBoundaryTolM = 1e-6;

}  // namespace

Segment make_segment(const Trip& trip, std::size_t start, std::size_t end) {
  Segment seg;
  seg.trip_id = trip.id;
  seg.start_idx = start;
  seg.end_idx = end;
  double vsum = 0.0;
  for (std::size_t i = start; i <= end; ++i) {
    const GpsPoint& p = trip.points[i];
    if (i > start) seg.length_m += haversine(trip.points[i - 1], p);
    vsum += p.v;
    seg.stats.v_max = std::max(seg.stats.v_max, p.v);
    seg.stats.total_stay += p.s;
  }
  seg.stats.n_points = end - start + 1;
  seg.stats.v_mean = std::min(vsum / static_cast<double>(seg.stats.n_points), seg.stats.v_max);
  return seg;
}

SasThresholds compute_thresholds(const Trip& trip, double alpha, double beta) {
  if (trip.points.size() < 2) throw PreconditionError("compute_thresholds: trip needs >= 2 points");
  std::vector<double> ds, ts;
  ds.reserve(trip.points.size() - 1);
  ts.reserve(trip.points.size() - 1);
  for (std::size_t i = 1; i < trip.points.size(); ++i) {
    ds.push_back(haversine(trip.points[i - 1], trip.points[i]));
    ts.push_back(trip.points[i].t - trip.points[i - 1].t);
  }
  SasThresholds thr;
  thr.alpha = alpha;
  thr.beta = beta;
  std::tie(thr.mu_d, thr.sigma_d) = mean_and_pstd(ds);
  std::tie(thr.mu_t, thr.sigma_t) = mean_and_pstd(ts);
  thr.lambda_d = thr.mu_d + alpha * thr.sigma_d;
  thr.lambda_t = thr.mu_t + beta * thr.sigma_t;
  return thr;
}

bool segment_break(double d, double dt, const SasThresholds& thr) {
  return d > thr.lambda_d || dt > thr.lambda_t;
}

std::vector<Segment> segment_trip(const Trip& trip, const SasThresholds& thr) {
  std::vector<Segment> out;
  if (trip.points.empty()) return out;
  std::size_t start = 0;
  for (std::size_t i = 0; i + 1 < trip.points.size(); ++i) {
    const GpsPoint& a = trip.points[i];
    const GpsPoint& b = trip.points[i + 1];
    if (segment_break(haversine(a, b), b.t - a.t, thr)) {
      out.push_back(make_segment(trip, start, i));
      start = i + 1;
    }
  }
  out.push_back(make_segment(trip, start, trip.points.size() - 1));
  return out;
}

std::vector<Segment> segment_fixed(const Trip& trip, double interval_m) {
  if (!(interval_m > 0.0)) throw PreconditionError("segment_fixed: interval must be positive");
  std::vector<Segment> out;
  if (trip.points.empty()) return out;
  std::size_t start = 0;
  double cumulative = 0.0;
  double boundary = interval_m;
  for (std::size_t i = 1; i < trip.points.size(); ++i) {
    cumulative += haversine(trip.points[i - 1], trip.points[i]);
    if (cumulative > boundary + kBoundaryTolM) {
      out.push_back(make_segment(trip, start, i - 1));
      start = i;
      while (cumulative > boundary + kBoundaryTolM) boundary += interval_m;
    }
  }
  out.push_back(make_segment(trip, start, trip.points.size() - 1));
  return out;
}

}  // namespace asd

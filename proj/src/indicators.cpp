#include "asd/indicators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "asd/error.hpp"

namespace asd {

double median(std::vector<double> xs) {
  if (xs.empty()) throw PreconditionError("median of empty list");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double population_std(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(xs.size()));
}

double tis(double stay, const std::vector<double>& segment_stays, double eps) {
  if (segment_stays.empty()) throw PreconditionError("tis: segment has no stops");
  const double z = (stay - median(segment_stays)) / (population_std(segment_stays) + eps);
  return std::clamp(z, 0.0, 3.0);
}

double msd(double v_max, double v_mean, double delta) {
  if (v_max < v_mean) throw PreconditionError("msd: v_max below v_mean");
  return (v_max - v_mean) + delta * v_mean;
}

double tta_k(const std::vector<double>& segment_stays, std::size_t k, bool normalize) {
  if (k == 0) throw PreconditionError("tta_k: k must be >= 1");
  if (segment_stays.empty()) return 0.0;
  std::vector<double> s = segment_stays;
  std::sort(s.begin(), s.end(), std::greater<>());
  s.resize(std::min(k, s.size()));
  if (normalize) {
    const double top = s.front();
    if (!(top > 0.0)) return 0.0;
    for (double& x : s) x /= top;
  }
  const double shift = s.front();
  double z = 0.0, acc = 0.0;
  for (double x : s) {
    const double w = std::exp(x - shift);
    z += w;
    acc += w * x;
  }
  return acc / z;
}

double confidence(std::size_t n_points, std::size_t n_max, double v_avg, double v_max, double eps) {
  if (n_max == 0) throw PreconditionError("confidence: n_max must be positive");
  if (n_points > n_max) throw PreconditionError("confidence: n_points exceeds n_max");
  const double density = static_cast<double>(n_points) / static_cast<double>(n_max);
  if (v_max <= 0.0) return density;
  return density * (v_avg / (v_max + eps));
}

std::vector<NodeFeature> features_for_trip(const Trip& trip, const std::vector<Segment>& segments,
                                           const std::vector<StopEvent>& stops,
                                           const IndicatorParams& params, std::size_t node_base,
                                           std::size_t segment_base) {
  std::vector<NodeFeature> out;
  if (stops.empty() || segments.empty()) return out;

  std::size_t n_max = 0;
  for (const Segment& seg : segments) n_max = std::max(n_max, seg.stats.n_points);

  // Stops are in index order and segments tile the trip, so one sweep
  // assigns every stop to its segment.
  std::vector<std::vector<const StopEvent*>> by_segment(segments.size());
  std::size_t si = 0;
  for (const StopEvent& ev : stops) {
    while (si < segments.size() && segments[si].end_idx < ev.point_index) ++si;
    if (si == segments.size() || ev.point_index < segments[si].start_idx) {
      throw PreconditionError("features_for_trip: stop outside segment tiling");
    }
    by_segment[si].push_back(&ev);
  }

  std::size_t node_id = node_base;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (by_segment[s].empty()) continue;
    const Segment& seg = segments[s];
    std::vector<double> stays;
    stays.reserve(by_segment[s].size());
    // With merge_runs, consecutive stop samples are one stop: a long dwell
    // sampled many times enters the segment's stay list once.
    std::size_t prev = 0;
    for (const StopEvent* ev : by_segment[s]) {
      if (params.merge_runs && !stays.empty() && ev->point_index == prev + 1) {
        stays.back() = std::max(stays.back(), ev->stay);
      } else {
        stays.push_back(ev->stay);
      }
      prev = ev->point_index;
    }
    const double seg_msd = msd(seg.stats.v_max, seg.stats.v_mean, params.delta);
    const double seg_tta = tta_k(stays, params.k);
    const double seg_conf =
        confidence(seg.stats.n_points, n_max, seg.stats.v_mean, seg.stats.v_max, params.eps);
    for (const StopEvent* ev : by_segment[s]) {
      const GpsPoint& p = trip.points[ev->point_index];
      NodeFeature nf;
      nf.node_id = node_id++;
      nf.segment_id = segment_base + s;
      nf.trip_id = trip.id;
      nf.point_index = ev->point_index;
      nf.t = p.t;
      nf.lng = p.lng;
      nf.lat = p.lat;
      nf.stay = ev->stay;
      nf.kind = ev->kind;
      nf.tis = tis(ev->stay, stays, params.eps);
      nf.msd = seg_msd;
      nf.tta_k = seg_tta;
      nf.confidence = seg_conf;
      nf.refined = nf.raw();
      out.push_back(std::move(nf));
    }
  }
  return out;
}

}  // namespace asd

#include "asd/stops.hpp"

#include <string>

#include "asd/error.hpp"

namespace asd {

std::string_view to_string(StopKind kind) {
  switch (kind) {
    case StopKind::NormalStop:
      return "normal";
    case StopKind::AbnormalDuration:
      return "abnormal_duration";
    case StopKind::AbnormalLowSpeed:
      return "abnormal_low_speed";
  }
  return "normal";
}

StopKind stop_kind_from_string(std::string_view name) {
  if (name == "normal") return StopKind::NormalStop;
  if (name == "abnormal_duration") return StopKind::AbnormalDuration;
  if (name == "abnormal_low_speed") return StopKind::AbnormalLowSpeed;
  throw PreconditionError("unknown stop kind: " + std::string(name));
}

void DetectorConfig::validate() const {
  if (!(d_threshold > 0 && v_low > 0 && s_min > 0 && eps_v > 0 && duration_factor > 0 &&
        default_route_stay > 0 && v_margin >= 0)) {
    throw PreconditionError("detector thresholds must be positive (v_margin >= 0)");
  }
}

double estimate_velocity(const GpsPoint& p, const GpsPoint& next, double v_margin) {
  const double dt = next.t - p.t;
  if (!(dt > 0.0)) throw PreconditionError("estimate_velocity: non-positive time gap");
  const double d = haversine(p, next);
  return 2.0 * d / dt * 3.6 + v_margin;
}

bool is_detected_stop(const GpsPoint& p, const GpsPoint* next, const DetectorConfig& cfg) {
  if (p.v <= cfg.eps_v && p.s > 0.0) return true;
  if (next == nullptr) return false;
  const double v_est = estimate_velocity(p, *next, cfg.v_margin);
  return v_est <= cfg.eps_v && haversine(p, *next) <= cfg.d_threshold;
}

std::optional<StopEvent> classify_point(const GpsPoint& p, const GpsPoint* next,
                                        const DetectorConfig& cfg, std::size_t point_index) {
  if (!is_detected_stop(p, next, cfg)) return std::nullopt;
  StopEvent ev;
  ev.point_index = point_index;
  ev.stay = p.s;
  ev.est_velocity = next ? estimate_velocity(p, *next, cfg.v_margin) : p.v;
  if (p.s > cfg.duration_factor * cfg.route_mean_stay) {
    ev.kind = StopKind::AbnormalDuration;
  } else if (ev.est_velocity > 0.0 && ev.est_velocity <= cfg.v_low && p.s > 0.0 && p.s <= cfg.s_min) {
    ev.kind = StopKind::AbnormalLowSpeed;
  } else {
    ev.kind = StopKind::NormalStop;
  }
  return ev;
}

double route_mean_stay(const std::vector<Trip>& trips, const DetectorConfig& cfg) {
  if (trips.empty()) throw PreconditionError("route_mean_stay: empty trip list");
  double total = 0.0;
  std::size_t count = 0;
  for (const Trip& trip : trips) {
    const auto& pts = trip.points;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const GpsPoint* next = i + 1 < pts.size() ? &pts[i + 1] : nullptr;
      if (is_detected_stop(pts[i], next, cfg)) {
        total += pts[i].s;
        ++count;
      }
    }
  }
  return count == 0 ? cfg.default_route_stay : total / static_cast<double>(count);
}

std::vector<StopEvent> detect_stops(const Trip& trip, const DetectorConfig& cfg) {
  if (!(cfg.route_mean_stay > 0.0)) {
    throw PreconditionError("detect_stops: route mean stay is not resolved");
  }
  std::vector<StopEvent> out;
  const auto& pts = trip.points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const GpsPoint* next = i + 1 < pts.size() ? &pts[i + 1] : nullptr;
    if (auto ev = classify_point(pts[i], next, cfg, i)) out.push_back(*ev);
  }
  return out;
}

}  // namespace asd

#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "asd/geo.hpp"

namespace asd {

enum class StopKind { NormalStop, AbnormalDuration, AbnormalLowSpeed };

std::string_view to_string(StopKind kind);
StopKind stop_kind_from_string(std::string_view name);

struct StopEvent {
  std::size_t point_index = 0;
  StopKind kind = StopKind::NormalStop;
  double est_velocity = 0.0;  // km/h
  double stay = 0.0;          // s
};

/// Thresholds of the rule-based stop classifier.
struct DetectorConfig {
  double d_threshold = 200.0;       // m
  double v_low = 5.0;               // km/h
  double s_min = 40.0;              // s
  double v_margin = 0.0;            // km/h, added to estimated velocity
  double eps_v = 0.5;               // km/h, "zero" speed tolerance
  double duration_factor = 3.0;     // stay > factor * route mean => extended duration
  double route_mean_stay = 0.0;     // s; <= 0 means "compute from the corpus"
  double default_route_stay = 60.0; // s; fallback when no stops are detectable

  void validate() const;
};

/// Velocity between two samples: 2d/dt converted to km/h, plus the margin.
double estimate_velocity(const GpsPoint& p, const GpsPoint& next, double v_margin);

/// Stop test of the first two cases (explicit stop, displacement-based stop).
/// `next` is null for the last sample of a trip, which can only be an
/// explicit stop.
bool is_detected_stop(const GpsPoint& p, const GpsPoint* next, const DetectorConfig& cfg);

/// Full classification of one sample. `cfg.route_mean_stay` must be resolved.
std::optional<StopEvent> classify_point(const GpsPoint& p, const GpsPoint* next,
                                        const DetectorConfig& cfg, std::size_t point_index = 0);

/// Mean stay over all detected stops of the corpus, or the configured
/// default when nothing is detected.
double route_mean_stay(const std::vector<Trip>& trips, const DetectorConfig& cfg);

/// Classifies every sample of a trip; returns the stops in index order.
std::vector<StopEvent> detect_stops(const Trip& trip, const DetectorConfig& cfg);

}  // namespace asd

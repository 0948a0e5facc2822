#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <utility>
#include <string>
#include <vector>

#include "asd/geo.hpp"

namespace asd {

struct PlannedStop {
  double position_km = 0.0;
  double duration_s = 0.0;
};

enum class AbnormalKind { LongDwell, LowSpeed };

std::string_view to_string(AbnormalKind k);
AbnormalKind abnormal_kind_from_string(std::string_view s);

struct PlannedAbnormal {
  double position_km = 0.0;
  double duration_s = 0.0;
  AbnormalKind kind = AbnormalKind::LongDwell;
  std::size_t trip = 0;  // index of the trip that carries the event
};

struct SynthConfig {
  double route_length_km = 60.0;
  std::size_t n_trips = 20;
  double interval_min_s = 30.0;
  double interval_max_s = 60.0;
  double gps_noise_m = 5.0;
  double cruise_kmh = 60.0;
  std::vector<PlannedStop> normal_stops{{12.0, 180.0}, {24.0, 150.0}, {36.0, 210.0}, {48.0, 120.0}};
  // Empty: `n_abnormal` events are drawn from the seed.
  std::vector<PlannedAbnormal> abnormal;
  std::size_t n_abnormal = 10;
  double long_dwell_min_s = 900.0;
  double long_dwell_max_s = 1800.0;
  double crawl_min_s = 480.0;
  double crawl_max_s = 900.0;
  double crawl_kmh = 2.0;
  // Brief unplanned halts (lights, toll gates) per trip, and GPS outages.
  double traffic_stops_per_trip = 3.0;
  double dropouts_per_trip = 1.0;
  double dropout_min_s = 240.0;
  double dropout_max_s = 600.0;
  // Stop-and-go stretches (urban exits, roadworks): normal but slow.
  double congestion_per_trip = 0.0;
  double congestion_min_km = 1.5;
  double congestion_max_km = 4.0;
  // Terminals drop to a sleep reporting interval once parked longer than
  // sleep_after_s, and report again when the vehicle moves off. 0 disables.
  double sleep_after_s = 300.0;
  double sleep_interval_s = 600.0;
  // Stay time reported while standing: elapsed so far, or the full dwell.
  bool elapsed_stay = false;
  // Probability that a periodic report is lost (the next one is tried one
  // interval later).
  double report_loss = 0.0;
  double origin_lng = 116.30;
  double origin_lat = 39.88;
  double bearing_deg = 300.0;
  std::uint64_t seed = 7;

  void validate() const;
};

struct GroundTruthStop {
  double lng = 0.0;
  double lat = 0.0;
  double duration_s = 0.0;
  AbnormalKind kind = AbnormalKind::LongDwell;
  std::string trip_id;
  std::vector<std::size_t> points;  // sample indices inside the event
};

struct NormalStopTruth {
  double lng = 0.0;
  double lat = 0.0;
  double duration_s = 0.0;
  std::string trip_id;
  std::vector<std::size_t> points;
};

struct GroundTruth {
  std::vector<GroundTruthStop> abnormal;
  std::vector<NormalStopTruth> normal;  // planned stops, used for normal seeds
};

struct Corpus {
  std::vector<Trip> trips;
  std::vector<std::string> dates;   // per trip
  std::vector<double> start_of_day; // per trip, seconds
  GroundTruth truth;
};

Corpus generate(const SynthConfig& cfg);

/// Point on the route `km` along the geodesic from the configured origin.
std::pair<double, double> route_point(const SynthConfig& cfg, double km);

struct SeedLabel {
  std::string trip_id;  // empty = any trip
  std::optional<std::size_t> node_id;
  double lng = 0.0;
  double lat = 0.0;
  double radius_m = 0.0;
  int cls = 0;
};

/// Seeds for the default protocol: `k_abnormal` events picked by `pick`
/// (all when empty) plus one normal seed per planned stop of every trip.
std::vector<SeedLabel> default_seed_labels(const GroundTruth& truth, const std::vector<std::size_t>& pick = {},
                                           double radius_m = 150.0);

void write_trips_csv(const Corpus& corpus, const std::filesystem::path& path);
void write_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth read_ground_truth(const std::filesystem::path& path);
void write_seed_labels(const std::vector<SeedLabel>& labels, const std::filesystem::path& path);
std::vector<SeedLabel> read_seed_labels(const std::filesystem::path& path);

/// CSV + ground-truth sidecar + seed labels into `dir`.
void export_corpus(const Corpus& corpus, const std::filesystem::path& dir);

}  // namespace asd

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace asd {

using Vec3 = std::array<double, 3>;

inline constexpr double kEarthRadiusM = 6371000.0;

enum class EngineState { Moving, Stationary };

/// One GPS sample. Time is seconds since the first sample of its trip,
/// speed is km/h, stay time is seconds.
struct GpsPoint {
  double lng = 0.0;
  double lat = 0.0;
  double t = 0.0;
  double v = 0.0;
  double s = 0.0;
  std::optional<EngineState> f;
  std::optional<double> d_prev;
  std::optional<double> d_start;
};

/// Time-ordered samples of one coach trip.
struct Trip {
  std::string id;
  std::vector<GpsPoint> points;
  double max_interval = 0.0;  // largest observed gap, seconds
};

bool valid_coordinates(double lng, double lat);

/// Great-circle distance in meters on a sphere of radius kEarthRadiusM.
double haversine(double lng1, double lat1, double lng2, double lat2);
double haversine(const GpsPoint& a, const GpsPoint& b);

/// Throws PreconditionError unless the trip has >= 2 points and strictly
/// increasing timestamps.
void validate_trip(const Trip& trip);

/// Recomputes max_interval from the point timestamps.
void refresh_max_interval(Trip& trip);

/// Maps logical fields to header names in a delimited trajectory file.
/// Empty optional names mean the column is absent.
struct ColumnMap {
  std::string lng = "lng";
  std::string lat = "lat";
  std::string date = "date";
  std::string t = "t";
  std::string v = "v";
  std::string s = "s";
  std::string trip = "trip_id";  // optional; trips fall back to the date column
  std::string d_prev = "d_prev";
  std::string d_start = "d";
  std::string f = "f";
};

struct IngestOptions {
  char delimiter = ',';
  bool strict = false;
  double eps_v = 0.5;  // km/h, used to derive the engine flag when absent
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;
  std::size_t trips = 0;
  std::vector<std::string> reasons;
};

struct IngestResult {
  std::vector<Trip> trips;
  IngestReport report;
};

IngestResult load_trips(const std::filesystem::path& path, const ColumnMap& columns,
                        const IngestOptions& options = {});

}  // namespace asd

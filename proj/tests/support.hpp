#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asd/geo.hpp"
#include "asd/rng.hpp"

namespace testing {

inline constexpr double kPi = 3.14159265358979323846;

// Spherical law of cosines. Independent of the haversine code path and
// accurate to well under a millimetre for separations above ~10 m.
inline double cosine_law_m(double lng1, double lat1, double lng2, double lat2) {
  const double d2r = kPi / 180.0;
  const double p1 = lat1 * d2r, p2 = lat2 * d2r, dl = (lng2 - lng1) * d2r;
  double c = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
  c = std::fmin(1.0, std::fmax(-1.0, c));
  return 6371000.0 * std::acos(c);
}

// Trip running due north along one meridian, so every pair distance is
// R * dlat exactly and distances scale linearly with the latitude steps.
inline asd::Trip meridian_trip(const std::vector<double>& steps_m, const std::vector<double>& gaps_s,
                               double lng = 116.3, double lat0 = 39.9, const std::string& id = "t") {
  asd::Trip trip;
  trip.id = id;
  const double m2deg = 180.0 / (kPi * 6371000.0);
  asd::GpsPoint p;
  p.lng = lng;
  p.lat = lat0;
  p.v = 40.0;
  trip.points.push_back(p);
  for (std::size_t i = 0; i < steps_m.size(); ++i) {
    p.lat += steps_m[i] * m2deg;
    p.t += gaps_s[i];
    p.v = steps_m[i] > 0.0 ? 3.6 * steps_m[i] / gaps_s[i] : 0.0;
    trip.points.push_back(p);
  }
  asd::refresh_max_interval(trip);
  return trip;
}

// Sparse-GPS-like trip: mostly 30-60 s gaps with occasional outages and
// long jumps.
inline asd::Trip random_sparse_trip(asd::Rng& rng, std::size_t n_points, const std::string& id = "t") {
  std::vector<double> steps, gaps;
  for (std::size_t i = 1; i < n_points; ++i) {
    const double u = rng.uniform();
    if (u < 0.05) {
      gaps.push_back(rng.uniform(300.0, 900.0));
      steps.push_back(rng.uniform(2000.0, 9000.0));
    } else if (u < 0.15) {
      gaps.push_back(rng.uniform(30.0, 60.0));
      steps.push_back(rng.uniform(0.0, 20.0));
    } else {
      const double g = rng.uniform(30.0, 60.0);
      gaps.push_back(g);
      steps.push_back(g * rng.uniform(8.0, 20.0));
    }
  }
  return meridian_trip(steps, gaps, 116.3, 39.9, id);
}

// Pairwise AUC: a positive above a negative counts 1, a tie counts 1/2.
inline double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double hits = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      hits += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return hits / pairs;
}

// Mean over positives of the precision among everything scored at least as
// high as that positive.
inline double rank_ap(const std::vector<double>& s, const std::vector<int>& y) {
  double total = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    ++n_pos;
    double above = 0, pos_above = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] >= s[i]) {
        above += 1;
        pos_above += y[j] == 1;
      }
    }
    total += pos_above / above;
  }
  return total / static_cast<double>(n_pos);
}

// Reference ground-truth / predicted coordinate pairs with their expected
// distance in km.
struct MatchFixtureRow {
  double g_lng, g_lat, p_lng, p_lat, km;
};

inline const std::vector<MatchFixtureRow>& match_fixture() {
  static const std::vector<MatchFixtureRow> rows{
      {116.3027, 39.8809, 116.3020, 39.8821, 0.14}, {116.3101, 39.8973, 116.3044, 39.8957, 0.52},
      {116.3103, 39.9253, 116.3042, 39.9093, 1.85}, {116.3103, 39.9387, 116.3025, 39.9584, 2.29},
      {116.3098, 39.9434, 116.3025, 39.9584, 1.78}, {116.3096, 39.9532, 116.3025, 39.9584, 0.84},
      {116.3139, 39.9644, 116.3136, 39.9650, 0.07}, {116.3806, 39.9810, 116.3746, 39.9691, 1.42},
      {116.3662, 40.0072, 116.3613, 40.0042, 0.54}, {116.3628, 40.0115, 116.3565, 40.0110, 0.54},
  };
  return rows;
}
inline constexpr double kMatchFixtureMeanKm = 1.10;
inline constexpr double kMatchFixtureMedianKm = 0.69;

// Fresh scratch directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("asd_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing

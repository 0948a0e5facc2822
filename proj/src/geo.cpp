#include "asd/geo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "asd/error.hpp"

namespace asd {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::vector<std::string> split_row(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == delim && !quoted) {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(const std::string& raw) {
  std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double out = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(out)) return std::nullopt;
  return out;
}

std::optional<EngineState> parse_engine(const std::string& raw) {
  std::string s = trim(raw);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "1" || s == "moving" || s == "on" || s == "true") return EngineState::Moving;
  if (s == "0" || s == "stationary" || s == "off" || s == "false") return EngineState::Stationary;
  return std::nullopt;
}

struct RawRow {
  std::size_t line_no;
  std::string trip;
  GpsPoint p;
};

}  // namespace

bool valid_coordinates(double lng, double lat) {
  return std::isfinite(lng) && std::isfinite(lat) && lat >= -90.0 && lat <= 90.0 &&
         lng >= -180.0 && lng <= 180.0;
}

double haversine(double lng1, double lat1, double lng2, double lat2) {
  const double phi1 = lat1 * kDegToRad;
  const double phi2 = lat2 * kDegToRad;
  const double dphi = (lat2 - lat1) * kDegToRad;
  const double dlam = (lng2 - lng1) * kDegToRad;
  const double sp = std::sin(dphi / 2.0);
  const double sl = std::sin(dlam / 2.0);
  double h = sp * sp + std::cos(phi1) * std::cos(phi2) * sl * sl;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

double haversine(const GpsPoint& a, const GpsPoint& b) { return haversine(a.lng, a.lat, b.lng, b.lat); }

void validate_trip(const Trip& trip) {
  if (trip.points.size() < 2) {
    throw PreconditionError("trip '" + trip.id + "' has fewer than 2 points");
  }
  for (std::size_t i = 1; i < trip.points.size(); ++i) {
    if (!(trip.points[i].t > trip.points[i - 1].t)) {
      throw PreconditionError("trip '" + trip.id + "' timestamps not strictly increasing at index " +
                              std::to_string(i));
    }
  }
}

void refresh_max_interval(Trip& trip) {
  double m = 0.0;
  for (std::size_t i = 1; i < trip.points.size(); ++i) {
    m = std::max(m, trip.points[i].t - trip.points[i - 1].t);
  }
  trip.max_interval = m;
}

IngestResult load_trips(const std::filesystem::path& path, const ColumnMap& columns,
                        const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open trajectory file: " + path.string());

  std::string header_line;
  if (!std::getline(in, header_line)) throw SchemaError("empty trajectory file: " + path.string());
  if (header_line.size() >= 3 && static_cast<unsigned char>(header_line[0]) == 0xEF) {
    header_line.erase(0, 3);  // UTF-8 BOM
  }
  auto header = split_row(header_line, options.delimiter);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index[trim(header[i])] = i;

  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    if (name.empty()) return std::nullopt;
    auto it = index.find(name);
    if (it == index.end()) return std::nullopt;
    return it->second;
  };
  auto require = [&](const std::string& name, const char* field) {
    auto col = find(name);
    if (!col) {
      throw SchemaError(std::string("missing required column '") + name + "' for field " + field);
    }
    return *col;
  };

  const std::size_t c_lng = require(columns.lng, "lng");
  const std::size_t c_lat = require(columns.lat, "lat");
  const std::size_t c_date = require(columns.date, "date");
  const std::size_t c_t = require(columns.t, "t");
  const std::size_t c_v = require(columns.v, "v");
  const std::size_t c_s = require(columns.s, "s");
  const auto c_trip = find(columns.trip);
  const auto c_dprev = find(columns.d_prev);
  const auto c_dstart = find(columns.d_start);
  const auto c_f = find(columns.f);

  IngestResult result;
  IngestReport& report = result.report;
  std::vector<RawRow> rows;
  std::vector<std::string> trip_order;
  std::map<std::string, std::size_t> seen_trip;

  auto reject = [&](std::size_t line_no, const std::string& why, bool parse_failure) {
    std::string msg = "row " + std::to_string(line_no) + ": " + why;
    if (parse_failure && options.strict) throw ParseError(msg);
    ++report.rows_dropped;
    report.reasons.push_back(std::move(msg));
  };

  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++report.rows_read;
    auto fields = split_row(line, options.delimiter);
    if (fields.size() < header.size()) {
      reject(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                          std::to_string(fields.size()),
             true);
      continue;
    }
    auto lng = parse_double(fields[c_lng]);
    auto lat = parse_double(fields[c_lat]);
    auto t = parse_double(fields[c_t]);
    auto v = parse_double(fields[c_v]);
    auto s = parse_double(fields[c_s]);
    if (!lng || !lat || !t || !v || !s) {
      reject(line_no, "unparseable numeric field", true);
      continue;
    }
    if (!valid_coordinates(*lng, *lat)) {
      reject(line_no, "coordinates out of range", false);
      continue;
    }
    if (*v < 0.0 || *s < 0.0) {
      reject(line_no, "negative speed or stay time", false);
      continue;
    }
    RawRow row;
    row.line_no = line_no;
    row.trip = trim(c_trip ? fields[*c_trip] : fields[c_date]);
    if (c_trip && row.trip.empty()) row.trip = trim(fields[c_date]);
    row.p.lng = *lng;
    row.p.lat = *lat;
    row.p.t = *t;
    row.p.v = *v;
    row.p.s = *s;
    if (c_dprev) row.p.d_prev = parse_double(fields[*c_dprev]);
    if (c_dstart) row.p.d_start = parse_double(fields[*c_dstart]);
    if (c_f) row.p.f = parse_engine(fields[*c_f]);
    if (seen_trip.emplace(row.trip, trip_order.size()).second) trip_order.push_back(row.trip);
    rows.push_back(std::move(row));
  }

  std::vector<std::vector<RawRow>> grouped(trip_order.size());
  for (auto& r : rows) grouped[seen_trip.at(r.trip)].push_back(std::move(r));

  for (std::size_t k = 0; k < grouped.size(); ++k) {
    auto& g = grouped[k];
    std::stable_sort(g.begin(), g.end(), [](const RawRow& a, const RawRow& b) { return a.p.t < b.p.t; });
    Trip trip;
    trip.id = trip_order[k];
    // Deduplicate equal timestamps keeping the first row in file order.
    std::vector<GpsPoint> unique;
    unique.reserve(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!unique.empty() && g[i].p.t == unique.back().t) {
        reject(g[i].line_no, "duplicate timestamp in trip '" + trip.id + "'", false);
        continue;
      }
      unique.push_back(g[i].p);
    }
    trip.points = std::move(unique);
    if (trip.points.size() < 2) {
      report.rows_dropped += trip.points.size();
      report.reasons.push_back("trip '" + trip.id + "' dropped: fewer than 2 valid points");
      continue;
    }
    const double t0 = trip.points.front().t;
    double cumulative = 0.0;
    for (std::size_t i = 0; i < trip.points.size(); ++i) {
      GpsPoint& p = trip.points[i];
      p.t -= t0;
      const double d = i == 0 ? 0.0 : haversine(trip.points[i - 1], p);
      if (!p.d_prev) p.d_prev = d;
      cumulative += d;
      if (!p.d_start) p.d_start = cumulative;
      if (!p.f) {
        p.f = (p.v <= options.eps_v && p.s > 0.0) ? EngineState::Stationary : EngineState::Moving;
      }
    }
    refresh_max_interval(trip);
    result.trips.push_back(std::move(trip));
  }
  report.trips = result.trips.size();
  return result;
}

}  // namespace asd

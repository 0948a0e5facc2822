#include "asd/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "asd/error.hpp"
#include "asd/rng.hpp"

namespace asd {

namespace {

constexpr double kRad = std::numbers::pi / 180.0;

enum class Phase { Cruise, Dwell, Crawl };

// One piece of the simulated timeline: constant speed, or standing still.
struct Piece {
  double t0 = 0.0, t1 = 0.0;
  double x0 = 0.0;       // km along the route at t0
  double speed = 0.0;    // km/s
  double v_report = 0.0; // km/h shown by the device
  double stay = 0.0;     // s reported while standing
  Phase phase = Phase::Cruise;
};

struct Incident {
  double km = 0.0;
  double duration = 0.0;  // length in km for congestion
  enum { Planned, Traffic, Dwell, Crawl, Congestion } what = Planned;
  int event = -1;  // index into the abnormal or planned list
};

std::string fmt(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

std::string trip_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trip_%02zu", k + 1);
  return buf;
}

std::string trip_date(std::size_t k) {
  // Consecutive days from 2024-05-01; day-of-month overflow rolls into June.
  const int day = static_cast<int>(k);
  char buf[32];
  if (day < 31) {
    std::snprintf(buf, sizeof buf, "2024-05-%02d", day + 1);
  } else {
    std::snprintf(buf, sizeof buf, "2024-06-%02d", (day - 31) % 30 + 1);
  }
  return buf;
}

std::vector<PlannedAbnormal> draw_abnormal(const SynthConfig& cfg) {
  if (!cfg.abnormal.empty()) return cfg.abnormal;
  Rng rng(substream(cfg.seed, "synth.abnormal"));
  std::vector<std::size_t> trips(cfg.n_trips);
  for (std::size_t i = 0; i < trips.size(); ++i) trips[i] = i;
  for (std::size_t i = trips.size(); i > 1; --i) {
    std::swap(trips[i - 1], trips[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  }
  std::vector<PlannedAbnormal> out;
  for (std::size_t e = 0; e < cfg.n_abnormal; ++e) {
    PlannedAbnormal a;
    a.trip = trips[e % trips.size()];
    a.kind = e % 2 == 0 ? AbnormalKind::LongDwell : AbnormalKind::LowSpeed;
    a.duration_s = a.kind == AbnormalKind::LongDwell ? rng.uniform(cfg.long_dwell_min_s, cfg.long_dwell_max_s)
                                                     : rng.uniform(cfg.crawl_min_s, cfg.crawl_max_s);
    // Keep clear of the planned stops and the route ends.
    for (int tries = 0; tries < 100; ++tries) {
      a.position_km = rng.uniform(4.0, cfg.route_length_km - 4.0);
      bool clear = true;
      for (const auto& s : cfg.normal_stops) clear = clear && std::abs(s.position_km - a.position_km) > 3.0;
      if (clear) break;
    }
    out.push_back(a);
  }
  return out;
}

}  // namespace

std::string_view to_string(AbnormalKind k) { return k == AbnormalKind::LongDwell ? "long_dwell" : "low_speed"; }

AbnormalKind abnormal_kind_from_string(std::string_view s) {
  if (s == "long_dwell") return AbnormalKind::LongDwell;
  if (s == "low_speed") return AbnormalKind::LowSpeed;
  throw PreconditionError("unknown abnormal kind: " + std::string(s));
}

void SynthConfig::validate() const {
  if (!(route_length_km > 0 && cruise_kmh > 0 && interval_min_s > 0 && interval_max_s >= interval_min_s &&
        gps_noise_m >= 0 && n_trips > 0 && crawl_kmh > 0)) {
    throw PreconditionError("synth: invalid route, speed or sampling parameters");
  }
  for (const auto& s : normal_stops) {
    if (s.position_km < 0 || s.position_km > route_length_km || !(s.duration_s > 0)) {
      throw PreconditionError("synth: planned stop outside the route or with non-positive duration");
    }
  }
  for (const auto& a : abnormal) {
    if (a.position_km < 0 || a.position_km > route_length_km || !(a.duration_s > 0) || a.trip >= n_trips) {
      throw PreconditionError("synth: planted abnormal stop is invalid");
    }
  }
}

std::pair<double, double> route_point(const SynthConfig& cfg, double km) {
  const double delta = km * 1000.0 / kEarthRadiusM;
  const double phi1 = cfg.origin_lat * kRad;
  const double lam1 = cfg.origin_lng * kRad;
  const double theta = cfg.bearing_deg * kRad;
  const double phi2 =
      std::asin(std::sin(phi1) * std::cos(delta) + std::cos(phi1) * std::sin(delta) * std::cos(theta));
  const double lam2 = lam1 + std::atan2(std::sin(theta) * std::sin(delta) * std::cos(phi1),
                                        std::cos(delta) - std::sin(phi1) * std::sin(phi2));
  return {lam2 / kRad, phi2 / kRad};
}

Corpus generate(const SynthConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  const auto abnormal = draw_abnormal(cfg);
  corpus.truth.abnormal.resize(abnormal.size());

  for (std::size_t k = 0; k < cfg.n_trips; ++k) {
    Rng rng(substream(cfg.seed, "synth.trip." + std::to_string(k)));
    const std::string id = trip_name(k);
    const double speed_kmh = cfg.cruise_kmh * rng.uniform(0.9, 1.1);

    std::vector<Incident> incidents;
    for (std::size_t s = 0; s < cfg.normal_stops.size(); ++s) {
      incidents.push_back({cfg.normal_stops[s].position_km,
                           cfg.normal_stops[s].duration_s * rng.uniform(0.8, 1.2), Incident::Planned,
                           static_cast<int>(s)});
    }
    const auto n_traffic = static_cast<std::int64_t>(std::floor(cfg.traffic_stops_per_trip + rng.uniform()));
    for (std::int64_t q = 0; q < n_traffic; ++q) {
      incidents.push_back({rng.uniform(1.0, cfg.route_length_km - 1.0), rng.uniform(15.0, 45.0), Incident::Traffic});
    }
    const auto n_jam = static_cast<std::int64_t>(std::floor(cfg.congestion_per_trip + rng.uniform()));
    for (std::int64_t q = 0; q < n_jam; ++q) {
      const double len = rng.uniform(cfg.congestion_min_km, cfg.congestion_max_km);
      for (int tries = 0; tries < 50; ++tries) {
        const double a = rng.uniform(1.0, std::max(1.0, cfg.route_length_km - len - 1.0));
        bool clear = true;
        for (const auto& ps : cfg.normal_stops) clear = clear && (ps.position_km < a - 1.0 || ps.position_km > a + len + 1.0);
        for (const auto& ab : abnormal) {
          if (ab.trip == k) clear = clear && (ab.position_km < a - 2.0 || ab.position_km > a + len + 2.0);
        }
        if (clear) {
          incidents.push_back({a, len, Incident::Congestion});
          break;
        }
      }
    }
    for (std::size_t e = 0; e < abnormal.size(); ++e) {
      if (abnormal[e].trip != k) continue;
      incidents.push_back({abnormal[e].position_km, abnormal[e].duration_s,
                           abnormal[e].kind == AbnormalKind::LongDwell ? Incident::Dwell : Incident::Crawl,
                           static_cast<int>(e)});
    }
    std::stable_sort(incidents.begin(), incidents.end(),
                     [](const Incident& a, const Incident& b) { return a.km < b.km; });

    // Timeline.
    std::vector<Piece> pieces;
    std::vector<std::pair<double, double>> incident_window(incidents.size());
    double t = 0.0, x = 0.0;
    const double cruise = speed_kmh / 3600.0;
    auto drive_to = [&](double target) {
      if (target <= x) return;
      const double dur = (target - x) / cruise;
      pieces.push_back({t, t + dur, x, cruise, speed_kmh, 0.0, Phase::Cruise});
      t += dur;
      x = target;
    };
    for (std::size_t q = 0; q < incidents.size(); ++q) {
      const Incident& inc = incidents[q];
      drive_to(inc.km);
      const double start = t;
      if (inc.what == Incident::Congestion) {
        const double end_km = std::min(inc.km + inc.duration, cfg.route_length_km);
        while (x < end_km) {
          const double kmh = rng.uniform(8.0, 25.0);
          const double move = std::min(rng.uniform(30.0, 120.0), (end_km - x) * 3600.0 / kmh);
          pieces.push_back({t, t + move, x, kmh / 3600.0, kmh, 0.0, Phase::Cruise});
          t += move;
          x += kmh / 3600.0 * move;
          if (x >= end_km - 1e-9) break;
          const double halt = rng.uniform(10.0, 60.0);
          pieces.push_back({t, t + halt, x, 0.0, 0.0, halt, Phase::Dwell});
          t += halt;
        }
      } else if (inc.what == Incident::Crawl) {
        // Creeping with brief pauses.
        const double end = t + inc.duration;
        const double crawl = cfg.crawl_kmh / 3600.0;
        while (t < end) {
          const double pause = std::min(rng.uniform(10.0, 35.0), end - t);
          pieces.push_back({t, t + pause, x, 0.0, 0.0, pause, Phase::Crawl});
          t += pause;
          if (t >= end) break;
          const double move = std::min(rng.uniform(20.0, 60.0), end - t);
          pieces.push_back({t, t + move, x, crawl, cfg.crawl_kmh * rng.uniform(0.8, 1.2), 0.0, Phase::Crawl});
          t += move;
          x += crawl * move;
        }
      } else {
        pieces.push_back({t, t + inc.duration, x, 0.0, 0.0, inc.duration, Phase::Dwell});
        t += inc.duration;
      }
      incident_window[q] = {start, t};
    }
    drive_to(cfg.route_length_km);
    const double t_end = t;

    // GPS outages, kept clear of the incidents.
    std::vector<std::pair<double, double>> outages;
    const auto n_drop = static_cast<std::int64_t>(std::floor(cfg.dropouts_per_trip + rng.uniform()));
    for (std::int64_t q = 0; q < n_drop; ++q) {
      for (int tries = 0; tries < 50; ++tries) {
        const double len = rng.uniform(cfg.dropout_min_s, cfg.dropout_max_s);
        const double a = rng.uniform(120.0, std::max(121.0, t_end - len - 120.0));
        bool clear = true;
        for (const auto& w : incident_window) clear = clear && (a + len < w.first - 60.0 || a > w.second + 60.0);
        if (clear) {
          outages.push_back({a, a + len});
          break;
        }
      }
    }

    // Sampling.
    Trip trip;
    trip.id = id;
    std::vector<double> sample_t;
    const auto lo = static_cast<std::int64_t>(std::ceil(cfg.interval_min_s));
    const auto hi = static_cast<std::int64_t>(std::floor(cfg.interval_max_s));
    std::size_t wake = 0;
    for (double ts = 0.0; ts <= t_end;) {
      bool lost = ts > 0.0 && rng.uniform() < cfg.report_loss;
      for (const auto& o : outages) lost = lost || (ts > o.first && ts < o.second);
      if (!lost) sample_t.push_back(ts);
      double next = ts + static_cast<double>(rng.uniform_int(lo, std::max(lo, hi)));
      if (cfg.sleep_interval_s > 0.0) {
        while (wake + 1 < pieces.size() && ts >= pieces[wake].t1) ++wake;
        const Piece& pc = pieces[wake];
        if (pc.speed == 0.0 && pc.phase == Phase::Dwell && ts - pc.t0 >= cfg.sleep_after_s) {
          next = std::min(ts + cfg.sleep_interval_s, pc.t1 + 1.0);
        }
      }
      ts = next;
    }
    std::size_t pi = 0;
    const double lat0 = cfg.origin_lat * kRad;
    for (double ts : sample_t) {
      while (pi + 1 < pieces.size() && ts >= pieces[pi].t1) ++pi;
      const Piece& pc = pieces[pi];
      const double xkm = std::min(pc.x0 + pc.speed * (ts - pc.t0), cfg.route_length_km);
      auto [lng, lat] = route_point(cfg, xkm);
      const double north = cfg.gps_noise_m * rng.normal();
      const double east = cfg.gps_noise_m * rng.normal();
      GpsPoint p;
      p.lat = lat + north / kEarthRadiusM / kRad;
      p.lng = lng + east / (kEarthRadiusM * std::cos(lat0)) / kRad;
      p.t = ts;
      if (pc.speed > 0.0 && pc.phase == Phase::Cruise) {
        p.v = std::max(5.0, pc.v_report + 2.0 * rng.normal());
      } else {
        p.v = pc.v_report;
      }
      p.s = pc.stay > 0.0 && cfg.elapsed_stay ? std::max(1.0, std::round(ts - pc.t0)) : pc.stay;
      trip.points.push_back(p);
    }
    double cum = 0.0;
    for (std::size_t i = 0; i < trip.points.size(); ++i) {
      const double d = i == 0 ? 0.0 : haversine(trip.points[i - 1], trip.points[i]);
      cum += d;
      trip.points[i].d_prev = d;
      trip.points[i].d_start = cum;
      trip.points[i].f = (trip.points[i].v <= 0.5 && trip.points[i].s > 0.0) ? EngineState::Stationary
                                                                             : EngineState::Moving;
    }
    refresh_max_interval(trip);

    // Ground truth from the pre-resampling timeline.
    for (std::size_t q = 0; q < incidents.size(); ++q) {
      const Incident& inc = incidents[q];
      if (inc.what != Incident::Dwell && inc.what != Incident::Crawl && inc.what != Incident::Planned) continue;
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < sample_t.size(); ++i) {
        if (sample_t[i] >= incident_window[q].first && sample_t[i] <= incident_window[q].second) idx.push_back(i);
      }
      auto [lng, lat] = route_point(cfg, inc.km);
      if (inc.what == Incident::Planned) {
        corpus.truth.normal.push_back({lng, lat, inc.duration, id, std::move(idx)});
      } else {
        GroundTruthStop& g = corpus.truth.abnormal[static_cast<std::size_t>(inc.event)];
        g.lng = lng;
        g.lat = lat;
        g.duration_s = inc.duration;
        g.kind = abnormal[static_cast<std::size_t>(inc.event)].kind;
        g.trip_id = id;
        g.points = std::move(idx);
      }
    }

    corpus.trips.push_back(std::move(trip));
    corpus.dates.push_back(trip_date(k));
    corpus.start_of_day.push_back(28800.0 + static_cast<double>(rng.uniform_int(0, 1800)));
  }
  return corpus;
}

std::vector<SeedLabel> default_seed_labels(const GroundTruth& truth, const std::vector<std::size_t>& pick,
                                           double radius_m) {
  std::vector<SeedLabel> out;
  auto add_abnormal = [&](const GroundTruthStop& g) {
    SeedLabel s;
    s.trip_id = g.trip_id;
    s.lng = g.lng;
    s.lat = g.lat;
    s.radius_m = radius_m;
    s.cls = 0;
    out.push_back(s);
  };
  if (pick.empty()) {
    for (const auto& g : truth.abnormal) add_abnormal(g);
  } else {
    for (std::size_t i : pick) {
      if (i >= truth.abnormal.size()) throw PreconditionError("seed pick out of range");
      add_abnormal(truth.abnormal[i]);
    }
  }
  for (const auto& n : truth.normal) {
    SeedLabel s;
    s.trip_id = n.trip_id;
    s.lng = n.lng;
    s.lat = n.lat;
    s.radius_m = radius_m;
    s.cls = 1;
    out.push_back(s);
  }
  return out;
}

void write_trips_csv(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "trip_id,date,t,lng,lat,v,s,d_prev,d\n";
  for (std::size_t k = 0; k < corpus.trips.size(); ++k) {
    const Trip& trip = corpus.trips[k];
    const double offset = k < corpus.start_of_day.size() ? corpus.start_of_day[k] : 0.0;
    const std::string date = k < corpus.dates.size() ? corpus.dates[k] : std::string("1970-01-01");
    for (const GpsPoint& p : trip.points) {
      out << trip.id << ',' << date << ',' << fmt(p.t + offset) << ',' << fmt(p.lng) << ',' << fmt(p.lat) << ','
          << fmt(p.v) << ',' << fmt(p.s) << ',' << fmt(p.d_prev.value_or(0.0)) << ','
          << fmt(p.d_start.value_or(0.0)) << '\n';
    }
  }
  if (!out) throw Error("write failed: " + path.string());
}

void write_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["abnormal"] = nlohmann::ordered_json::array();
  for (const auto& g : truth.abnormal) {
    j["abnormal"].push_back({{"lng", g.lng},
                             {"lat", g.lat},
                             {"duration_s", g.duration_s},
                             {"kind", std::string(to_string(g.kind))},
                             {"trip_id", g.trip_id},
                             {"points", g.points}});
  }
  j["normal"] = nlohmann::ordered_json::array();
  for (const auto& n : truth.normal) {
    j["normal"].push_back({{"lng", n.lng},
                           {"lat", n.lat},
                           {"duration_s", n.duration_s},
                           {"trip_id", n.trip_id},
                           {"points", n.points}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open ground truth: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("ground truth " + path.string() + ": " + e.what());
  }
  GroundTruth g;
  for (const auto& a : j.at("abnormal")) {
    GroundTruthStop s;
    s.lng = a.at("lng").get<double>();
    s.lat = a.at("lat").get<double>();
    s.duration_s = a.value("duration_s", 0.0);
    s.kind = abnormal_kind_from_string(a.value("kind", std::string("long_dwell")));
    s.trip_id = a.value("trip_id", std::string());
    if (a.contains("points")) s.points = a["points"].get<std::vector<std::size_t>>();
    g.abnormal.push_back(std::move(s));
  }
  if (j.contains("normal")) {
    for (const auto& a : j["normal"]) {
      NormalStopTruth s;
      s.lng = a.at("lng").get<double>();
      s.lat = a.at("lat").get<double>();
      s.duration_s = a.value("duration_s", 0.0);
      s.trip_id = a.value("trip_id", std::string());
      if (a.contains("points")) s.points = a["points"].get<std::vector<std::size_t>>();
      g.normal.push_back(std::move(s));
    }
  }
  return g;
}

void write_seed_labels(const std::vector<SeedLabel>& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "trip_id,lng,lat,radius_m,node_id,class\n";
  for (const auto& s : labels) {
    out << s.trip_id << ',';
    if (s.node_id) {
      out << ",,," << *s.node_id;
    } else {
      out << fmt(s.lng) << ',' << fmt(s.lat) << ',' << fmt(s.radius_m) << ',';
    }
    out << ',' << (s.cls == 0 ? "abnormal" : "normal") << '\n';
  }
}

std::vector<SeedLabel> read_seed_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open seed labels: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty seed label file");
  auto split = [](const std::string& s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      f.push_back(cell);
    }
    if (!s.empty() && s.back() == ',') f.emplace_back();
    return f;
  };
  const auto header = split(line);
  auto col = [&](const char* name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto c_cls = col("class");
  if (!c_cls) throw SchemaError("seed labels need a 'class' column");
  const auto c_trip = col("trip_id"), c_lng = col("lng"), c_lat = col("lat"), c_r = col("radius_m"),
             c_node = col("node_id");
  std::vector<SeedLabel> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    auto f = split(line);
    f.resize(std::max(f.size(), header.size()));
    auto num = [&](std::optional<std::size_t> c) -> std::optional<double> {
      if (!c || f[*c].empty()) return std::nullopt;
      double v = 0.0;
      auto [p, ec] = std::from_chars(f[*c].data(), f[*c].data() + f[*c].size(), v);
      if (ec != std::errc{} || p != f[*c].data() + f[*c].size()) {
        throw ParseError("seed labels line " + std::to_string(line_no) + ": bad number '" + f[*c] + "'");
      }
      return v;
    };
    SeedLabel s;
    const std::string& cls = f[*c_cls];
    if (cls == "abnormal" || cls == "0") {
      s.cls = 0;
    } else if (cls == "normal" || cls == "1") {
      s.cls = 1;
    } else {
      throw ParseError("seed labels line " + std::to_string(line_no) + ": unknown class '" + cls + "'");
    }
    if (c_trip) s.trip_id = f[*c_trip];
    if (auto n = num(c_node)) {
      if (*n < 0 || *n != std::floor(*n)) throw ParseError("seed labels line " + std::to_string(line_no) + ": bad node_id");
      s.node_id = static_cast<std::size_t>(*n);
    } else {
      auto lng = num(c_lng), lat = num(c_lat), r = num(c_r);
      if (!lng || !lat) {
        throw ParseError("seed labels line " + std::to_string(line_no) + ": need node_id or lng,lat");
      }
      s.lng = *lng;
      s.lat = *lat;
      s.radius_m = r.value_or(100.0);
    }
    out.push_back(s);
  }
  return out;
}

void export_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_trips_csv(corpus, dir / "trips.csv");
  write_ground_truth(corpus.truth, dir / "ground_truth.json");
  write_seed_labels(default_seed_labels(corpus.truth), dir / "seed_labels.csv");
}

}  // namespace asd

#include "asd/artifacts.hpp"

#include <charconv>
#include <fstream>

#include "asd/error.hpp"

namespace asd::artifacts {

namespace {

std::string num(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

template <class T>
ojson opt(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson();
}

template <class T>
std::optional<T> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

Provenance provenance_from_string(const std::string& s) {
  for (Provenance p : {Provenance::Seed, Provenance::Propagated, Provenance::Pseudo, Provenance::Unlabeled}) {
    if (s == to_string(p)) return p;
  }
  throw SchemaError("unknown label provenance '" + s + "'");
}

ojson vec3(const Vec3& v) { return ojson::array({v[0], v[1], v[2]}); }

Vec3 vec3_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

void write_json(const std::filesystem::path& path, const ojson& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

// ---- trips ---------------------------------------------------------------

ojson trips_to_json(const std::vector<Trip>& trips) {
  ojson arr = ojson::array();
  for (const Trip& t : trips) {
    ojson pts = ojson::array();
    for (const GpsPoint& p : t.points) {
      ojson f;
      if (p.f) f = *p.f == EngineState::Stationary ? "stationary" : "moving";
      pts.push_back({{"lng", p.lng},
                     {"lat", p.lat},
                     {"t", p.t},
                     {"v", p.v},
                     {"s", p.s},
                     {"f", f},
                     {"d_prev", opt(p.d_prev)},
                     {"d", opt(p.d_start)}});
    }
    arr.push_back({{"id", t.id}, {"max_interval", t.max_interval}, {"points", pts}});
  }
  return {{"trips", arr}};
}

std::vector<Trip> trips_from_json(const json& j) {
  std::vector<Trip> out;
  for (const auto& jt : j.at("trips")) {
    Trip t;
    t.id = jt.at("id").get<std::string>();
    t.max_interval = jt.value("max_interval", 0.0);
    for (const auto& jp : jt.at("points")) {
      GpsPoint p;
      p.lng = jp.at("lng").get<double>();
      p.lat = jp.at("lat").get<double>();
      p.t = jp.at("t").get<double>();
      p.v = jp.at("v").get<double>();
      p.s = jp.at("s").get<double>();
      if (jp.contains("f") && !jp["f"].is_null()) {
        p.f = jp["f"].get<std::string>() == "stationary" ? EngineState::Stationary : EngineState::Moving;
      }
      p.d_prev = opt_from<double>(jp, "d_prev");
      p.d_start = opt_from<double>(jp, "d");
      t.points.push_back(p);
    }
    out.push_back(std::move(t));
  }
  return out;
}

ojson to_json(const IngestReport& r) {
  return {{"rows_read", r.rows_read}, {"rows_dropped", r.rows_dropped}, {"trips", r.trips}, {"reasons", r.reasons}};
}

// ---- stops and segments --------------------------------------------------

ojson stops_to_json(const StopStage& s) {
  ojson per_trip = ojson::array();
  for (const auto& trip : s.stops) {
    ojson arr = ojson::array();
    for (const StopEvent& e : trip) {
      arr.push_back({{"point_index", e.point_index},
                     {"kind", std::string(to_string(e.kind))},
                     {"est_velocity", e.est_velocity},
                     {"stay", e.stay}});
    }
    per_trip.push_back(arr);
  }
  return {{"route_mean_stay", s.route_mean_stay}, {"stops", per_trip}};
}

StopStage stops_from_json(const json& j) {
  StopStage s;
  s.route_mean_stay = j.at("route_mean_stay").get<double>();
  for (const auto& trip : j.at("stops")) {
    std::vector<StopEvent> v;
    for (const auto& je : trip) {
      StopEvent e;
      e.point_index = je.at("point_index").get<std::size_t>();
      e.kind = stop_kind_from_string(je.at("kind").get<std::string>());
      e.est_velocity = je.at("est_velocity").get<double>();
      e.stay = je.at("stay").get<double>();
      v.push_back(e);
    }
    s.stops.push_back(std::move(v));
  }
  return s;
}

ojson segments_to_json(const std::vector<std::vector<Segment>>& segments) {
  ojson per_trip = ojson::array();
  for (const auto& trip : segments) {
    ojson arr = ojson::array();
    for (const Segment& s : trip) {
      arr.push_back({{"trip_id", s.trip_id},
                     {"start_idx", s.start_idx},
                     {"end_idx", s.end_idx},
                     {"length_m", s.length_m},
                     {"v_mean", s.stats.v_mean},
                     {"v_max", s.stats.v_max},
                     {"n_points", s.stats.n_points},
                     {"total_stay", s.stats.total_stay}});
    }
    per_trip.push_back(arr);
  }
  return {{"segments", per_trip}};
}

std::vector<std::vector<Segment>> segments_from_json(const json& j) {
  std::vector<std::vector<Segment>> out;
  for (const auto& trip : j.at("segments")) {
    std::vector<Segment> v;
    for (const auto& js : trip) {
      Segment s;
      s.trip_id = js.at("trip_id").get<std::string>();
      s.start_idx = js.at("start_idx").get<std::size_t>();
      s.end_idx = js.at("end_idx").get<std::size_t>();
      s.length_m = js.at("length_m").get<double>();
      s.stats.v_mean = js.at("v_mean").get<double>();
      s.stats.v_max = js.at("v_max").get<double>();
      s.stats.n_points = js.at("n_points").get<std::size_t>();
      s.stats.total_stay = js.at("total_stay").get<double>();
      v.push_back(std::move(s));
    }
    out.push_back(std::move(v));
  }
  return out;
}

// ---- features ------------------------------------------------------------

ojson features_to_json(const std::vector<NodeFeature>& features, const LtigaReport* report) {
  ojson arr = ojson::array();
  for (const NodeFeature& f : features) {
    arr.push_back({{"node_id", f.node_id},
                   {"segment_id", f.segment_id},
                   {"trip_id", f.trip_id},
                   {"point_index", f.point_index},
                   {"t", f.t},
                   {"lng", f.lng},
                   {"lat", f.lat},
                   {"stay", f.stay},
                   {"kind", std::string(to_string(f.kind))},
                   {"tis", f.tis},
                   {"msd", f.msd},
                   {"tta_k", f.tta_k},
                   {"confidence", f.confidence},
                   {"refined", vec3(f.refined)},
                   {"smoothed", f.smoothed}});
  }
  ojson j;
  if (report) {
    j["ltiga"] = {{"segments_total", report->segments_total},
                  {"segments_smoothed", report->segments_smoothed},
                  {"nodes_smoothed", report->nodes_smoothed},
                  {"zero_norm_vectors", report->zero_norm_vectors}};
  }
  j["nodes"] = arr;
  return j;
}

std::vector<NodeFeature> features_from_json(const json& j) {
  std::vector<NodeFeature> out;
  for (const auto& jf : j.at("nodes")) {
    NodeFeature f;
    f.node_id = jf.at("node_id").get<std::size_t>();
    f.segment_id = jf.at("segment_id").get<std::size_t>();
    f.trip_id = jf.at("trip_id").get<std::string>();
    f.point_index = jf.at("point_index").get<std::size_t>();
    f.t = jf.at("t").get<double>();
    f.lng = jf.at("lng").get<double>();
    f.lat = jf.at("lat").get<double>();
    f.stay = jf.at("stay").get<double>();
    f.kind = stop_kind_from_string(jf.at("kind").get<std::string>());
    f.tis = jf.at("tis").get<double>();
    f.msd = jf.at("msd").get<double>();
    f.tta_k = jf.at("tta_k").get<double>();
    f.confidence = jf.at("confidence").get<double>();
    f.refined = vec3_from(jf.at("refined"));
    f.smoothed = jf.value("smoothed", false);
    out.push_back(std::move(f));
  }
  return out;
}

void write_features_csv(const std::filesystem::path& path, const std::vector<NodeFeature>& features) {
  auto out = open_out(path);
  out << "node_id,segment_id,trip_id,point_index,t,lng,lat,stay,kind,tis,msd,tta_k,confidence,"
         "refined_tis,refined_msd,refined_tta_k,smoothed\n";
  for (const NodeFeature& f : features) {
    out << f.node_id << ',' << f.segment_id << ',' << f.trip_id << ',' << f.point_index << ',' << num(f.t) << ','
        << num(f.lng) << ',' << num(f.lat) << ',' << num(f.stay) << ',' << to_string(f.kind) << ',' << num(f.tis)
        << ',' << num(f.msd) << ',' << num(f.tta_k) << ',' << num(f.confidence) << ',' << num(f.refined[0]) << ','
        << num(f.refined[1]) << ',' << num(f.refined[2]) << ',' << (f.smoothed ? 1 : 0) << '\n';
  }
}

// ---- graph ---------------------------------------------------------------

ojson graph_to_json(const StGraph& g) {
  const GraphStats st = g.stats();
  ojson nodes = ojson::array();
  for (const GraphNode& n : g.nodes()) {
    nodes.push_back({{"node_id", n.node_id}, {"segment_id", n.segment_id}, {"x", vec3(n.x)}, {"t", n.t}});
  }
  ojson edges = ojson::array();
  for (const Edge& e : g.edges()) {
    edges.push_back({{"i", e.i}, {"j", e.j}, {"kind", e.kind == EdgeKind::Intra ? "intra" : "inter"}, {"weight", e.weight}});
  }
  return {{"stats",
           {{"nodes", st.nodes},
            {"edges", st.edges},
            {"intra_edges", st.intra_edges},
            {"inter_edges", st.inter_edges},
            {"skipped_nodes", st.skipped_nodes}}},
          {"nodes", nodes},
          {"edges", edges}};
}

StGraph graph_from_json(const json& j) {
  std::vector<GraphNode> nodes;
  for (const auto& jn : j.at("nodes")) {
    GraphNode n;
    n.node_id = jn.at("node_id").get<std::size_t>();
    n.segment_id = jn.at("segment_id").get<std::size_t>();
    n.x = vec3_from(jn.at("x"));
    n.t = jn.at("t").get<double>();
    nodes.push_back(n);
  }
  std::vector<Edge> edges;
  for (const auto& je : j.at("edges")) {
    Edge e;
    e.i = je.at("i").get<std::size_t>();
    e.j = je.at("j").get<std::size_t>();
    e.kind = je.at("kind").get<std::string>() == "intra" ? EdgeKind::Intra : EdgeKind::Inter;
    e.weight = je.at("weight").get<double>();
    edges.push_back(e);
  }
  return StGraph(std::move(nodes), std::move(edges), j.at("stats").at("skipped_nodes").get<std::size_t>());
}

void write_edges_csv(const std::filesystem::path& path, const StGraph& g) {
  auto out = open_out(path);
  out << "i,j,kind,weight\n";
  for (const Edge& e : g.edges()) {
    out << e.i << ',' << e.j << ',' << (e.kind == EdgeKind::Intra ? "intra" : "inter") << ',' << num(e.weight) << '\n';
  }
}

// ---- labels --------------------------------------------------------------

namespace {

ojson label_state_json(const LabelState& s) {
  std::vector<std::string> prov;
  for (Provenance p : s.provenance) prov.emplace_back(to_string(p));
  return {{"F", s.F},
          {"provenance", prov},
          {"seed_mask", s.seed_mask},
          {"hard_label", s.hard_label},
          {"energy", s.energy},
          {"iterations", s.iterations},
          {"converged", s.converged}};
}

LabelState label_state_from(const json& j) {
  LabelState s;
  s.F = j.at("F").get<std::vector<double>>();
  for (const auto& p : j.at("provenance")) s.provenance.push_back(provenance_from_string(p.get<std::string>()));
  s.seed_mask = j.at("seed_mask").get<std::vector<std::uint8_t>>();
  s.hard_label = j.at("hard_label").get<std::vector<int>>();
  s.energy = j.at("energy").get<std::vector<double>>();
  s.iterations = j.at("iterations").get<std::size_t>();
  s.converged = j.at("converged").get<bool>();
  return s;
}

}  // namespace

ojson propagation_to_json(const PropagationStage& p) {
  ojson seeds = ojson::array();
  for (const auto& [node, cls] : p.seeds) seeds.push_back({{"node", node}, {"class", cls}});
  return {{"counts",
           {{"seed_abnormal", p.counts.seed_abnormal},
            {"seed_normal", p.counts.seed_normal},
            {"pseudo_abnormal", p.counts.pseudo_abnormal},
            {"pseudo_normal", p.counts.pseudo_normal},
            {"unlabeled", p.counts.unlabeled}}},
          {"seeds", seeds},
          {"propagated", label_state_json(p.propagated)},
          {"gated", label_state_json(p.gated)}};
}

PropagationStage propagation_from_json(const json& j) {
  PropagationStage p;
  for (const auto& s : j.at("seeds")) p.seeds[s.at("node").get<std::size_t>()] = s.at("class").get<int>();
  p.propagated = label_state_from(j.at("propagated"));
  p.gated = label_state_from(j.at("gated"));
  const auto& c = j.at("counts");
  p.counts.seed_abnormal = c.at("seed_abnormal").get<std::size_t>();
  p.counts.seed_normal = c.at("seed_normal").get<std::size_t>();
  p.counts.pseudo_abnormal = c.at("pseudo_abnormal").get<std::size_t>();
  p.counts.pseudo_normal = c.at("pseudo_normal").get<std::size_t>();
  p.counts.unlabeled = c.at("unlabeled").get<std::size_t>();
  return p;
}

void write_labels_csv(const std::filesystem::path& path, const PropagationStage& p,
                      const std::vector<NodeFeature>& features) {
  auto out = open_out(path);
  out << "node_id,trip_id,point_index,p_abnormal,p_normal,provenance,label\n";
  const LabelState& g = p.gated;
  for (std::size_t i = 0; i < g.size(); ++i) {
    out << i << ',' << (i < features.size() ? features[i].trip_id : "") << ','
        << (i < features.size() ? features[i].point_index : 0) << ',' << num(p.propagated.p_abnormal(i)) << ','
        << num(p.propagated.p_normal(i)) << ',' << to_string(g.provenance[i]) << ',' << g.hard_label[i] << '\n';
  }
}

// ---- model ---------------------------------------------------------------

namespace {

ojson gcn_model_json(const GcnModel& m) {
  return {{"in_dim", m.in_dim},   {"hidden", m.hidden}, {"out_dim", m.out_dim}, {"n_edge", m.n_edge},
          {"in_mean", m.in_mean}, {"in_std", m.in_std}, {"params", m.params}};
}

}  // namespace

ojson model_to_json(const TrainStage& t) {
  ojson rounds = ojson::array();
  for (const auto& r : t.final.rounds) {
    rounds.push_back({{"round", r.round}, {"added", r.added}, {"added_abnormal", r.added_abnormal}, {"labeled", r.labeled}});
  }
  return {{"model", gcn_model_json(t.final.model)},
          {"base_model", gcn_model_json(t.base_model)},
          {"self_training", rounds},
          {"epochs_run", t.final.history.size()}};
}

GcnModel model_from_json(const json& j) {
  const json& m = j.contains("model") ? j.at("model") : j;
  GcnModel g;
  g.in_dim = m.at("in_dim").get<std::size_t>();
  g.hidden = m.at("hidden").get<std::size_t>();
  g.out_dim = m.at("out_dim").get<std::size_t>();
  g.n_edge = m.at("n_edge").get<std::size_t>();
  g.in_mean = m.at("in_mean").get<std::vector<double>>();
  g.in_std = m.at("in_std").get<std::vector<double>>();
  g.params = m.at("params").get<std::vector<double>>();
  if (g.params.size() != g.size()) throw SchemaError("model: parameter count does not match the layout");
  return g;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<LossBreakdown>& history) {
  auto out = open_out(path);
  out << "epoch,sup,sparsity,temporal,total\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    const LossBreakdown& l = history[e];
    out << e << ',' << num(l.sup) << ',' << num(l.sparsity) << ',' << num(l.temporal) << ',' << num(l.total) << '\n';
  }
}

// ---- predictions ---------------------------------------------------------

ojson predictions_to_json(const TrainStage& t, const std::vector<NodeFeature>& features, double threshold) {
  const auto& after = t.final.probs;
  const auto& before = t.probs_before;
  ojson nodes = ojson::array();
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double pa = after[i * kClasses + kAbnormal];
    nodes.push_back({{"node_id", i},
                     {"trip_id", features[i].trip_id},
                     {"point_index", features[i].point_index},
                     {"segment_id", features[i].segment_id},
                     {"p_abnormal", pa},
                     {"p_normal", after[i * kClasses + kNormal]},
                     {"p_abnormal_before", before[i * kClasses + kAbnormal]},
                     {"p_normal_before", before[i * kClasses + kNormal]},
                     {"label", t.final.labels[i]},
                     {"abnormal", pa > threshold}});
  }
  return {{"threshold", threshold}, {"nodes", nodes}};
}

Predictions predictions_from_json(const json& j) {
  Predictions p;
  for (const auto& n : j.at("nodes")) {
    p.probs_after.push_back(n.at("p_abnormal").get<double>());
    p.probs_after.push_back(n.at("p_normal").get<double>());
    p.probs_before.push_back(n.at("p_abnormal_before").get<double>());
    p.probs_before.push_back(n.at("p_normal_before").get<double>());
    p.labels.push_back(n.at("label").get<int>());
  }
  return p;
}

// ---- evaluation outputs --------------------------------------------------

void write_matches_csv(const std::filesystem::path& path, const MatchResult& m) {
  auto out = open_out(path);
  out << "truth_lng,truth_lat,pred_lng,pred_lat,distance_m\n";
  if (m.failed) return;
  for (const MatchRow& r : m.rows) {
    out << num(r.truth.lng) << ',' << num(r.truth.lat) << ',' << num(r.predicted.lng) << ',' << num(r.predicted.lat)
        << ',' << num(r.distance_m) << '\n';
  }
}

ojson overlay_geojson(const GroundTruth& truth, const std::vector<NodeFeature>& features,
                      const std::vector<double>& probs_after, const MatchResult& match, double threshold) {
  ojson feats = ojson::array();
  auto point = [](double lng, double lat) { return ojson{{"type", "Point"}, {"coordinates", {lng, lat}}}; };
  for (const auto& g : truth.abnormal) {
    feats.push_back({{"type", "Feature"},
                     {"geometry", point(g.lng, g.lat)},
                     {"properties",
                      {{"role", "truth"},
                       {"trip_id", g.trip_id},
                       {"kind", std::string(to_string(g.kind))},
                       {"duration_s", g.duration_s}}}});
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double pa = probs_after[i * kClasses + kAbnormal];
    if (!(pa > threshold)) continue;
    feats.push_back({{"type", "Feature"},
                     {"geometry", point(features[i].lng, features[i].lat)},
                     {"properties",
                      {{"role", "predicted"},
                       {"node_id", i},
                       {"trip_id", features[i].trip_id},
                       {"segment_id", features[i].segment_id},
                       {"p_abnormal", pa}}}});
  }
  if (!match.failed) {
    for (const MatchRow& r : match.rows) {
      feats.push_back({{"type", "Feature"},
                       {"geometry",
                        {{"type", "LineString"},
                         {"coordinates", {{r.truth.lng, r.truth.lat}, {r.predicted.lng, r.predicted.lat}}}}},
                       {"properties", {{"role", "match"}, {"distance_m", r.distance_m}}}});
    }
  }
  return {{"type", "FeatureCollection"}, {"features", feats}};
}

void write_run(const std::filesystem::path& dir, const PipelineResult& r, const PipelineConfig& cfg,
               const GroundTruth& truth, const IngestReport* ingest, const std::vector<Trip>* trips) {
  std::filesystem::create_directories(dir);
  write_json(dir / kConfig, to_json(cfg));
  if (trips) write_json(dir / kTrips, trips_to_json(*trips));
  if (ingest) write_json(dir / kIngestReport, to_json(*ingest));
  write_json(dir / kStops, stops_to_json(r.stops));
  write_json(dir / kSegments, segments_to_json(r.segments));
  write_json(dir / kFeatures, features_to_json(r.indicators));
  write_features_csv(dir / kFeaturesCsv, r.indicators);
  write_json(dir / kRefined, features_to_json(r.refined, &r.ltiga_report));
  write_features_csv(dir / kRefinedCsv, r.refined);
  write_json(dir / kGraph, graph_to_json(r.graph));
  write_edges_csv(dir / kEdges, r.graph);
  write_json(dir / kLabels, propagation_to_json(r.propagation));
  write_labels_csv(dir / kLabelsCsv, r.propagation, r.refined);
  write_json(dir / kModel, model_to_json(r.training));
  write_history_csv(dir / kHistory, r.training.final.history);
  write_json(dir / kPredictions, predictions_to_json(r.training, r.refined, cfg.decision_threshold));
  write_json(dir / kReport, to_json(r.report));
  write_matches_csv(dir / kMatches, r.match);
  write_json(dir / kOverlay, overlay_geojson(truth, r.refined, r.training.final.probs, r.match, cfg.decision_threshold));
}

}  // namespace asd::artifacts

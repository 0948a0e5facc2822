#include "asd/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "asd/error.hpp"
#include "asd/rng.hpp"

namespace asd {

using ojson = nlohmann::ordered_json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

// Reads the keys of one config section, rejecting anything unknown.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw SchemaError("config: '" + name_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw SchemaError("config: unknown key '" + name_ + "." + it.key() + "'");
    }
  }
  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("config: bad value for '" + name_ + "." + key + "': " + e.what());
    }
  }
  const nlohmann::json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

bool uses_fixed_segments(Variant v) { return v == Variant::FixedSeg || v == Variant::GcnOnly; }

}  // namespace

// ---- variants ------------------------------------------------------------

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "Full";
    case Variant::FixedSeg: return "FixedSeg";
    case Variant::NoLtiga: return "NoLtiga";
    case Variant::NoRescale: return "NoRescale";
    case Variant::GcnOnly: return "GcnOnly";
  }
  return "Full";
}

std::string_view variant_flag(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::FixedSeg: return "fixed-seg";
    case Variant::NoLtiga: return "no-ltiga";
    case Variant::NoRescale: return "no-rescale";
    case Variant::GcnOnly: return "gcn-only";
  }
  return "full";
}

Variant variant_from_string(std::string_view s) {
  const std::string l = lower(s);
  for (Variant v : all_variants()) {
    if (l == lower(to_string(v)) || l == variant_flag(v)) return v;
  }
  throw PreconditionError("unknown variant '" + std::string(s) +
                          "' (expected full, fixed-seg, no-ltiga, no-rescale, gcn-only)");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::Full, Variant::FixedSeg, Variant::NoLtiga, Variant::NoRescale,
                                      Variant::GcnOnly};
  return v;
}

// ---- config --------------------------------------------------------------

void PipelineConfig::validate() const {
  detector.validate();
  ltiga.validate();
  gate.validate();
  train.validate();
  if (alpha < 0 || beta < 0) throw PreconditionError("config: alpha and beta must be >= 0");
  if (!(fixed_interval_m > 0)) throw PreconditionError("config: fixed_interval_m must be positive");
  if (indicators.k == 0) throw PreconditionError("config: indicators.k must be >= 1");
  if (!(graph.dt_max > 0) || !(graph.sigma_rbf > 0)) throw PreconditionError("config: bad graph parameters");
  if (!(decision_threshold > 0 && decision_threshold < 1)) {
    throw PreconditionError("config: decision_threshold must lie in (0, 1)");
  }
  synth.validate();
}

ojson to_json(const PipelineConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["variant"] = std::string(to_string(c.variant));
  j["backend"] = c.backend == kernels::Backend::OpenMP ? "openmp" : "serial";
  j["ingest"] = {{"delimiter", std::string(1, c.ingest.delimiter)},
                 {"strict", c.ingest.strict},
                 {"columns",
                  {{"trip", c.columns.trip},
                   {"date", c.columns.date},
                   {"t", c.columns.t},
                   {"lng", c.columns.lng},
                   {"lat", c.columns.lat},
                   {"v", c.columns.v},
                   {"s", c.columns.s},
                   {"d_prev", c.columns.d_prev},
                   {"d", c.columns.d_start},
                   {"f", c.columns.f}}}};
  j["detector"] = {{"d_threshold", c.detector.d_threshold},
                   {"v_low", c.detector.v_low},
                   {"s_min", c.detector.s_min},
                   {"v_margin", c.detector.v_margin},
                   {"eps_v", c.detector.eps_v},
                   {"duration_factor", c.detector.duration_factor},
                   {"route_mean_stay", c.detector.route_mean_stay},
                   {"default_route_stay", c.detector.default_route_stay}};
  j["segmentation"] = {{"alpha", c.alpha}, {"beta", c.beta}, {"fixed_interval_m", c.fixed_interval_m}};
  j["indicators"] = {{"delta", c.indicators.delta},
                     {"k", c.indicators.k},
                     {"eps", c.indicators.eps},
                     {"merge_runs", c.indicators.merge_runs}};
  j["ltiga"] = {{"sigma", c.ltiga.sigma}, {"k", c.ltiga.k},           {"eps", c.ltiga.eps},
                {"tau_c", c.ltiga.tau_c}, {"rescale", c.ltiga.rescale}, {"enabled", c.ltiga.enabled}};
  j["graph"] = {{"dt_max", c.graph.dt_max},
                {"inter_knn_cap", c.graph.inter_knn_cap},
                {"min_sim", c.graph.min_sim},
                {"sigma_rbf", c.graph.sigma_rbf}};
  j["propagation"] = {{"max_iters", c.propagation.max_iters}, {"tol", c.propagation.tol}};
  j["gate"] = {{"tau_abnormal", c.gate.tau_abnormal},
               {"tau_normal", c.gate.tau_normal},
               {"max_new_abnormal", c.gate.max_new_abnormal},
               {"max_new_normal", c.gate.max_new_normal}};
  j["train"] = {{"lambda1", c.train.lambda1},
                {"lambda2", c.train.lambda2},
                {"learning_rate", c.train.learning_rate},
                {"epochs", c.train.epochs},
                {"self_train_rounds", c.train.self_train_rounds},
                {"tau", c.train.tau},
                {"hidden", c.train.hidden},
                {"class_weighting", c.train.class_weighting},
                {"balanced_pseudo_labels", c.train.balanced_pseudo_labels}};
  j["eval"] = {{"truth_radius_m", c.truth_radius_m}, {"decision_threshold", c.decision_threshold}};
  ojson stops = ojson::array();
  for (const auto& s : c.synth.normal_stops) stops.push_back({{"position_km", s.position_km}, {"duration_s", s.duration_s}});
  ojson planted = ojson::array();
  for (const auto& a : c.synth.abnormal) {
    planted.push_back({{"position_km", a.position_km},
                       {"duration_s", a.duration_s},
                       {"kind", std::string(to_string(a.kind))},
                       {"trip", a.trip}});
  }
  const SynthConfig& s = c.synth;
  j["synth"] = {{"route_length_km", s.route_length_km},
                {"n_trips", s.n_trips},
                {"interval_min_s", s.interval_min_s},
                {"interval_max_s", s.interval_max_s},
                {"gps_noise_m", s.gps_noise_m},
                {"cruise_kmh", s.cruise_kmh},
                {"normal_stops", stops},
                {"abnormal", planted},
                {"n_abnormal", s.n_abnormal},
                {"long_dwell_min_s", s.long_dwell_min_s},
                {"long_dwell_max_s", s.long_dwell_max_s},
                {"crawl_min_s", s.crawl_min_s},
                {"crawl_max_s", s.crawl_max_s},
                {"crawl_kmh", s.crawl_kmh},
                {"traffic_stops_per_trip", s.traffic_stops_per_trip},
                {"dropouts_per_trip", s.dropouts_per_trip},
                {"congestion_per_trip", s.congestion_per_trip},
                {"congestion_min_km", s.congestion_min_km},
                {"congestion_max_km", s.congestion_max_km},
                {"dropout_min_s", s.dropout_min_s},
                {"dropout_max_s", s.dropout_max_s},
                {"sleep_after_s", s.sleep_after_s},
                {"sleep_interval_s", s.sleep_interval_s},
                {"elapsed_stay", s.elapsed_stay},
                {"report_loss", s.report_loss},
                {"origin_lng", s.origin_lng},
                {"origin_lat", s.origin_lat},
                {"bearing_deg", s.bearing_deg}};
  return j;
}

PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig c) {
  Section root(j, "config");
  root.get("seed", c.seed);
  if (const auto* v = root.sub("variant")) c.variant = variant_from_string(v->get<std::string>());
  if (const auto* b = root.sub("backend")) {
    const std::string name = lower(b->get<std::string>());
    if (name == "serial") {
      c.backend = kernels::Backend::Serial;
    } else if (name == "openmp") {
      c.backend = kernels::Backend::OpenMP;
    } else {
      throw SchemaError("config: backend must be 'serial' or 'openmp'");
    }
  }
  if (const auto* d = root.sub("ingest")) {
    Section s(*d, "ingest");
    std::string delim(1, c.ingest.delimiter);
    s.get("delimiter", delim);
    if (delim == "\\t") delim = "\t";
    if (delim.size() != 1) throw SchemaError("config: ingest.delimiter must be one character");
    c.ingest.delimiter = delim[0];
    s.get("strict", c.ingest.strict);
    if (const auto* m = s.sub("columns")) {
      Section cols(*m, "ingest.columns");
      cols.get("trip", c.columns.trip);
      cols.get("date", c.columns.date);
      cols.get("t", c.columns.t);
      cols.get("lng", c.columns.lng);
      cols.get("lat", c.columns.lat);
      cols.get("v", c.columns.v);
      cols.get("s", c.columns.s);
      cols.get("d_prev", c.columns.d_prev);
      cols.get("d", c.columns.d_start);
      cols.get("f", c.columns.f);
    }
  }
  if (const auto* d = root.sub("detector")) {
    Section s(*d, "detector");
    s.get("d_threshold", c.detector.d_threshold);
    s.get("v_low", c.detector.v_low);
    s.get("s_min", c.detector.s_min);
    s.get("v_margin", c.detector.v_margin);
    s.get("eps_v", c.detector.eps_v);
    s.get("duration_factor", c.detector.duration_factor);
    s.get("route_mean_stay", c.detector.route_mean_stay);
    s.get("default_route_stay", c.detector.default_route_stay);
  }
  if (const auto* d = root.sub("segmentation")) {
    Section s(*d, "segmentation");
    s.get("alpha", c.alpha);
    s.get("beta", c.beta);
    s.get("fixed_interval_m", c.fixed_interval_m);
  }
  if (const auto* d = root.sub("indicators")) {
    Section s(*d, "indicators");
    s.get("delta", c.indicators.delta);
    s.get("k", c.indicators.k);
    s.get("eps", c.indicators.eps);
    s.get("merge_runs", c.indicators.merge_runs);
  }
  if (const auto* d = root.sub("ltiga")) {
    Section s(*d, "ltiga");
    s.get("sigma", c.ltiga.sigma);
    s.get("k", c.ltiga.k);
    s.get("eps", c.ltiga.eps);
    s.get("tau_c", c.ltiga.tau_c);
    s.get("rescale", c.ltiga.rescale);
    s.get("enabled", c.ltiga.enabled);
  }
  if (const auto* d = root.sub("graph")) {
    Section s(*d, "graph");
    s.get("dt_max", c.graph.dt_max);
    s.get("inter_knn_cap", c.graph.inter_knn_cap);
    s.get("min_sim", c.graph.min_sim);
    s.get("sigma_rbf", c.graph.sigma_rbf);
  }
  if (const auto* d = root.sub("propagation")) {
    Section s(*d, "propagation");
    s.get("max_iters", c.propagation.max_iters);
    s.get("tol", c.propagation.tol);
  }
  if (const auto* d = root.sub("gate")) {
    Section s(*d, "gate");
    s.get("tau_abnormal", c.gate.tau_abnormal);
    s.get("tau_normal", c.gate.tau_normal);
    s.get("max_new_abnormal", c.gate.max_new_abnormal);
    s.get("max_new_normal", c.gate.max_new_normal);
  }
  if (const auto* d = root.sub("train")) {
    Section s(*d, "train");
    s.get("lambda1", c.train.lambda1);
    s.get("lambda2", c.train.lambda2);
    s.get("learning_rate", c.train.learning_rate);
    s.get("epochs", c.train.epochs);
    s.get("self_train_rounds", c.train.self_train_rounds);
    s.get("tau", c.train.tau);
    s.get("hidden", c.train.hidden);
    s.get("class_weighting", c.train.class_weighting);
    s.get("balanced_pseudo_labels", c.train.balanced_pseudo_labels);
  }
  if (const auto* d = root.sub("eval")) {
    Section s(*d, "eval");
    s.get("truth_radius_m", c.truth_radius_m);
    s.get("decision_threshold", c.decision_threshold);
  }
  if (const auto* d = root.sub("synth")) {
    Section s(*d, "synth");
    SynthConfig& y = c.synth;
    s.get("route_length_km", y.route_length_km);
    s.get("n_trips", y.n_trips);
    s.get("interval_min_s", y.interval_min_s);
    s.get("interval_max_s", y.interval_max_s);
    s.get("gps_noise_m", y.gps_noise_m);
    s.get("cruise_kmh", y.cruise_kmh);
    if (const auto* ns = s.sub("normal_stops")) {
      y.normal_stops.clear();
      for (const auto& e : *ns) {
        PlannedStop p;
        Section es(e, "synth.normal_stops[]");
        es.get("position_km", p.position_km);
        es.get("duration_s", p.duration_s);
        y.normal_stops.push_back(p);
      }
    }
    if (const auto* ab = s.sub("abnormal")) {
      y.abnormal.clear();
      for (const auto& e : *ab) {
        PlannedAbnormal p;
        Section es(e, "synth.abnormal[]");
        std::string kind = std::string(to_string(p.kind));
        es.get("position_km", p.position_km);
        es.get("duration_s", p.duration_s);
        es.get("kind", kind);
        es.get("trip", p.trip);
        p.kind = abnormal_kind_from_string(kind);
        y.abnormal.push_back(p);
      }
    }
    s.get("n_abnormal", y.n_abnormal);
    s.get("long_dwell_min_s", y.long_dwell_min_s);
    s.get("long_dwell_max_s", y.long_dwell_max_s);
    s.get("crawl_min_s", y.crawl_min_s);
    s.get("crawl_max_s", y.crawl_max_s);
    s.get("crawl_kmh", y.crawl_kmh);
    s.get("traffic_stops_per_trip", y.traffic_stops_per_trip);
    s.get("dropouts_per_trip", y.dropouts_per_trip);
    s.get("congestion_per_trip", y.congestion_per_trip);
    s.get("congestion_min_km", y.congestion_min_km);
    s.get("congestion_max_km", y.congestion_max_km);
    s.get("dropout_min_s", y.dropout_min_s);
    s.get("dropout_max_s", y.dropout_max_s);
    s.get("sleep_after_s", y.sleep_after_s);
    s.get("sleep_interval_s", y.sleep_interval_s);
    s.get("elapsed_stay", y.elapsed_stay);
    s.get("report_loss", y.report_loss);
    s.get("origin_lng", y.origin_lng);
    s.get("origin_lat", y.origin_lat);
    s.get("bearing_deg", y.bearing_deg);
  }
  c.synth.seed = c.seed;
  return c;
}

// ---- stages --------------------------------------------------------------

IngestResult stage_ingest(const std::filesystem::path& path, const PipelineConfig& cfg) {
  IngestOptions opt = cfg.ingest;
  opt.eps_v = cfg.detector.eps_v;
  return load_trips(path, cfg.columns, opt);
}

StopStage stage_stops(const std::vector<Trip>& trips, const PipelineConfig& cfg) {
  StopStage out;
  DetectorConfig det = cfg.detector;
  det.validate();
  if (det.route_mean_stay <= 0.0) det.route_mean_stay = route_mean_stay(trips, det);
  out.route_mean_stay = det.route_mean_stay;
  for (const Trip& trip : trips) out.stops.push_back(detect_stops(trip, det));
  return out;
}

std::vector<std::vector<Segment>> stage_segments(const std::vector<Trip>& trips, const PipelineConfig& cfg) {
  std::vector<std::vector<Segment>> out;
  for (const Trip& trip : trips) {
    if (uses_fixed_segments(cfg.variant)) {
      out.push_back(segment_fixed(trip, cfg.fixed_interval_m));
    } else {
      out.push_back(segment_trip(trip, compute_thresholds(trip, cfg.alpha, cfg.beta)));
    }
  }
  return out;
}

std::vector<NodeFeature> stage_indicators(const std::vector<Trip>& trips,
                                          const std::vector<std::vector<Segment>>& segments,
                                          const StopStage& stops, const PipelineConfig& cfg) {
  if (segments.size() != trips.size() || stops.stops.size() != trips.size()) {
    throw PreconditionError("indicators: stage inputs cover different trips");
  }
  std::vector<NodeFeature> out;
  std::size_t seg_base = 0;
  for (std::size_t k = 0; k < trips.size(); ++k) {
    auto f = features_for_trip(trips[k], segments[k], stops.stops[k], cfg.indicators, out.size(), seg_base);
    out.insert(out.end(), std::make_move_iterator(f.begin()), std::make_move_iterator(f.end()));
    seg_base += segments[k].size();
  }
  return out;
}

std::vector<NodeFeature> stage_ltiga(const std::vector<NodeFeature>& features, const PipelineConfig& cfg,
                                     LtigaReport* report) {
  LtigaParams p = cfg.ltiga;
  if (cfg.variant == Variant::NoLtiga || cfg.variant == Variant::GcnOnly) p.enabled = false;
  if (cfg.variant == Variant::NoRescale) p.rescale = false;
  return apply_ltiga(features, p, report, cfg.backend);
}

StGraph stage_graph(const std::vector<NodeFeature>& features, const PipelineConfig& cfg) {
  std::vector<Vec3> x;
  if (cfg.variant == Variant::GcnOnly) {
    for (const auto& f : features) x.push_back(f.raw());
  } else {
    x = weight_features(features);
  }
  std::vector<GraphNode> nodes(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].node_id != i) throw PreconditionError("graph: node ids must be 0..n-1 in order");
    nodes[i].node_id = i;
    nodes[i].segment_id = features[i].segment_id;
    nodes[i].x = x[i];
    nodes[i].t = features[i].t;
  }
  return build_graph(std::move(nodes), cfg.graph, cfg.backend);
}

std::map<std::size_t, int> resolve_seeds(const std::vector<SeedLabel>& labels,
                                         const std::vector<NodeFeature>& features,
                                         std::vector<std::string>* unresolved) {
  std::map<std::size_t, int> seeds;
  auto miss = [&](const std::string& why) {
    if (unresolved) unresolved->push_back(why);
  };
  for (const SeedLabel& s : labels) {
    std::optional<std::size_t> hit;
    if (s.node_id) {
      if (*s.node_id < features.size()) {
        hit = *s.node_id;
      } else {
        miss("node_id " + std::to_string(*s.node_id) + " does not exist");
        continue;
      }
    } else {
      double best = std::numeric_limits<double>::infinity();
      for (const NodeFeature& f : features) {
        if (!s.trip_id.empty() && f.trip_id != s.trip_id) continue;
        const double d = haversine(s.lng, s.lat, f.lng, f.lat);
        if (d <= s.radius_m && d < best) {
          best = d;
          hit = f.node_id;
        }
      }
      if (!hit) {
        miss("no stop node within " + std::to_string(s.radius_m) + " m of (" + std::to_string(s.lng) + ", " +
             std::to_string(s.lat) + ")" + (s.trip_id.empty() ? "" : " in " + s.trip_id));
        continue;
      }
    }
    auto [it, inserted] = seeds.emplace(*hit, s.cls);
    if (!inserted && it->second != s.cls) {
      throw PreconditionError("seed labels give node " + std::to_string(*hit) + " both classes");
    }
  }
  return seeds;
}

PropagationStage stage_propagate(const StGraph& graph, const std::map<std::size_t, int>& seeds,
                                 const PipelineConfig& cfg) {
  PropagationStage out;
  out.seeds = seeds;
  const kernels::Csr w = rbf_affinity(graph, cfg.graph.sigma_rbf);
  out.propagated = propagate(w, seeds, cfg.propagation, cfg.backend);
  out.gated = gate_pseudo_labels(out.propagated, cfg.gate, &out.counts);
  return out;
}

TrainStage stage_train(const StGraph& graph, const LabelState& gated, const PipelineConfig& cfg) {
  TrainStage out;
  out.initial_labels = gated.hard_label;
  bool has[2] = {false, false};
  for (int y : out.initial_labels) {
    if (y >= 0) has[y] = true;
  }
  if (!has[kAbnormal] || !has[kNormal]) {
    throw PreconditionError("train: need at least one labeled node per class");
  }
  const GcnGraph gg(graph);
  std::vector<Vec3> x;
  x.reserve(graph.size());
  for (const auto& n : graph.nodes()) x.push_back(n.x);
  TrainConfig tc = cfg.train;
  tc.seed = substream(cfg.seed, "gcn");
  GcnModel model = init_model(gg, x, tc.hidden, tc.seed);
  auto base = train(std::move(model), gg, x, out.initial_labels, tc, cfg.backend);
  out.base_model = base.model;
  out.probs_before = forward(base.model, gg, x, cfg.backend);
  out.final = self_train(base.model, gg, x, out.initial_labels, tc, cfg.backend);
  out.final.history.insert(out.final.history.begin(), base.history.begin(), base.history.end());
  return out;
}

std::vector<int> node_truth(const std::vector<NodeFeature>& features, const GroundTruth& truth,
                            double radius_m) {
  std::set<std::pair<std::string, std::size_t>> samples;
  std::vector<const GroundTruthStop*> by_coord;
  for (const auto& g : truth.abnormal) {
    if (g.points.empty()) {
      by_coord.push_back(&g);
    } else {
      for (std::size_t p : g.points) samples.insert({g.trip_id, p});
    }
  }
  std::vector<int> y(features.size(), 0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const NodeFeature& f = features[i];
    if (samples.count({f.trip_id, f.point_index})) {
      y[i] = 1;
      continue;
    }
    for (const GroundTruthStop* g : by_coord) {
      if ((g->trip_id.empty() || g->trip_id == f.trip_id) && haversine(g->lng, g->lat, f.lng, f.lat) <= radius_m) {
        y[i] = 1;
        break;
      }
    }
  }
  return y;
}

EvalReport stage_evaluate(const std::vector<NodeFeature>& features, const StGraph& graph,
                          const std::map<std::size_t, int>& seeds, const std::vector<double>& probs_before,
                          const std::vector<double>& probs_after, const GroundTruth& truth,
                          const PipelineConfig& cfg, MatchResult* match) {
  const std::size_t n = features.size();
  if (probs_after.size() != n * kClasses || probs_before.size() != n * kClasses) {
    throw PreconditionError("evaluate: predictions do not cover every node");
  }
  EvalReport r;
  r.variant = std::string(to_string(cfg.variant));
  const auto y = node_truth(features, truth, cfg.truth_radius_m);
  std::vector<double> s_before, s_after;
  std::vector<int> y_eval;
  for (std::size_t i = 0; i < n; ++i) {
    if (seeds.count(i)) continue;
    s_before.push_back(probs_before[i * kClasses + kAbnormal]);
    s_after.push_back(probs_after[i * kClasses + kAbnormal]);
    y_eval.push_back(y[i]);
  }
  r.evaluated_nodes = y_eval.size();
  r.evaluated_positive = static_cast<std::size_t>(std::count(y_eval.begin(), y_eval.end(), 1));
  if (r.evaluated_positive == 0 || r.evaluated_positive == r.evaluated_nodes) {
    throw PreconditionError("evaluate: non-seed nodes must contain both ground-truth classes");
  }
  r.auc = auc(s_after, y_eval);
  r.ap = average_precision(s_after, y_eval);
  r.auc_before_self_training = auc(s_before, y_eval);
  r.ap_before_self_training = average_precision(s_before, y_eval);

  std::vector<std::uint8_t> flagged(n, 0);
  std::vector<std::size_t> seg(n);
  std::vector<Coord> predicted;
  for (std::size_t i = 0; i < n; ++i) {
    seg[i] = features[i].segment_id;
    if (probs_after[i * kClasses + kAbnormal] > cfg.decision_threshold) {
      flagged[i] = 1;
      ++r.abnormal_nodes;
      predicted.push_back({features[i].lng, features[i].lat});
    }
    if (probs_before[i * kClasses + kAbnormal] > cfg.decision_threshold) ++r.abnormal_nodes_before_self_training;
  }
  r.abnormal_segments = aggregate_segments(seg, flagged).size();

  std::vector<Coord> gt;
  for (const auto& g : truth.abnormal) gt.push_back({g.lng, g.lat});
  MatchResult m = spatial_match(gt, predicted);
  r.match_failed = m.failed;
  for (const auto& row : m.rows) r.match_distances.push_back(row.distance_m);
  r.mean_dist = m.mean_m;
  r.median_dist = m.median_m;
  r.nodes = graph.size();
  r.skipped_nodes = graph.skipped_nodes();
  r.edges = graph.edges().size();
  if (match) *match = std::move(m);
  return r;
}

// ---- whole pipeline ------------------------------------------------------

namespace {

template <class F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

PipelineResult run_pipeline(const std::vector<Trip>& trips, const std::vector<SeedLabel>& labels,
                            const GroundTruth& truth, const PipelineConfig& cfg) {
  cfg.validate();
  PipelineResult r;
  r.stops = stage("detect-stops", [&] { return stage_stops(trips, cfg); });
  r.segments = stage("segment", [&] { return stage_segments(trips, cfg); });
  r.indicators = stage("indicators", [&] { return stage_indicators(trips, r.segments, r.stops, cfg); });
  r.refined = stage("ltiga", [&] { return stage_ltiga(r.indicators, cfg, &r.ltiga_report); });
  r.graph = stage("graph", [&] { return stage_graph(r.refined, cfg); });
  r.propagation = stage("propagate", [&] {
    std::vector<std::string> unresolved;
    auto seeds = resolve_seeds(labels, r.refined, &unresolved);
    return stage_propagate(r.graph, seeds, cfg);
  });
  r.training = stage("train", [&] { return stage_train(r.graph, r.propagation.gated, cfg); });
  r.report = stage("evaluate", [&] {
    return stage_evaluate(r.refined, r.graph, r.propagation.seeds, r.training.probs_before, r.training.final.probs,
                          truth, cfg, &r.match);
  });
  return r;
}

EvalReport run_ablation(const std::vector<Trip>& trips, const std::vector<SeedLabel>& labels,
                        const GroundTruth& truth, PipelineConfig cfg, Variant variant) {
  cfg.variant = variant;
  return run_pipeline(trips, labels, truth, cfg).report;
}

std::vector<SensitivityRow> label_sensitivity(const std::vector<Trip>& trips, const GroundTruth& truth,
                                              const PipelineConfig& cfg, const std::vector<std::size_t>& ks,
                                              std::size_t trials) {
  if (trials == 0) throw PreconditionError("sensitivity: trials must be >= 1");
  const std::size_t available = truth.abnormal.size();
  for (std::size_t k : ks) {
    if (k == 0 || k > available) {
      throw PreconditionError("sensitivity: k=" + std::to_string(k) + " but only " + std::to_string(available) +
                              " abnormal ground-truth stops are available");
    }
  }
  std::vector<SensitivityRow> rows;
  for (std::size_t k : ks) {
    SensitivityRow row;
    row.k = k;
    row.trials = trials;
    std::vector<double> aucs, aps;
    std::size_t matched = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      const std::string name = "sensitivity.k" + std::to_string(k) + ".trial" + std::to_string(t);
      Rng rng(substream(cfg.seed, name));
      std::vector<std::size_t> pool(available);
      std::iota(pool.begin(), pool.end(), 0);
      for (std::size_t i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                                static_cast<std::int64_t>(available) - 1));
        std::swap(pool[i], pool[j]);
      }
      pool.resize(k);
      std::sort(pool.begin(), pool.end());
      PipelineConfig run_cfg = cfg;
      run_cfg.seed = substream(cfg.seed, name + ".pipeline");
      auto report = run_pipeline(trips, default_seed_labels(truth, pool), truth, run_cfg).report;
      aucs.push_back(report.auc);
      aps.push_back(report.ap);
      row.abnormal_nodes_mean += static_cast<double>(report.abnormal_nodes);
      row.abnormal_segments_mean += static_cast<double>(report.abnormal_segments);
      if (report.match_failed) {
        ++row.failed_matches;
      } else {
        row.mean_dist_mean += report.mean_dist;
        row.median_dist_mean += report.median_dist;
        ++matched;
      }
      row.runs.push_back(std::move(report));
    }
    const double nt = static_cast<double>(trials);
    auto mean_std = [&](const std::vector<double>& v, double& m, double& s) {
      m = std::accumulate(v.begin(), v.end(), 0.0) / nt;
      double var = 0.0;
      for (double x : v) var += (x - m) * (x - m);
      s = std::sqrt(var / nt);
    };
    mean_std(aucs, row.auc_mean, row.auc_std);
    mean_std(aps, row.ap_mean, row.ap_std);
    row.abnormal_nodes_mean /= nt;
    row.abnormal_segments_mean /= nt;
    if (matched > 0) {
      row.mean_dist_mean /= static_cast<double>(matched);
      row.median_dist_mean /= static_cast<double>(matched);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

ojson to_json(const SensitivityRow& row) {
  ojson runs = ojson::array();
  for (const auto& r : row.runs) runs.push_back(to_json(r));
  return {{"k", row.k},
          {"trials", row.trials},
          {"auc_mean", row.auc_mean},
          {"auc_std", row.auc_std},
          {"ap_mean", row.ap_mean},
          {"ap_std", row.ap_std},
          {"abnormal_nodes_mean", row.abnormal_nodes_mean},
          {"abnormal_segments_mean", row.abnormal_segments_mean},
          {"mean_dist_mean", row.mean_dist_mean},
          {"median_dist_mean", row.median_dist_mean},
          {"failed_matches", row.failed_matches},
          {"runs", runs}};
}

}  // namespace asd

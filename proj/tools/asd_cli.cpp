// asd: staged command-line driver. Each stage reads the previous stage's
// artifact from the run directory and writes its own; `run` chains them.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "asd/artifacts.hpp"
#include "asd/error.hpp"
#include "asd/pipeline.hpp"
#include "asd/rng.hpp"

namespace fs = std::filesystem;
using namespace asd;
namespace art = asd::artifacts;

namespace {

class DependencyError : public Error {
 public:
  using Error::Error;
};

struct Options {
  std::string input;
  std::string labels;
  std::string ground_truth;
  std::string config;
  std::string out = "run";
  std::string variant;
  std::string variants = "full,fixed-seg,no-ltiga,no-rescale,gcn-only";
  std::string ks = "5,7,10";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t trials = 5;
  bool force = false;
};

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DependencyError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a64(ss.str());
}

// A synthetic corpus directory stands in for its three files.
void resolve_corpus(Options& o) {
  if (o.input.empty() || !fs::is_directory(o.input)) return;
  const fs::path dir = o.input;
  o.input = (dir / "trips.csv").string();
  if (o.labels.empty() && fs::exists(dir / "seed_labels.csv")) o.labels = (dir / "seed_labels.csv").string();
  if (o.ground_truth.empty() && fs::exists(dir / "ground_truth.json")) {
    o.ground_truth = (dir / "ground_truth.json").string();
  }
}

// Run directory with content stamps: an artifact is fresh when its stamp
// matches the hash of (stage, config, upstream stamps, input files).
class RunDir {
 public:
  RunDir(fs::path dir, const Options& o) : dir_(std::move(dir)), force_(o.force) {
    fs::create_directories(dir_);
    PipelineConfig base;
    if (!o.config.empty()) {
      base = config_from_json(art::read_json(o.config));
    } else if (fs::exists(dir_ / art::kConfig)) {
      base = config_from_json(art::read_json(dir_ / art::kConfig));
    }
    if (o.seed_set) {
      base.seed = o.seed;
      base.synth.seed = o.seed;
    }
    if (!o.variant.empty()) base.variant = variant_from_string(o.variant);
    base.validate();
    cfg_ = base;
    cfg_text_ = asd::to_json(cfg_).dump();
    art::write_json(dir_ / art::kConfig, asd::to_json(cfg_));
    if (fs::exists(dir_ / art::kStamps)) {
      const auto j = art::read_json(dir_ / art::kStamps);
      for (auto& [k, v] : j.items()) stamps_[k] = v.get<std::string>();
    }
  }

  const PipelineConfig& cfg() const { return cfg_; }
  fs::path path(const char* name) const { return dir_ / name; }

  nlohmann::json need(const char* name, const char* producer) const {
    if (!fs::exists(dir_ / name)) {
      throw DependencyError(std::string(name) + " not found in " + dir_.string() + "; run `asd " + producer +
                            "` first");
    }
    return art::read_json(dir_ / name);
  }

  std::string stamp_of(const char* name) const {
    auto it = stamps_.find(name);
    return it == stamps_.end() ? std::string("missing") : it->second;
  }

  // Runs `body` unless `artifact` is already fresh. Returns true if it ran.
  bool stage(const char* name, const char* artifact, const std::vector<const char*>& upstream,
             const std::vector<std::string>& inputs, const std::function<void()>& body) {
    std::string key = std::string(name) + "\n" + cfg_text_;
    for (const char* u : upstream) key += "\n" + stamp_of(u);
    for (const auto& in : inputs) key += "\n" + hex(file_hash(in));
    const std::string stamp = hex(fnv1a64(key));
    if (!force_ && fs::exists(dir_ / artifact) && stamp_of(artifact) == stamp) {
      std::cout << name << ": up to date (" << stamp << ")\n";
      return false;
    }
    try {
      body();
    } catch (const DependencyError&) {
      throw;
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    stamps_[artifact] = stamp;
    save_stamps();
    return true;
  }

 private:
  void save_stamps() const {
    nlohmann::ordered_json j;
    for (const auto& [k, v] : stamps_) j[k] = v;
    art::write_json(dir_ / art::kStamps, j);
  }

  fs::path dir_;
  bool force_ = false;
  PipelineConfig cfg_;
  std::string cfg_text_;
  std::map<std::string, std::string> stamps_;
};

// ---- stages --------------------------------------------------------------

void cmd_ingest(RunDir& rd, const Options& o) {
  if (o.input.empty()) throw DependencyError("ingest needs --input");
  rd.stage("ingest", art::kTrips, {}, {o.input}, [&] {
    IngestResult r = stage_ingest(o.input, rd.cfg());
    art::write_json(rd.path(art::kIngestReport), art::to_json(r.report));
    art::write_json(rd.path(art::kTrips), art::trips_to_json(r.trips));
    std::cout << "ingest: " << r.report.trips << " trips, " << r.report.rows_read << " rows read, "
              << r.report.rows_dropped << " dropped\n";
  });
}

void cmd_stops(RunDir& rd) {
  rd.stage("detect-stops", art::kStops, {art::kTrips}, {}, [&] {
    auto trips = art::trips_from_json(rd.need(art::kTrips, "ingest"));
    StopStage s = stage_stops(trips, rd.cfg());
    std::size_t n = 0;
    for (const auto& t : s.stops) n += t.size();
    art::write_json(rd.path(art::kStops), art::stops_to_json(s));
    std::cout << "detect-stops: " << n << " stops, route mean stay " << s.route_mean_stay << " s\n";
  });
}

void cmd_segment(RunDir& rd) {
  rd.stage("segment", art::kSegments, {art::kTrips}, {}, [&] {
    auto trips = art::trips_from_json(rd.need(art::kTrips, "ingest"));
    auto segs = stage_segments(trips, rd.cfg());
    std::size_t n = 0;
    for (const auto& t : segs) n += t.size();
    art::write_json(rd.path(art::kSegments), art::segments_to_json(segs));
    std::cout << "segment: " << n << " segments (" << to_string(rd.cfg().variant) << ")\n";
  });
}

void cmd_indicators(RunDir& rd) {
  rd.stage("indicators", art::kFeatures, {art::kTrips, art::kStops, art::kSegments}, {}, [&] {
    auto trips = art::trips_from_json(rd.need(art::kTrips, "ingest"));
    auto stops = art::stops_from_json(rd.need(art::kStops, "detect-stops"));
    auto segs = art::segments_from_json(rd.need(art::kSegments, "segment"));
    auto f = stage_indicators(trips, segs, stops, rd.cfg());
    art::write_json(rd.path(art::kFeatures), art::features_to_json(f));
    art::write_features_csv(rd.path(art::kFeaturesCsv), f);
    std::cout << "indicators: " << f.size() << " nodes\n";
  });
}

void cmd_ltiga(RunDir& rd) {
  rd.stage("ltiga", art::kRefined, {art::kFeatures}, {}, [&] {
    auto f = art::features_from_json(rd.need(art::kFeatures, "indicators"));
    LtigaReport rep;
    auto refined = stage_ltiga(f, rd.cfg(), &rep);
    art::write_json(rd.path(art::kRefined), art::features_to_json(refined, &rep));
    art::write_features_csv(rd.path(art::kRefinedCsv), refined);
    std::cout << "ltiga: smoothed " << rep.segments_smoothed << " of " << rep.segments_total << " segments\n";
  });
}

void cmd_graph(RunDir& rd) {
  rd.stage("graph", art::kGraph, {art::kRefined}, {}, [&] {
    auto f = art::features_from_json(rd.need(art::kRefined, "ltiga"));
    StGraph g = stage_graph(f, rd.cfg());
    art::write_json(rd.path(art::kGraph), art::graph_to_json(g));
    art::write_edges_csv(rd.path(art::kEdges), g);
    const GraphStats st = g.stats();
    std::cout << "graph: " << st.nodes << " nodes, " << st.intra_edges << " intra + " << st.inter_edges
              << " inter edges, " << st.skipped_nodes << " skipped\n";
  });
}

void cmd_propagate(RunDir& rd, const Options& o) {
  if (o.labels.empty()) throw DependencyError("propagate needs --labels");
  rd.stage("propagate", art::kLabels, {art::kGraph, art::kRefined}, {o.labels}, [&] {
    auto f = art::features_from_json(rd.need(art::kRefined, "ltiga"));
    StGraph g = art::graph_from_json(rd.need(art::kGraph, "graph"));
    std::vector<std::string> unresolved;
    auto seeds = resolve_seeds(read_seed_labels(o.labels), f, &unresolved);
    for (const auto& u : unresolved) std::cerr << "propagate: unresolved seed: " << u << '\n';
    PropagationStage p = stage_propagate(g, seeds, rd.cfg());
    art::write_json(rd.path(art::kLabels), art::propagation_to_json(p));
    art::write_labels_csv(rd.path(art::kLabelsCsv), p, f);
    std::cout << "propagate: " << seeds.size() << " seeds, +" << p.counts.pseudo_abnormal << " abnormal / +"
              << p.counts.pseudo_normal << " normal pseudo-labels, " << p.propagated.iterations << " sweeps\n";
  });
}

void cmd_train(RunDir& rd) {
  rd.stage("train", art::kPredictions, {art::kGraph, art::kLabels}, {}, [&] {
    auto f = art::features_from_json(rd.need(art::kRefined, "ltiga"));
    StGraph g = art::graph_from_json(rd.need(art::kGraph, "graph"));
    PropagationStage p = art::propagation_from_json(rd.need(art::kLabels, "propagate"));
    TrainStage t = stage_train(g, p.gated, rd.cfg());
    art::write_json(rd.path(art::kModel), art::model_to_json(t));
    art::write_history_csv(rd.path(art::kHistory), t.final.history);
    art::write_json(rd.path(art::kPredictions), art::predictions_to_json(t, f, rd.cfg().decision_threshold));
    std::cout << "train: " << t.final.history.size() << " epochs, " << t.final.rounds.size()
              << " self-training rounds\n";
  });
}

void cmd_evaluate(RunDir& rd, const Options& o) {
  if (o.ground_truth.empty()) throw DependencyError("evaluate needs --ground-truth");
  rd.stage("evaluate", art::kReport, {art::kPredictions, art::kLabels, art::kGraph}, {o.ground_truth}, [&] {
    auto f = art::features_from_json(rd.need(art::kRefined, "ltiga"));
    StGraph g = art::graph_from_json(rd.need(art::kGraph, "graph"));
    PropagationStage p = art::propagation_from_json(rd.need(art::kLabels, "propagate"));
    auto pred = art::predictions_from_json(rd.need(art::kPredictions, "train"));
    GroundTruth truth = read_ground_truth(o.ground_truth);
    MatchResult m;
    EvalReport r = stage_evaluate(f, g, p.seeds, pred.probs_before, pred.probs_after, truth, rd.cfg(), &m);
    art::write_json(rd.path(art::kReport), to_json(r));
    art::write_matches_csv(rd.path(art::kMatches), m);
    art::write_json(rd.path(art::kOverlay),
                    art::overlay_geojson(truth, f, pred.probs_after, m, rd.cfg().decision_threshold));
    std::printf("evaluate: AUC %.4f AP %.4f (before self-training %.4f / %.4f), %zu abnormal nodes in %zu segments\n",
                r.auc, r.ap, r.auc_before_self_training, r.ap_before_self_training, r.abnormal_nodes,
                r.abnormal_segments);
  });
  std::cout << rd.path(art::kReport).string() << '\n';
}

void cmd_run(RunDir& rd, const Options& o) {
  if (o.labels.empty() || o.ground_truth.empty()) throw DependencyError("run needs --labels and --ground-truth");
  cmd_ingest(rd, o);
  cmd_stops(rd);
  cmd_segment(rd);
  cmd_indicators(rd);
  cmd_ltiga(rd);
  cmd_graph(rd);
  cmd_propagate(rd, o);
  cmd_train(rd);
  cmd_evaluate(rd, o);
}

// ---- corpus-level commands -----------------------------------------------

struct Loaded {
  PipelineConfig cfg;
  std::vector<Trip> trips;
  std::vector<SeedLabel> labels;
  GroundTruth truth;
};

Loaded load_corpus(const Options& o, bool need_labels) {
  if (o.input.empty()) throw DependencyError("--input is required");
  if (o.ground_truth.empty()) throw DependencyError("--ground-truth is required");
  if (need_labels && o.labels.empty()) throw DependencyError("--labels is required");
  Loaded l;
  if (!o.config.empty()) l.cfg = config_from_json(art::read_json(o.config));
  if (o.seed_set) {
    l.cfg.seed = o.seed;
    l.cfg.synth.seed = o.seed;
  }
  l.cfg.validate();
  l.trips = stage_ingest(o.input, l.cfg).trips;
  if (need_labels) l.labels = read_seed_labels(o.labels);
  l.truth = read_ground_truth(o.ground_truth);
  return l;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void cmd_ablate(const Options& o) {
  Loaded l = load_corpus(o, true);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  art::write_json(dir / art::kConfig, asd::to_json(l.cfg));
  nlohmann::ordered_json all = nlohmann::ordered_json::array();
  std::ofstream csv(dir / "ablation.csv", std::ios::binary);
  csv << "variant,auc,ap,abnormal_nodes,abnormal_segments,median_dist_m,skipped_nodes,edges\n";
  for (const auto& name : split_list(o.variants)) {
    const Variant v = variant_from_string(name);
    EvalReport r = run_ablation(l.trips, l.labels, l.truth, l.cfg, v);
    all.push_back(to_json(r));
    csv << r.variant << ',' << r.auc << ',' << r.ap << ',' << r.abnormal_nodes << ',' << r.abnormal_segments << ','
        << (r.match_failed ? std::string("") : std::to_string(r.median_dist)) << ',' << r.skipped_nodes << ','
        << r.edges << '\n';
    std::printf("%-10s AUC %.4f AP %.4f abnormal %zu segments %zu skipped %zu edges %zu\n", r.variant.c_str(), r.auc,
                r.ap, r.abnormal_nodes, r.abnormal_segments, r.skipped_nodes, r.edges);
  }
  art::write_json(dir / "ablation.json", all);
}

void cmd_sensitivity(const Options& o) {
  Loaded l = load_corpus(o, false);
  std::vector<std::size_t> ks;
  for (const auto& k : split_list(o.ks)) ks.push_back(static_cast<std::size_t>(std::stoul(k)));
  const fs::path dir = o.out;
  fs::create_directories(dir);
  art::write_json(dir / art::kConfig, asd::to_json(l.cfg));
  auto rows = label_sensitivity(l.trips, l.truth, l.cfg, ks, o.trials);
  nlohmann::ordered_json all = nlohmann::ordered_json::array();
  std::ofstream csv(dir / "sensitivity.csv", std::ios::binary);
  csv << "k,trials,auc_mean,auc_std,ap_mean,ap_std,abnormal_nodes,abnormal_segments,mean_dist_m,median_dist_m,"
         "failed_matches\n";
  for (const auto& r : rows) {
    all.push_back(to_json(r));
    csv << r.k << ',' << r.trials << ',' << r.auc_mean << ',' << r.auc_std << ',' << r.ap_mean << ',' << r.ap_std
        << ',' << r.abnormal_nodes_mean << ',' << r.abnormal_segments_mean << ',' << r.mean_dist_mean << ','
        << r.median_dist_mean << ',' << r.failed_matches << '\n';
    std::printf("k=%-3zu AUC %.4f +- %.4f  AP %.4f +- %.4f  abnormal %.1f  segments %.1f  median dist %.0f m\n", r.k,
                r.auc_mean, r.auc_std, r.ap_mean, r.ap_std, r.abnormal_nodes_mean, r.abnormal_segments_mean,
                r.median_dist_mean);
  }
  art::write_json(dir / "sensitivity.json", all);
}

void cmd_synth(const Options& o) {
  PipelineConfig cfg;
  if (!o.config.empty()) cfg = config_from_json(art::read_json(o.config));
  if (o.seed_set) {
    cfg.seed = o.seed;
    cfg.synth.seed = o.seed;
  }
  Corpus c = generate(cfg.synth);
  export_corpus(c, o.out);
  std::size_t pts = 0;
  for (const auto& t : c.trips) pts += t.points.size();
  std::cout << "synth: " << c.trips.size() << " trips, " << pts << " samples, " << c.truth.abnormal.size()
            << " planted abnormal stops -> " << o.out << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Abnormal stop detection for sparse GPS coach trajectories"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", o.config, "Config JSON (defaults apply to missing keys)");
    c->add_option("--seed", o.seed, "Master seed")->each([&](const std::string&) { o.seed_set = true; });
    c->add_option("--out", o.out, "Run / output directory");
    c->add_flag("--force", o.force, "Recompute even if artifacts are up to date");
  };
  auto add_stage = [&](const char* name, const char* help) {
    auto* c = app.add_subcommand(name, help);
    add_common(c);
    c->add_option("--variant", o.variant, "full | fixed-seg | no-ltiga | no-rescale | gcn-only");
    return c;
  };

  auto* ingest = add_stage("ingest", "Load a trajectory CSV into the run directory");
  ingest->add_option("--input", o.input, "Trajectory CSV or synthetic corpus directory")->required();
  add_stage("detect-stops", "Classify stop samples");
  add_stage("segment", "Split trips into segments");
  add_stage("indicators", "Compute per-stop indicators");
  add_stage("ltiga", "Confidence-gated indicator smoothing");
  add_stage("graph", "Build the spatial-temporal graph");
  auto* prop = add_stage("propagate", "Spread seed labels and gate pseudo-labels");
  prop->add_option("--labels", o.labels, "Seed label CSV")->required();
  add_stage("train", "Train the graph classifier with self-training");
  auto* eval = add_stage("evaluate", "Score predictions against ground truth");
  eval->add_option("--ground-truth", o.ground_truth, "Ground-truth JSON")->required();
  auto* run = add_stage("run", "All stages in order");
  run->add_option("--input", o.input, "Trajectory CSV or synthetic corpus directory")->required();
  run->add_option("--labels", o.labels, "Seed label CSV");
  run->add_option("--ground-truth", o.ground_truth, "Ground-truth JSON");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  add_common(synth);
  auto* ablate = app.add_subcommand("ablate", "Run pipeline variants on one corpus");
  add_common(ablate);
  ablate->add_option("--input", o.input, "Trajectory CSV or synthetic corpus directory")->required();
  ablate->add_option("--labels", o.labels, "Seed label CSV");
  ablate->add_option("--ground-truth", o.ground_truth, "Ground-truth JSON");
  ablate->add_option("--variants", o.variants, "Comma-separated variants");
  auto* sens = app.add_subcommand("sensitivity", "Vary the number of abnormal seed labels");
  add_common(sens);
  sens->add_option("--input", o.input, "Trajectory CSV or synthetic corpus directory")->required();
  sens->add_option("--ground-truth", o.ground_truth, "Ground-truth JSON");
  sens->add_option("--k", o.ks, "Comma-separated label budgets");
  sens->add_option("--trials", o.trials, "Trials per budget");

  CLI11_PARSE(app, argc, argv);
  resolve_corpus(o);

  try {
    auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "synth") {
      cmd_synth(o);
    } else if (name == "ablate") {
      cmd_ablate(o);
    } else if (name == "sensitivity") {
      cmd_sensitivity(o);
    } else {
      RunDir rd(o.out, o);
      if (name == "ingest") cmd_ingest(rd, o);
      else if (name == "detect-stops") cmd_stops(rd);
      else if (name == "segment") cmd_segment(rd);
      else if (name == "indicators") cmd_indicators(rd);
      else if (name == "ltiga") cmd_ltiga(rd);
      else if (name == "graph") cmd_graph(rd);
      else if (name == "propagate") cmd_propagate(rd, o);
      else if (name == "train") cmd_train(rd);
      else if (name == "evaluate") cmd_evaluate(rd, o);
      else if (name == "run") cmd_run(rd, o);
    }
  } catch (const DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << '\n';
    return 3;
  } catch (const StageError& e) {
    std::cerr << "stage '" << e.stage() << "' failed: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

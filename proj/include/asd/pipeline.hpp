#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "asd/eval.hpp"
#include "asd/gcn.hpp"
#include "asd/geo.hpp"
#include "asd/indicators.hpp"
#include "asd/kernels.hpp"
#include "asd/label_prop.hpp"
#include "asd/ltiga.hpp"
#include "asd/segmentation.hpp"
#include "asd/stgraph.hpp"
#include "asd/stops.hpp"
#include "asd/synth.hpp"

namespace asd {

enum class Variant { Full, FixedSeg, NoLtiga, NoRescale, GcnOnly };

std::string_view to_string(Variant v);   // "Full", "FixedSeg", ...
std::string_view variant_flag(Variant v);  // "full", "fixed-seg", ...
/// Accepts either spelling, case-insensitive.
Variant variant_from_string(std::string_view s);
const std::vector<Variant>& all_variants();

struct PipelineConfig {
  std::uint64_t seed = 7;
  Variant variant = Variant::Full;
  kernels::Backend backend = kernels::Backend::Serial;

  ColumnMap columns;
  IngestOptions ingest;
  DetectorConfig detector;
  double alpha = 2.0;
  double beta = 2.0;
  double fixed_interval_m = 2000.0;
  IndicatorParams indicators;
  LtigaParams ltiga;
  GraphParams graph;
  PropagationParams propagation;
  GateConfig gate;
  TrainConfig train;
  double truth_radius_m = 100.0;     // coordinate fallback when truth has no sample indices
  double decision_threshold = 0.5;   // P(abnormal) above this counts as detected
  SynthConfig synth;

  void validate() const;
};

nlohmann::ordered_json to_json(const PipelineConfig& cfg);
/// Missing keys keep the value from `base`; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});

// ---- stages --------------------------------------------------------------

/// Reads a delimited trajectory file with the configured columns.
IngestResult stage_ingest(const std::filesystem::path& path, const PipelineConfig& cfg);

struct StopStage {
  double route_mean_stay = 0.0;
  std::vector<std::vector<StopEvent>> stops;  // per trip
};

StopStage stage_stops(const std::vector<Trip>& trips, const PipelineConfig& cfg);

/// Per-trip segments, SAS or fixed-length depending on the variant.
std::vector<std::vector<Segment>> stage_segments(const std::vector<Trip>& trips, const PipelineConfig& cfg);

std::vector<NodeFeature> stage_indicators(const std::vector<Trip>& trips,
                                          const std::vector<std::vector<Segment>>& segments,
                                          const StopStage& stops, const PipelineConfig& cfg);

std::vector<NodeFeature> stage_ltiga(const std::vector<NodeFeature>& features, const PipelineConfig& cfg,
                                     LtigaReport* report = nullptr);

/// Graph over the node features; GcnOnly uses raw, unweighted indicators.
StGraph stage_graph(const std::vector<NodeFeature>& features, const PipelineConfig& cfg);

/// Maps seed selectors to node indices. Coordinate selectors pick the
/// nearest node within the radius (restricted to the trip when given).
std::map<std::size_t, int> resolve_seeds(const std::vector<SeedLabel>& labels,
                                         const std::vector<NodeFeature>& features,
                                         std::vector<std::string>* unresolved = nullptr);

struct PropagationStage {
  std::map<std::size_t, int> seeds;
  LabelState propagated;
  LabelState gated;
  LabelCounts counts;
};

PropagationStage stage_propagate(const StGraph& graph, const std::map<std::size_t, int>& seeds,
                                 const PipelineConfig& cfg);

struct TrainStage {
  std::vector<int> initial_labels;  // seeds + gated pseudo-labels
  GcnModel base_model;
  std::vector<double> probs_before;  // after the first training run
  SelfTrainResult final;
};

TrainStage stage_train(const StGraph& graph, const LabelState& gated, const PipelineConfig& cfg);

/// 1 for nodes inside a planted abnormal event, else 0.
std::vector<int> node_truth(const std::vector<NodeFeature>& features, const GroundTruth& truth,
                            double radius_m);

EvalReport stage_evaluate(const std::vector<NodeFeature>& features, const StGraph& graph,
                          const std::map<std::size_t, int>& seeds, const std::vector<double>& probs_before,
                          const std::vector<double>& probs_after, const GroundTruth& truth,
                          const PipelineConfig& cfg, MatchResult* match = nullptr);

// ---- whole pipeline ------------------------------------------------------

struct PipelineResult {
  StopStage stops;
  std::vector<std::vector<Segment>> segments;
  std::vector<NodeFeature> indicators;
  std::vector<NodeFeature> refined;
  LtigaReport ltiga_report;
  StGraph graph;
  PropagationStage propagation;
  TrainStage training;
  EvalReport report;
  MatchResult match;
};

PipelineResult run_pipeline(const std::vector<Trip>& trips, const std::vector<SeedLabel>& labels,
                            const GroundTruth& truth, const PipelineConfig& cfg);

EvalReport run_ablation(const std::vector<Trip>& trips, const std::vector<SeedLabel>& labels,
                        const GroundTruth& truth, PipelineConfig cfg, Variant variant);

struct SensitivityRow {
  std::size_t k = 0;
  std::size_t trials = 0;
  double auc_mean = 0.0, auc_std = 0.0;
  double ap_mean = 0.0, ap_std = 0.0;
  double abnormal_nodes_mean = 0.0;
  double abnormal_segments_mean = 0.0;
  double mean_dist_mean = 0.0;    // over trials whose match succeeded
  double median_dist_mean = 0.0;
  std::size_t failed_matches = 0;
  std::vector<EvalReport> runs;
};

/// For each k, `trials` runs with k randomly drawn abnormal seeds (plus all
/// normal seeds). Standard deviations are population values.
std::vector<SensitivityRow> label_sensitivity(const std::vector<Trip>& trips, const GroundTruth& truth,
                                              const PipelineConfig& cfg, const std::vector<std::size_t>& ks,
                                              std::size_t trials);

nlohmann::ordered_json to_json(const SensitivityRow& row);

}  // namespace asd

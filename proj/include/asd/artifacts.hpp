#pragma once

// On-disk form of every pipeline stage. JSON writers emit doubles with
// round-trip precision, so a stage restored from its artifact continues
// exactly where an in-memory run would.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "asd/pipeline.hpp"

namespace asd::artifacts {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

// File names inside a run directory.
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kTrips = "trips.json";
inline constexpr const char* kIngestReport = "ingest_report.json";
inline constexpr const char* kStops = "stops.json";
inline constexpr const char* kSegments = "segments.json";
inline constexpr const char* kFeatures = "features.json";
inline constexpr const char* kFeaturesCsv = "features.csv";
inline constexpr const char* kRefined = "features_ltiga.json";
inline constexpr const char* kRefinedCsv = "features_ltiga.csv";
inline constexpr const char* kGraph = "graph.json";
inline constexpr const char* kEdges = "edges.csv";
inline constexpr const char* kLabels = "labels.json";
inline constexpr const char* kLabelsCsv = "labels.csv";
inline constexpr const char* kModel = "model.json";
inline constexpr const char* kHistory = "history.csv";
inline constexpr const char* kPredictions = "predictions.json";
inline constexpr const char* kReport = "eval_report.json";
inline constexpr const char* kMatches = "matches.csv";
inline constexpr const char* kOverlay = "overlay.geojson";
inline constexpr const char* kStamps = "stamps.json";

void write_json(const std::filesystem::path& path, const ojson& j);
json read_json(const std::filesystem::path& path);

ojson trips_to_json(const std::vector<Trip>& trips);
std::vector<Trip> trips_from_json(const json& j);
ojson to_json(const IngestReport& r);

ojson stops_to_json(const StopStage& s);
StopStage stops_from_json(const json& j);

ojson segments_to_json(const std::vector<std::vector<Segment>>& segments);
std::vector<std::vector<Segment>> segments_from_json(const json& j);

ojson features_to_json(const std::vector<NodeFeature>& features, const LtigaReport* report = nullptr);
std::vector<NodeFeature> features_from_json(const json& j);
void write_features_csv(const std::filesystem::path& path, const std::vector<NodeFeature>& features);

ojson graph_to_json(const StGraph& g);
StGraph graph_from_json(const json& j);
/// i,j,kind,weight per line.
void write_edges_csv(const std::filesystem::path& path, const StGraph& g);

ojson propagation_to_json(const PropagationStage& p);
PropagationStage propagation_from_json(const json& j);
void write_labels_csv(const std::filesystem::path& path, const PropagationStage& p,
                      const std::vector<NodeFeature>& features);

ojson model_to_json(const TrainStage& t);
GcnModel model_from_json(const json& j);
void write_history_csv(const std::filesystem::path& path, const std::vector<LossBreakdown>& history);

struct Predictions {
  std::vector<double> probs_before;  // n x 2, row-major
  std::vector<double> probs_after;
  std::vector<int> labels;           // final labeled set
};

ojson predictions_to_json(const TrainStage& t, const std::vector<NodeFeature>& features, double threshold);
Predictions predictions_from_json(const json& j);

void write_matches_csv(const std::filesystem::path& path, const MatchResult& m);

/// Ground-truth points, predicted abnormal nodes and truth-to-prediction
/// match lines as one FeatureCollection.
ojson overlay_geojson(const GroundTruth& truth, const std::vector<NodeFeature>& features,
                      const std::vector<double>& probs_after, const MatchResult& match, double threshold);

/// Every artifact of a finished run, including the echoed config.
void write_run(const std::filesystem::path& dir, const PipelineResult& r, const PipelineConfig& cfg,
               const GroundTruth& truth, const IngestReport* ingest = nullptr,
               const std::vector<Trip>* trips = nullptr);

}  // namespace asd::artifacts

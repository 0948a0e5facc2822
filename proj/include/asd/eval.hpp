#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace asd {

/// Mann-Whitney AUC; ties between a positive and a negative count one half.
/// labels: 1 = positive. Throws unless both classes are present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Step-wise average precision. Tied scores enter the ranking as one block.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

/// Segments holding at least one flagged node, ascending and unique.
std::vector<std::size_t> aggregate_segments(const std::vector<std::size_t>& node_segment,
                                            const std::vector<std::uint8_t>& flagged);

struct Coord {
  double lng = 0.0;
  double lat = 0.0;
};

struct MatchRow {
  Coord truth;
  Coord predicted;
  double distance_m = 0.0;
};

struct MatchResult {
  std::vector<MatchRow> rows;
  double mean_m = 0.0;
  double median_m = 0.0;
  bool failed = false;  // nothing was predicted
};

/// Nearest predicted point for every ground-truth point.
MatchResult spatial_match(const std::vector<Coord>& truth, const std::vector<Coord>& predicted);

struct EvalReport {
  std::string variant = "Full";
  double auc = 0.0;
  double ap = 0.0;
  double auc_before_self_training = 0.0;
  double ap_before_self_training = 0.0;
  std::size_t evaluated_nodes = 0;
  std::size_t evaluated_positive = 0;
  std::size_t abnormal_nodes = 0;
  std::size_t abnormal_nodes_before_self_training = 0;
  std::size_t abnormal_segments = 0;
  std::vector<double> match_distances;
  double mean_dist = 0.0;
  double median_dist = 0.0;
  bool match_failed = false;
  std::size_t nodes = 0;
  std::size_t skipped_nodes = 0;
  std::size_t edges = 0;
};

nlohmann::ordered_json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

}  // namespace asd

#include "asd/eval.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "asd/error.hpp"
#include "asd/geo.hpp"
#include "asd/indicators.hpp"

namespace asd {

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw PreconditionError("metric: scores and labels differ in length");
  for (int y : labels) {
    if (y != 0 && y != 1) throw PreconditionError("metric: labels must be 0 or 1");
  }
}

std::vector<std::size_t> order_desc(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const std::size_t n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw PreconditionError("auc: both classes must be present");

  // Rank-sum with midranks for ties.
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t q = i; q <= j; ++q) {
      if (labels[idx[q]] == 1) rank_sum += mid;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const std::size_t n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0) throw PreconditionError("average_precision: no positives");
  const auto idx = order_desc(scores);
  double ap = 0.0;
  std::size_t tp = 0, seen = 0, i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    std::size_t group_pos = 0;
    for (std::size_t q = i; q <= j; ++q) group_pos += labels[idx[q]] == 1;
    tp += group_pos;
    seen += j - i + 1;
    ap += static_cast<double>(group_pos) * static_cast<double>(tp) / static_cast<double>(seen);
    i = j + 1;
  }
  return ap / static_cast<double>(n_pos);
}

std::vector<std::size_t> aggregate_segments(const std::vector<std::size_t>& node_segment,
                                            const std::vector<std::uint8_t>& flagged) {
  if (node_segment.size() != flagged.size()) {
    throw PreconditionError("aggregate_segments: predictions must cover every node");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < flagged.size(); ++i) {
    if (flagged[i]) out.push_back(node_segment[i]);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

MatchResult spatial_match(const std::vector<Coord>& truth, const std::vector<Coord>& predicted) {
  MatchResult res;
  if (predicted.empty()) {
    res.failed = true;
    res.mean_m = std::numeric_limits<double>::quiet_NaN();
    res.median_m = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  std::vector<double> dists;
  for (const Coord& g : truth) {
    MatchRow row;
    row.truth = g;
    row.distance_m = std::numeric_limits<double>::infinity();
    for (const Coord& p : predicted) {
      const double d = haversine(g.lng, g.lat, p.lng, p.lat);
      if (d < row.distance_m) {
        row.distance_m = d;
        row.predicted = p;
      }
    }
    dists.push_back(row.distance_m);
    res.rows.push_back(row);
  }
  if (!dists.empty()) {
    res.mean_m = std::accumulate(dists.begin(), dists.end(), 0.0) / static_cast<double>(dists.size());
    res.median_m = median(dists);
  }
  return res;
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["variant"] = r.variant;
  j["auc"] = r.auc;
  j["ap"] = r.ap;
  j["auc_before_self_training"] = r.auc_before_self_training;
  j["ap_before_self_training"] = r.ap_before_self_training;
  j["evaluated_nodes"] = r.evaluated_nodes;
  j["evaluated_positive"] = r.evaluated_positive;
  j["abnormal_nodes"] = r.abnormal_nodes;
  j["abnormal_nodes_before_self_training"] = r.abnormal_nodes_before_self_training;
  j["abnormal_segments"] = r.abnormal_segments;
  j["match_distances"] = r.match_distances;
  // NaN is not representable in JSON; a failed match serializes as null.
  j["mean_dist"] = r.match_failed ? nlohmann::ordered_json() : nlohmann::ordered_json(r.mean_dist);
  j["median_dist"] = r.match_failed ? nlohmann::ordered_json() : nlohmann::ordered_json(r.median_dist);
  j["match_failed"] = r.match_failed;
  j["nodes"] = r.nodes;
  j["skipped_nodes"] = r.skipped_nodes;
  j["edges"] = r.edges;
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.variant = j.at("variant").get<std::string>();
  r.auc = j.at("auc").get<double>();
  r.ap = j.at("ap").get<double>();
  r.auc_before_self_training = j.value("auc_before_self_training", 0.0);
  r.ap_before_self_training = j.value("ap_before_self_training", 0.0);
  r.evaluated_nodes = j.value("evaluated_nodes", std::size_t{0});
  r.evaluated_positive = j.value("evaluated_positive", std::size_t{0});
  r.abnormal_nodes = j.value("abnormal_nodes", std::size_t{0});
  r.abnormal_nodes_before_self_training = j.value("abnormal_nodes_before_self_training", std::size_t{0});
  r.abnormal_segments = j.value("abnormal_segments", std::size_t{0});
  r.match_distances = j.value("match_distances", std::vector<double>{});
  r.match_failed = j.value("match_failed", false);
  if (!r.match_failed) {
    r.mean_dist = j.value("mean_dist", 0.0);
    r.median_dist = j.value("median_dist", 0.0);
  }
  r.nodes = j.value("nodes", std::size_t{0});
  r.skipped_nodes = j.value("skipped_nodes", std::size_t{0});
  r.edges = j.value("edges", std::size_t{0});
  return r;
}

}  // namespace asd

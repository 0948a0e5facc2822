#include "asd/stgraph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "asd/error.hpp"

namespace asd {

namespace {
constexpr double kZeroNorm = 1e-12;
}

StGraph::StGraph(std::vector<GraphNode> nodes, std::vector<Edge> edges, std::size_t skipped_nodes)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), adj_(nodes_.size()), skipped_(skipped_nodes) {
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const Edge& ed = edges_[e];
    if (ed.i == ed.j || ed.i >= nodes_.size() || ed.j >= nodes_.size()) {
      throw PreconditionError("StGraph: invalid edge");
    }
    adj_[ed.i].push_back({ed.j, e});
    adj_[ed.j].push_back({ed.i, e});
  }
  for (auto& a : adj_) {
    std::sort(a.begin(), a.end(), [](const Incidence& x, const Incidence& y) { return x.neighbor < y.neighbor; });
  }
}

GraphStats StGraph::stats() const {
  GraphStats s;
  s.nodes = nodes_.size();
  s.edges = edges_.size();
  for (const Edge& e : edges_) (e.kind == EdgeKind::Intra ? s.intra_edges : s.inter_edges)++;
  s.skipped_nodes = skipped_;
  return s;
}

std::vector<Vec3> weight_features(const std::vector<NodeFeature>& features) {
  std::vector<Vec3> out;
  out.reserve(features.size());
  for (const NodeFeature& f : features) {
    out.push_back({f.confidence * f.refined[0], f.confidence * f.refined[1], f.confidence * f.refined[2]});
  }
  return out;
}

StGraph build_graph(std::vector<GraphNode> nodes, const GraphParams& params, kernels::Backend backend) {
  const std::size_t n = nodes.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (nodes[i].node_id != i) throw PreconditionError("build_graph: node ids must be 0..n-1 in order");
  }

  std::vector<Edge> edges;
  std::set<std::pair<std::size_t, std::size_t>> linked;

  // Intra edges: consecutive in time within one segment.
  std::map<std::size_t, std::vector<std::size_t>> by_segment;
  for (std::size_t i = 0; i < n; ++i) by_segment[nodes[i].segment_id].push_back(i);
  for (auto& [seg, members] : by_segment) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return nodes[a].t < nodes[b].t || (nodes[a].t == nodes[b].t && a < b);
    });
    for (std::size_t q = 1; q < members.size(); ++q) {
      const std::size_t a = std::min(members[q - 1], members[q]);
      const std::size_t b = std::max(members[q - 1], members[q]);
      if (linked.insert({a, b}).second) edges.push_back({a, b, 1.0, EdgeKind::Intra});
    }
  }

  std::vector<std::uint8_t> masked(n, 0);
  std::size_t skipped = 0;
  std::vector<Vec3> x(n);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = nodes[i].x;
    t[i] = nodes[i].t;
    if (kernels::norm(x[i]) < kZeroNorm) {
      masked[i] = 1;
      ++skipped;
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return t[a] < t[b] || (t[a] == t[b] && a < b); });

  auto cand = kernels::window_topk_cosine(backend, x, t, order, masked, params.dt_max, params.inter_knn_cap,
                                          params.min_sim);
  std::map<std::pair<std::size_t, std::size_t>, double> inter;
  for (std::size_t i = 0; i < n; ++i) {
    for (const kernels::Neighbor& nb : cand[i]) {
      const auto key = std::make_pair(std::min(i, nb.index), std::max(i, nb.index));
      if (linked.count(key)) continue;
      inter.emplace(key, nb.weight);
    }
  }
  for (const auto& [key, w] : inter) edges.push_back({key.first, key.second, w, EdgeKind::Inter});
  return StGraph(std::move(nodes), std::move(edges), skipped);
}

kernels::Csr rbf_affinity(const StGraph& graph, double sigma_rbf) {
  if (!(sigma_rbf > 0.0)) throw PreconditionError("rbf_affinity: sigma must be positive");
  kernels::Csr w;
  const std::size_t n = graph.size();
  w.row_ptr.assign(1, 0);
  const double denom = 2.0 * sigma_rbf * sigma_rbf;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& inc : graph.adjacent(i)) {
      const Vec3& a = graph.nodes()[i].x;
      const Vec3& b = graph.nodes()[inc.neighbor].x;
      double d2 = 0.0;
      for (int d = 0; d < 3; ++d) d2 += (a[d] - b[d]) * (a[d] - b[d]);
      w.col.push_back(inc.neighbor);
      w.val.push_back(std::exp(-d2 / denom));
    }
    w.row_ptr.push_back(w.col.size());
  }
  return w;
}

}  // namespace asd

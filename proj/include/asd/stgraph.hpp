#pragma once

#include <string>
#include <vector>

#include "asd/geo.hpp"
#include "asd/indicators.hpp"
#include "asd/kernels.hpp"

namespace asd {

enum class EdgeKind { Intra, Inter };

struct GraphNode {
  std::size_t node_id = 0;
  std::size_t segment_id = 0;
  Vec3 x{0.0, 0.0, 0.0};  // confidence-weighted feature
  double t = 0.0;
};

/// Undirected edge, stored once with i < j.
struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;
  double weight = 1.0;  // 1 for intra edges, cosine for inter edges
  EdgeKind kind = EdgeKind::Intra;
};

struct GraphParams {
  double dt_max = 600.0;         // s, inter-edge time window
  std::size_t inter_knn_cap = 10;
  double min_sim = 0.2;
  double sigma_rbf = 1.0;
};

struct GraphStats {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t intra_edges = 0;
  std::size_t inter_edges = 0;
  std::size_t skipped_nodes = 0;
};

class StGraph {
 public:
  StGraph() = default;
  StGraph(std::vector<GraphNode> nodes, std::vector<Edge> edges, std::size_t skipped_nodes);

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t skipped_nodes() const { return skipped_; }
  GraphStats stats() const;

  struct Incidence {
    std::size_t neighbor;
    std::size_t edge;
  };
  /// Incident edges of node i, ordered by neighbour index.
  const std::vector<Incidence>& adjacent(std::size_t i) const { return adj_[i]; }

 private:
  std::vector<GraphNode> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Incidence>> adj_;
  std::size_t skipped_ = 0;
};

/// x^w = C * refined indicator vector.
std::vector<Vec3> weight_features(const std::vector<NodeFeature>& features);

/// Nodes must be indexed 0..n-1 by node_id. Intra edges chain temporally
/// consecutive nodes of one segment; inter edges join nodes within dt_max
/// whose weighted features are cosine-similar (top-cap per node, union).
/// Zero-norm nodes get no inter edges and are counted as skipped.
StGraph build_graph(std::vector<GraphNode> nodes, const GraphParams& params,
                    kernels::Backend backend = kernels::Backend::Serial);

/// Gaussian affinity exp(-|xi - xj|^2 / (2 sigma^2)) on graph edges only,
/// as a symmetric sparse matrix.
kernels::Csr rbf_affinity(const StGraph& graph, double sigma_rbf);

}  // namespace asd

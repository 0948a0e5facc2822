#pragma once

#include <cstdint>
#include <vector>

#include "asd/geo.hpp"
#include "asd/kernels.hpp"
#include "asd/stgraph.hpp"

namespace asd {

/// Graph structure as seen by the classifier: symmetric normalisation with
/// self-loops, intra edges fixed at weight 1, inter edges learnable.
class GcnGraph {
 public:
  struct EdgeRef {
    std::size_t i = 0;
    std::size_t j = 0;
    std::ptrdiff_t param = -1;  // index into the learnable edge weights, -1 if fixed
    double fixed_weight = 1.0;
    double norm = 1.0;  // 1 / sqrt(deg i * deg j)
  };
  /// Node i has learnable-or-fixed edges to two temporally consecutive
  /// nodes of one segment: a, b are edge indices.
  struct Triple {
    std::size_t a = 0;
    std::size_t b = 0;
  };

  GcnGraph() = default;
  explicit GcnGraph(const StGraph& graph);

  std::size_t size() const { return n_; }
  const std::vector<EdgeRef>& edges() const { return edges_; }
  const std::vector<Triple>& triples() const { return triples_; }
  const std::vector<double>& initial_edge_weights() const { return init_w_; }
  double self_norm(std::size_t i) const { return self_norm_[i]; }

  /// Normalised propagation matrix for the given learnable edge weights.
  kernels::Csr propagation(const std::vector<double>& edge_w) const;

  double edge_weight(std::size_t e, const std::vector<double>& edge_w) const {
    return edges_[e].param < 0 ? edges_[e].fixed_weight : edge_w[static_cast<std::size_t>(edges_[e].param)];
  }

 private:
  std::size_t n_ = 0;
  std::vector<EdgeRef> edges_;
  std::vector<Triple> triples_;
  std::vector<double> init_w_;
  std::vector<double> self_norm_;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> row_entries_;  // (col, edge) per row
};

/// Two-layer classifier: input -> hidden (rectifier) -> 2-way softmax.
/// All trainable values live in one flat vector.
struct GcnModel {
  std::size_t in_dim = 3;
  std::size_t hidden = 16;
  std::size_t out_dim = 2;
  std::size_t n_edge = 0;
  std::vector<double> params;
  // Column standardisation applied to raw node features.
  std::vector<double> in_mean;
  std::vector<double> in_std;

  std::size_t off_w1() const { return 0; }
  std::size_t off_b1() const { return in_dim * hidden; }
  std::size_t off_w2() const { return off_b1() + hidden; }
  std::size_t off_b2() const { return off_w2() + hidden * out_dim; }
  std::size_t off_edge() const { return off_b2() + out_dim; }
  std::size_t size() const { return off_edge() + n_edge; }

  std::vector<double> edge_weights() const;
};

struct TrainConfig {
  double lambda1 = 1e-4;
  double lambda2 = 1e-3;
  double learning_rate = 0.01;
  std::size_t epochs = 300;
  std::size_t self_train_rounds = 3;
  double tau = 0.9;
  std::uint64_t seed = 7;
  std::size_t hidden = 16;
  bool class_weighting = true;
  bool balanced_pseudo_labels = true;  // self-training accepts equal counts per class

  void validate() const;
};

struct LossBreakdown {
  double sup = 0.0;
  double sparsity = 0.0;
  double temporal = 0.0;
  double total = 0.0;
};

/// Fresh model with Glorot-uniform layer weights, zero biases, edge
/// weights copied from the graph and input scaling fitted to `features`.
GcnModel init_model(const GcnGraph& graph, const std::vector<Vec3>& features, std::size_t hidden,
                    std::uint64_t seed);

/// Class probabilities, row-major n x 2.
std::vector<double> forward(const GcnModel& model, const GcnGraph& graph, const std::vector<Vec3>& features,
                            kernels::Backend backend = kernels::Backend::Serial);

double sparsity_loss(const std::vector<double>& edge_weights);
double temporal_loss(const GcnGraph& graph, const std::vector<double>& edge_weights);
/// (Weighted) mean cross-entropy over nodes with label >= 0.
double supervised_loss(const std::vector<double>& probs, const std::vector<int>& labels, bool class_weighting);

LossBreakdown loss(const GcnModel& model, const GcnGraph& graph, const std::vector<Vec3>& features,
                   const std::vector<int>& labels, double lambda1, double lambda2, bool class_weighting = true,
                   kernels::Backend backend = kernels::Backend::Serial);

/// Analytic gradient of the total loss with respect to model.params.
std::vector<double> gradient(const GcnModel& model, const GcnGraph& graph, const std::vector<Vec3>& features,
                             const std::vector<int>& labels, double lambda1, double lambda2,
                             bool class_weighting = true, LossBreakdown* value = nullptr,
                             kernels::Backend backend = kernels::Backend::Serial);

struct TrainResult {
  GcnModel model;
  std::vector<LossBreakdown> history;
};

/// Full-batch Adam for cfg.epochs, continuing from `model`.
TrainResult train(GcnModel model, const GcnGraph& graph, const std::vector<Vec3>& features,
                  const std::vector<int>& labels, const TrainConfig& cfg,
                  kernels::Backend backend = kernels::Backend::Serial);

struct SelfTrainRound {
  std::size_t round = 0;
  std::size_t added = 0;
  std::size_t added_abnormal = 0;
  std::size_t labeled = 0;
};

struct SelfTrainResult {
  GcnModel model;
  std::vector<double> probs;         // final predictions
  std::vector<int> labels;           // final labeled set (seeds + pseudo)
  std::vector<SelfTrainRound> rounds;
  std::vector<LossBreakdown> history;
};

/// Adds unlabeled nodes whose max probability exceeds tau with their argmax
/// class, retrains, and repeats for cfg.self_train_rounds rounds or until
/// nothing new qualifies.
SelfTrainResult self_train(GcnModel model, const GcnGraph& graph, const std::vector<Vec3>& features,
                           std::vector<int> labels, const TrainConfig& cfg,
                           kernels::Backend backend = kernels::Backend::Serial);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t checked = 0;
};

/// Central finite differences against the analytic gradient.
GradCheckResult grad_check(const GcnModel& model, const GcnGraph& graph, const std::vector<Vec3>& features,
                           const std::vector<int>& labels, double lambda1, double lambda2, double step = 1e-5,
                           bool class_weighting = true);

}  // namespace asd

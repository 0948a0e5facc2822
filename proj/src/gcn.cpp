#include "asd/gcn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "asd/error.hpp"
#include "asd/label_prop.hpp"
#include "asd/rng.hpp"

namespace asd {

namespace {

constexpr std::size_t kSelf = std::numeric_limits<std::size_t>::max();
constexpr double kProbFloor = 1e-300;

struct Cache {
  std::vector<double> xn;  // n x in
  std::vector<double> u1;  // n x h
  std::vector<double> z1;  // n x h
  std::vector<double> h1;  // n x h
  std::vector<double> u2;  // n x out
  std::vector<double> z2;  // n x out
  std::vector<double> p;   // n x out
  kernels::Csr a;
};

// y (n x m) = x (n x k) * w (k x m), w row-major.
void dense(const std::vector<double>& x, std::size_t n, std::size_t k, const double* w, std::size_t m,
           std::vector<double>& y) {
  y.assign(n * m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t q = 0; q < k; ++q) {
      const double xv = x[r * k + q];
      if (xv == 0.0) continue;
      for (std::size_t c = 0; c < m; ++c) y[r * m + c] += xv * w[q * m + c];
    }
  }
}

std::vector<double> normalise_inputs(const GcnModel& model, const std::vector<Vec3>& features) {
  if (model.in_dim != 3) throw PreconditionError("gcn: feature dimension mismatch");
  std::vector<double> xn(features.size() * 3);
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t d = 0; d < 3; ++d) {
      const double mean = model.in_mean.empty() ? 0.0 : model.in_mean[d];
      const double sd = model.in_std.empty() ? 1.0 : model.in_std[d];
      xn[i * 3 + d] = (features[i][d] - mean) / sd;
    }
  }
  return xn;
}

Cache run_forward(const GcnModel& model, const GcnGraph& graph, const std::vector<Vec3>& features,
                  kernels::Backend backend) {
  const std::size_t n = graph.size();
  if (features.size() != n) throw PreconditionError("gcn: feature count does not match graph size");
  if (model.params.size() != model.size()) throw PreconditionError("gcn: parameter vector has wrong size");
  const std::size_t h = model.hidden, o = model.out_dim;
  Cache c;
  c.xn = normalise_inputs(model, features);
  c.a = graph.propagation(model.edge_weights());

  dense(c.xn, n, model.in_dim, model.params.data() + model.off_w1(), h, c.u1);
  c.z1.assign(n * h, 0.0);
  kernels::spmm(backend, c.a, c.u1, h, c.z1);
  c.h1.resize(n * h);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t q = 0; q < h; ++q) {
      double& z = c.z1[i * h + q];
      z += model.params[model.off_b1() + q];
      c.h1[i * h + q] = z > 0.0 ? z : 0.0;
    }
  }
  dense(c.h1, n, h, model.params.data() + model.off_w2(), o, c.u2);
  c.z2.assign(n * o, 0.0);
  kernels::spmm(backend, c.a, c.u2, o, c.z2);
  c.p.resize(n * o);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < o; ++q) {
      c.z2[i * o + q] += model.params[model.off_b2() + q];
      mx = std::max(mx, c.z2[i * o + q]);
    }
    double s = 0.0;
    for (std::size_t q = 0; q < o; ++q) s += std::exp(c.z2[i * o + q] - mx);
    for (std::size_t q = 0; q < o; ++q) c.p[i * o + q] = std::exp(c.z2[i * o + q] - mx) / s;
  }
  return c;
}

// Per-node weights of the supervised term: inverse class frequency over the
// labeled set, normalised so the term is a weighted mean.
std::vector<double> label_weights(const std::vector<int>& labels, std::size_t classes, bool class_weighting) {
  std::vector<std::size_t> counts(classes, 0);
  std::size_t n_l = 0;
  for (int y : labels) {
    if (y < 0) continue;
    if (static_cast<std::size_t>(y) >= classes) throw PreconditionError("gcn: label out of range");
    ++counts[static_cast<std::size_t>(y)];
    ++n_l;
  }
  if (n_l == 0) throw PreconditionError("gcn: empty labeled set");
  std::size_t present = 0;
  for (auto c : counts) present += c > 0;
  std::vector<double> w(labels.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    const double cw = class_weighting
                          ? static_cast<double>(n_l) /
                                (static_cast<double>(present) * static_cast<double>(counts[static_cast<std::size_t>(labels[i])]))
                          : 1.0;
    w[i] = cw / static_cast<double>(n_l);
  }
  return w;
}

}  // namespace

// ---------------------------------------------------------------------------

GcnGraph::GcnGraph(const StGraph& graph) : n_(graph.size()) {
  std::vector<double> deg(n_, 1.0);
  for (const Edge& e : graph.edges()) {
    deg[e.i] += 1.0;
    deg[e.j] += 1.0;
  }
  self_norm_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) self_norm_[i] = 1.0 / deg[i];

  row_entries_.assign(n_, {});
  for (std::size_t i = 0; i < n_; ++i) row_entries_[i].push_back({i, kSelf});
  for (std::size_t e = 0; e < graph.edges().size(); ++e) {
    const Edge& ed = graph.edges()[e];
    EdgeRef r;
    r.i = ed.i;
    r.j = ed.j;
    r.norm = 1.0 / std::sqrt(deg[ed.i] * deg[ed.j]);
    if (ed.kind == EdgeKind::Inter) {
      r.param = static_cast<std::ptrdiff_t>(init_w_.size());
      init_w_.push_back(ed.weight);
    } else {
      r.fixed_weight = ed.weight;
    }
    edges_.push_back(r);
    row_entries_[ed.i].push_back({ed.j, e});
    row_entries_[ed.j].push_back({ed.i, e});
  }
  for (auto& row : row_entries_) std::sort(row.begin(), row.end());

  // Temporal triples: node i adjacent to both ends of an intra edge (a, b).
  for (std::size_t e = 0; e < graph.edges().size(); ++e) {
    const Edge& ed = graph.edges()[e];
    if (ed.kind != EdgeKind::Intra) continue;
    std::vector<std::pair<std::size_t, std::size_t>> na, nb;  // (neighbor, edge)
    for (const auto& inc : graph.adjacent(ed.i)) na.push_back({inc.neighbor, inc.edge});
    for (const auto& inc : graph.adjacent(ed.j)) nb.push_back({inc.neighbor, inc.edge});
    std::size_t p = 0, q = 0;
    while (p < na.size() && q < nb.size()) {
      if (na[p].first < nb[q].first) {
        ++p;
      } else if (nb[q].first < na[p].first) {
        ++q;
      } else {
        triples_.push_back({na[p].second, nb[q].second});
        ++p;
        ++q;
      }
    }
  }
}

kernels::Csr GcnGraph::propagation(const std::vector<double>& edge_w) const {
  kernels::Csr a;
  a.row_ptr.assign(1, 0);
  for (std::size_t i = 0; i < n_; ++i) {
    for (const auto& [col, e] : row_entries_[i]) {
      a.col.push_back(col);
      a.val.push_back(e == kSelf ? self_norm_[i] : edge_weight(e, edge_w) * edges_[e].norm);
    }
    a.row_ptr.push_back(a.col.size());
  }
  return a;
}

std::vector<double> GcnModel::edge_weights() const {
  return {params.begin() + static_cast<std::ptrdiff_t>(off_edge()), params.end()};
}

void TrainConfig::validate() const {
  if (lambda1 < 0 || lambda2 < 0) throw PreconditionError("train: lambda1 and lambda2 must be >= 0");
  if (!(tau > 0.5 && tau <= 1.0)) throw PreconditionError("train: tau must lie in (0.5, 1]");
  if (!(learning_rate > 0.0) || hidden == 0) throw PreconditionError("train: bad learning rate or width");
}

GcnModel init_model(const GcnGraph& graph, const std::vector<Vec3>& features, std::size_t hidden,
                    std::uint64_t seed) {
  GcnModel m;
  m.hidden = hidden;
  m.n_edge = graph.initial_edge_weights().size();
  m.params.assign(m.size(), 0.0);
  Rng rng(substream(seed, "gcn.init"));
  const double lim1 = std::sqrt(6.0 / static_cast<double>(m.in_dim + m.hidden));
  for (std::size_t q = 0; q < m.in_dim * m.hidden; ++q) m.params[m.off_w1() + q] = rng.uniform(-lim1, lim1);
  const double lim2 = std::sqrt(6.0 / static_cast<double>(m.hidden + m.out_dim));
  for (std::size_t q = 0; q < m.hidden * m.out_dim; ++q) m.params[m.off_w2() + q] = rng.uniform(-lim2, lim2);
  std::copy(graph.initial_edge_weights().begin(), graph.initial_edge_weights().end(),
            m.params.begin() + static_cast<std::ptrdiff_t>(m.off_edge()));

  m.in_mean.assign(3, 0.0);
  m.in_std.assign(3, 1.0);
  if (!features.empty()) {
    for (std::size_t d = 0; d < 3; ++d) {
      double mean = 0.0;
      for (const Vec3& f : features) mean += f[d];
      mean /= static_cast<double>(features.size());
      double var = 0.0;
      for (const Vec3& f : features) var += (f[d] - mean) * (f[d] - mean);
      const double sd = std::sqrt(var / static_cast<double>(features.size()));
      m.in_mean[d] = mean;
      m.in_std[d] = sd > 1e-12 ? sd : 1.0;
    }
  }
  return m;
}

std::vector<double> forward(const GcnModel& model, const GcnGraph& graph, const std::vector<Vec3>& features,
                            kernels::Backend backend) {
  return run_forward(model, graph, features, backend).p;
}

double sparsity_loss(const std::vector<double>& edge_weights) {
  double s = 0.0;
  for (double w : edge_weights) s += std::abs(w);
  return s;
}

double temporal_loss(const GcnGraph& graph, const std::vector<double>& edge_weights) {
  double s = 0.0;
  for (const auto& tr : graph.triples()) {
    const double d = graph.edge_weight(tr.a, edge_weights) - graph.edge_weight(tr.b, edge_weights);
    s += d * d;
  }
  return s;
}

double supervised_loss(const std::vector<double>& probs, const std::vector<int>& labels, bool class_weighting) {
  const std::size_t o = kClasses;
  if (probs.size() != labels.size() * o) throw PreconditionError("supervised_loss: size mismatch");
  const auto w = label_weights(labels, o, class_weighting);
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    s -= w[i] * std::log(std::max(probs[i * o + static_cast<std::size_t>(labels[i])], kProbFloor));
  }
  return s;
}

LossBreakdown loss(const GcnModel& model, const GcnGraph& graph, const std::vector<Vec3>& features,
                   const std::vector<int>& labels, double lambda1, double lambda2, bool class_weighting,
                   kernels::Backend backend) {
  LossBreakdown lb;
  const auto p = forward(model, graph, features, backend);
  const auto ew = model.edge_weights();
  lb.sup = supervised_loss(p, labels, class_weighting);
  lb.sparsity = sparsity_loss(ew);
  lb.temporal = temporal_loss(graph, ew);
  lb.total = lb.sup + lambda1 * lb.sparsity + lambda2 * lb.temporal;
  return lb;
}

std::vector<double> gradient(const GcnModel& model, const GcnGraph& graph, const std::vector<Vec3>& features,
                             const std::vector<int>& labels, double lambda1, double lambda2, bool class_weighting,
                             LossBreakdown* value, kernels::Backend backend) {
  const std::size_t n = graph.size(), in = model.in_dim, h = model.hidden, o = model.out_dim;
  if (labels.size() != n) throw PreconditionError("gradient: label vector size mismatch");
  Cache c = run_forward(model, graph, features, backend);
  const auto lw = label_weights(labels, o, class_weighting);
  const auto ew = model.edge_weights();
  std::vector<double> g(model.size(), 0.0);

  if (value) {
    value->sup = supervised_loss(c.p, labels, class_weighting);
    value->sparsity = sparsity_loss(ew);
    value->temporal = temporal_loss(graph, ew);
    value->total = value->sup + lambda1 * value->sparsity + lambda2 * value->temporal;
  }

  std::vector<double> dz2(n * o, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    for (std::size_t q = 0; q < o; ++q) {
      const double target = static_cast<int>(q) == labels[i] ? 1.0 : 0.0;
      dz2[i * o + q] = lw[i] * (c.p[i * o + q] - target);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t q = 0; q < o; ++q) g[model.off_b2() + q] += dz2[i * o + q];
  }
  std::vector<double> du2(n * o, 0.0);
  kernels::spmm(backend, c.a, dz2, o, du2);  // propagation matrix is symmetric
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < h; ++r) {
      const double hv = c.h1[i * h + r];
      if (hv == 0.0) continue;
      for (std::size_t q = 0; q < o; ++q) g[model.off_w2() + r * o + q] += hv * du2[i * o + q];
    }
  }
  std::vector<double> dz1(n * h, 0.0);
  const double* w2 = model.params.data() + model.off_w2();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < h; ++r) {
      if (!(c.z1[i * h + r] > 0.0)) continue;
      double s = 0.0;
      for (std::size_t q = 0; q < o; ++q) s += du2[i * o + q] * w2[r * o + q];
      dz1[i * h + r] = s;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < h; ++r) g[model.off_b1() + r] += dz1[i * h + r];
  }
  std::vector<double> du1(n * h, 0.0);
  kernels::spmm(backend, c.a, dz1, h, du1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < in; ++d) {
      const double xv = c.xn[i * in + d];
      if (xv == 0.0) continue;
      for (std::size_t r = 0; r < h; ++r) g[model.off_w1() + d * h + r] += xv * du1[i * h + r];
    }
  }

  // Learnable edge weights enter both layers through the propagation matrix.
  const auto& edges = graph.edges();
  for (const auto& e : edges) {
    if (e.param < 0) continue;
    double s = 0.0;
    for (std::size_t q = 0; q < o; ++q) {
      s += dz2[e.i * o + q] * c.u2[e.j * o + q] + dz2[e.j * o + q] * c.u2[e.i * o + q];
    }
    for (std::size_t r = 0; r < h; ++r) {
      s += dz1[e.i * h + r] * c.u1[e.j * h + r] + dz1[e.j * h + r] * c.u1[e.i * h + r];
    }
    const std::size_t p = static_cast<std::size_t>(e.param);
    const double w = ew[p];
    const double sign = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
    g[model.off_edge() + p] += e.norm * s + lambda1 * sign;
  }
  for (const auto& tr : graph.triples()) {
    const double diff = graph.edge_weight(tr.a, ew) - graph.edge_weight(tr.b, ew);
    if (edges[tr.a].param >= 0) g[model.off_edge() + static_cast<std::size_t>(edges[tr.a].param)] += 2.0 * lambda2 * diff;
    if (edges[tr.b].param >= 0) g[model.off_edge() + static_cast<std::size_t>(edges[tr.b].param)] -= 2.0 * lambda2 * diff;
  }
  return g;
}

TrainResult train(GcnModel model, const GcnGraph& graph, const std::vector<Vec3>& features,
                  const std::vector<int>& labels, const TrainConfig& cfg, kernels::Backend backend) {
  cfg.validate();
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  TrainResult res;
  std::vector<double> m1(model.size(), 0.0), m2(model.size(), 0.0);
  double b1t = 1.0, b2t = 1.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    LossBreakdown lb;
    const auto g = gradient(model, graph, features, labels, cfg.lambda1, cfg.lambda2, cfg.class_weighting, &lb,
                            backend);
    if (!std::isfinite(lb.total)) {
      throw Error("train: loss diverged at epoch " + std::to_string(epoch) + " (sup=" + std::to_string(lb.sup) +
                  ")");
    }
    res.history.push_back(lb);
    b1t *= kBeta1;
    b2t *= kBeta2;
    for (std::size_t q = 0; q < model.size(); ++q) {
      m1[q] = kBeta1 * m1[q] + (1.0 - kBeta1) * g[q];
      m2[q] = kBeta2 * m2[q] + (1.0 - kBeta2) * g[q] * g[q];
      const double mh = m1[q] / (1.0 - b1t);
      const double vh = m2[q] / (1.0 - b2t);
      model.params[q] -= cfg.learning_rate * mh / (std::sqrt(vh) + kAdamEps);
    }
  }
  res.model = std::move(model);
  return res;
}

SelfTrainResult self_train(GcnModel model, const GcnGraph& graph, const std::vector<Vec3>& features,
                           std::vector<int> labels, const TrainConfig& cfg, kernels::Backend backend) {
  cfg.validate();
  SelfTrainResult res;
  std::vector<double> probs = forward(model, graph, features, backend);
  for (std::size_t round = 1; round <= cfg.self_train_rounds; ++round) {
    SelfTrainRound info;
    info.round = round;
    std::vector<std::pair<double, std::size_t>> cand[kClasses];
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= 0) continue;
      const double pa = probs[i * kClasses + kAbnormal];
      const double pn = probs[i * kClasses + kNormal];
      if (std::max(pa, pn) > cfg.tau) cand[pa > pn ? kAbnormal : kNormal].push_back({std::max(pa, pn), i});
    }
    std::size_t take[kClasses] = {cand[0].size(), cand[1].size()};
    if (cfg.balanced_pseudo_labels) {
      // Equal numbers per class, most confident first.
      const std::size_t m = std::min(take[0], take[1]);
      take[0] = take[1] = m;
    }
    for (std::size_t c = 0; c < kClasses; ++c) {
      std::stable_sort(cand[c].begin(), cand[c].end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      for (std::size_t q = 0; q < take[c]; ++q) {
        labels[cand[c][q].second] = static_cast<int>(c);
        ++info.added;
        if (static_cast<int>(c) == kAbnormal) ++info.added_abnormal;
      }
    }
    for (int y : labels) info.labeled += y >= 0;
    res.rounds.push_back(info);
    if (info.added == 0) break;
    auto tr = train(std::move(model), graph, features, labels, cfg, backend);
    model = std::move(tr.model);
    res.history.insert(res.history.end(), tr.history.begin(), tr.history.end());
    probs = forward(model, graph, features, backend);
  }
  res.model = std::move(model);
  res.probs = std::move(probs);
  res.labels = std::move(labels);
  return res;
}

GradCheckResult grad_check(const GcnModel& model, const GcnGraph& graph, const std::vector<Vec3>& features,
                           const std::vector<int>& labels, double lambda1, double lambda2, double step,
                           bool class_weighting) {
  if (graph.size() > 20) throw PreconditionError("grad_check: fixture must have at most 20 nodes");
  const auto analytic = gradient(model, graph, features, labels, lambda1, lambda2, class_weighting);
  GradCheckResult res;
  GcnModel probe = model;
  for (std::size_t q = 0; q < model.size(); ++q) {
    const double orig = model.params[q];
    probe.params[q] = orig + step;
    const double up = loss(probe, graph, features, labels, lambda1, lambda2, class_weighting).total;
    probe.params[q] = orig - step;
    const double down = loss(probe, graph, features, labels, lambda1, lambda2, class_weighting).total;
    probe.params[q] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double scale = std::max(std::abs(analytic[q]), std::abs(numeric));
    // Both sides zero to within rounding: nothing to compare.
    if (scale < 1e-8) continue;
    const double rel = std::abs(analytic[q] - numeric) / scale;
    ++res.checked;
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_param = q;
    }
  }
  return res;
}

}  // namespace asd

#include "asd/label_prop.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "asd/error.hpp"

namespace asd {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Seed:
      return "seed";
    case Provenance::Propagated:
      return "propagated";
    case Provenance::Pseudo:
      return "pseudo";
    case Provenance::Unlabeled:
      return "unlabeled";
  }
  return "unlabeled";
}

double label_energy(const kernels::Csr& w, const std::vector<double>& F) {
  double q = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t p = w.row_ptr[i]; p < w.row_ptr[i + 1]; ++p) {
      const std::size_t j = w.col[p];
      double d2 = 0.0;
      for (std::size_t c = 0; c < kClasses; ++c) {
        const double diff = F[i * kClasses + c] - F[j * kClasses + c];
        d2 += diff * diff;
      }
      q += w.val[p] * d2;
    }
  }
  return q;
}

LabelState propagate(const kernels::Csr& affinity, const std::map<std::size_t, int>& seeds,
                     const PropagationParams& params, kernels::Backend backend) {
  const std::size_t n = affinity.rows();
  if (seeds.empty()) throw PreconditionError("propagate: no seed labels");
  LabelState st;
  st.F.assign(n * kClasses, 1.0 / kClasses);
  st.seed_mask.assign(n, 0);
  st.hard_label.assign(n, -1);
  st.provenance.assign(n, Provenance::Unlabeled);
  for (const auto& [node, cls] : seeds) {
    if (node >= n) throw PreconditionError("propagate: seed node out of range");
    if (cls != kAbnormal && cls != kNormal) throw PreconditionError("propagate: seed class must be 0 or 1");
    st.seed_mask[node] = 1;
    st.hard_label[node] = cls;
    st.provenance[node] = Provenance::Seed;
    for (std::size_t c = 0; c < kClasses; ++c) st.F[node * kClasses + c] = static_cast<int>(c) == cls ? 1.0 : 0.0;
  }

  std::vector<double> degree(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = affinity.row_ptr[i]; p < affinity.row_ptr[i + 1]; ++p) {
      if (affinity.val[p] < 0.0) throw PreconditionError("propagate: negative affinity");
      degree[i] += affinity.val[p];
    }
  }

  std::vector<double> next(st.F.size());
  st.energy.push_back(label_energy(affinity, st.F));
  for (std::size_t it = 0; it < params.max_iters; ++it) {
    const double change = kernels::propagate_step(backend, affinity, degree, st.seed_mask, st.F, next, kClasses);
    // Rows stay stochastic up to rounding; renormalise after checking drift.
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t c = 0; c < kClasses; ++c) sum += next[i * kClasses + c];
      if (std::abs(sum - 1.0) > 1e-9) throw Error("propagate: row " + std::to_string(i) + " lost stochasticity");
      for (std::size_t c = 0; c < kClasses; ++c) next[i * kClasses + c] /= sum;
    }
    st.F.swap(next);
    st.energy.push_back(label_energy(affinity, st.F));
    st.iterations = it + 1;
    if (change < params.tol) {
      st.converged = true;
      break;
    }
  }

  // Nodes reachable from a seed through positive affinity carry propagated
  // labels; the rest keep the uniform prior.
  std::vector<std::uint8_t> reached(st.seed_mask);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < n; ++i) {
    if (reached[i]) queue.push_back(i);
  }
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    for (std::size_t p = affinity.row_ptr[i]; p < affinity.row_ptr[i + 1]; ++p) {
      const std::size_t j = affinity.col[p];
      if (!reached[j] && affinity.val[p] > 0.0) {
        reached[j] = 1;
        queue.push_back(j);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!st.seed_mask[i] && reached[i]) st.provenance[i] = Provenance::Propagated;
  }
  return st;
}

void GateConfig::validate() const {
  auto ok = [](double tau) { return tau > 0.5 && tau <= 1.0; };
  if (!ok(tau_abnormal) || !ok(tau_normal)) throw PreconditionError("gate thresholds must lie in (0.5, 1]");
}

LabelCounts count_labels(const LabelState& state) {
  LabelCounts c;
  for (std::size_t i = 0; i < state.size(); ++i) {
    switch (state.provenance[i]) {
      case Provenance::Seed:
        (state.hard_label[i] == kAbnormal ? c.seed_abnormal : c.seed_normal)++;
        break;
      case Provenance::Pseudo:
        (state.hard_label[i] == kAbnormal ? c.pseudo_abnormal : c.pseudo_normal)++;
        break;
      default:
        ++c.unlabeled;
    }
  }
  return c;
}

LabelState gate_pseudo_labels(const LabelState& state, const GateConfig& cfg, LabelCounts* counts) {
  cfg.validate();
  LabelState out = state;
  struct Cand {
    double p;
    std::size_t node;
  };
  std::vector<Cand> abn, nor;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state.seed_mask[i]) continue;
    if (state.provenance[i] == Provenance::Pseudo) continue;
    out.provenance[i] = Provenance::Unlabeled;
    out.hard_label[i] = -1;
    if (state.p_abnormal(i) >= cfg.tau_abnormal) abn.push_back({state.p_abnormal(i), i});
    else if (state.p_normal(i) >= cfg.tau_normal) nor.push_back({state.p_normal(i), i});
  }
  auto rank = [](const Cand& a, const Cand& b) { return a.p > b.p || (a.p == b.p && a.node < b.node); };
  std::sort(abn.begin(), abn.end(), rank);
  std::sort(nor.begin(), nor.end(), rank);
  for (std::size_t q = 0; q < std::min(cfg.max_new_abnormal, abn.size()); ++q) {
    out.provenance[abn[q].node] = Provenance::Pseudo;
    out.hard_label[abn[q].node] = kAbnormal;
  }
  for (std::size_t q = 0; q < std::min(cfg.max_new_normal, nor.size()); ++q) {
    out.provenance[nor[q].node] = Provenance::Pseudo;
    out.hard_label[nor[q].node] = kNormal;
  }
  if (counts) *counts = count_labels(out);
  return out;
}

}  // namespace asd

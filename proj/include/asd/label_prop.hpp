#pragma once

#include <cstdint>
#include <map>
#include <string_view>
#include <vector>

#include "asd/kernels.hpp"

namespace asd {

inline constexpr std::size_t kClasses = 2;
inline constexpr int kAbnormal = 0;
inline constexpr int kNormal = 1;

enum class Provenance { Seed, Propagated, Pseudo, Unlabeled };

std::string_view to_string(Provenance p);

/// Soft labels: row-major |V| x 2, column 0 = abnormal, column 1 = normal.
struct LabelState {
  std::vector<double> F;
  std::vector<Provenance> provenance;
  std::vector<std::uint8_t> seed_mask;
  std::vector<int> hard_label;  // -1 unless Seed or Pseudo
  std::vector<double> energy;   // Q(F) before the first sweep and after each sweep
  std::size_t iterations = 0;
  bool converged = false;

  std::size_t size() const { return provenance.size(); }
  double p_abnormal(std::size_t i) const { return F[i * kClasses + kAbnormal]; }
  double p_normal(std::size_t i) const { return F[i * kClasses + kNormal]; }
};

struct PropagationParams {
  std::size_t max_iters = 1000;
  double tol = 1e-6;
};

/// Consistency energy sum_{i,j} w_ij |F_i - F_j|^2 over the sparse support.
double label_energy(const kernels::Csr& w, const std::vector<double>& F);

/// Clamped harmonic diffusion F <- D^-1 W F with seed rows fixed.
/// `seeds` maps node index -> class. Throws if there are no seeds.
LabelState propagate(const kernels::Csr& affinity, const std::map<std::size_t, int>& seeds,
                     const PropagationParams& params = {}, kernels::Backend backend = kernels::Backend::Serial);

struct GateConfig {
  double tau_abnormal = 0.995;
  double tau_normal = 0.995;
  std::size_t max_new_abnormal = 5;
  std::size_t max_new_normal = 200;

  void validate() const;
};

struct LabelCounts {
  std::size_t seed_abnormal = 0;
  std::size_t seed_normal = 0;
  std::size_t pseudo_abnormal = 0;
  std::size_t pseudo_normal = 0;
  std::size_t unlabeled = 0;
};

LabelCounts count_labels(const LabelState& state);

/// Promotes confident non-seed nodes to pseudo-labels under per-class caps;
/// everything else that is not a seed becomes Unlabeled.
LabelState gate_pseudo_labels(const LabelState& state, const GateConfig& cfg, LabelCounts* counts = nullptr);

}  // namespace asd

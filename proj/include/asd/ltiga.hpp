#pragma once

#include <vector>

#include "asd/geo.hpp"
#include "asd/indicators.hpp"
#include "asd/kernels.hpp"

namespace asd {

struct LtigaParams {
  double sigma = 0.5;       // kernel bandwidth
  std::size_t k = 5;        // neighbours per point
  double eps = 1e-6;
  double tau_c = 0.5;       // segments with confidence below this are smoothed
  bool rescale = true;      // map smoothed z-scores back to indicator units
  bool enabled = true;      // false skips smoothing entirely

  void validate() const;
};

/// Per-dimension location and scale of one segment's indicator vectors.
struct ScaleStats {
  Vec3 mean{0.0, 0.0, 0.0};
  Vec3 std{0.0, 0.0, 0.0};
  double eps = 1e-6;
};

struct Standardized {
  std::vector<Vec3> z;
  ScaleStats stats;
};

Standardized standardize(const std::vector<Vec3>& vectors, double eps = 1e-6);

double kernel_similarity(const Vec3& a, const Vec3& b, double sigma);

std::vector<Vec3> smooth(const std::vector<Vec3>& standardized, const LtigaParams& params,
                         kernels::Backend backend = kernels::Backend::Serial);

/// Inverse of standardize: z * (std + eps) + mean.
std::vector<Vec3> restore_scale(const std::vector<Vec3>& smoothed, const ScaleStats& stats);

struct LtigaReport {
  std::size_t segments_total = 0;
  std::size_t segments_smoothed = 0;
  std::size_t nodes_smoothed = 0;
  std::size_t zero_norm_vectors = 0;  // standardized vectors with undefined cosine
};

/// Gated smoothing: segments whose confidence is below tau_c get
/// standardize -> smooth -> (restore); the rest keep raw indicators.
/// Features must be grouped by segment (contiguous segment ids).
std::vector<NodeFeature> apply_ltiga(const std::vector<NodeFeature>& features, const LtigaParams& params,
                                     LtigaReport* report = nullptr,
                                     kernels::Backend backend = kernels::Backend::Serial);

}  // namespace asd

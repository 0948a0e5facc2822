#include "asd/ltiga.hpp"

#include <cmath>

#include "asd/error.hpp"

namespace asd {

void LtigaParams::validate() const {
  if (!(sigma > 0.0) || k == 0) throw PreconditionError("ltiga: sigma must be > 0 and k >= 1");
}

Standardized standardize(const std::vector<Vec3>& vectors, double eps) {
  if (vectors.empty()) throw PreconditionError("standardize: empty input");
  Standardized out;
  out.stats.eps = eps;
  const double n = static_cast<double>(vectors.size());
  for (int d = 0; d < 3; ++d) {
    double mean = 0.0;
    for (const Vec3& v : vectors) mean += v[d];
    mean /= n;
    double var = 0.0;
    for (const Vec3& v : vectors) var += (v[d] - mean) * (v[d] - mean);
    out.stats.mean[d] = mean;
    out.stats.std[d] = std::sqrt(var / n);
  }
  out.z.reserve(vectors.size());
  for (const Vec3& v : vectors) {
    Vec3 z;
    for (int d = 0; d < 3; ++d) z[d] = (v[d] - out.stats.mean[d]) / (out.stats.std[d] + eps);
    out.z.push_back(z);
  }
  return out;
}

double kernel_similarity(const Vec3& a, const Vec3& b, double sigma) {
  return kernels::gaussian_of_cosine(a, b, sigma);
}

std::vector<Vec3> smooth(const std::vector<Vec3>& standardized, const LtigaParams& params,
                         kernels::Backend backend) {
  params.validate();
  if (standardized.size() < 2) return standardized;
  return kernels::knn_kernel_smooth(backend, standardized, params.k, params.sigma);
}

std::vector<Vec3> restore_scale(const std::vector<Vec3>& smoothed, const ScaleStats& stats) {
  std::vector<Vec3> out;
  out.reserve(smoothed.size());
  for (const Vec3& z : smoothed) {
    Vec3 x;
    for (int d = 0; d < 3; ++d) x[d] = z[d] * (stats.std[d] + stats.eps) + stats.mean[d];
    out.push_back(x);
  }
  return out;
}

std::vector<NodeFeature> apply_ltiga(const std::vector<NodeFeature>& features, const LtigaParams& params,
                                     LtigaReport* report, kernels::Backend backend) {
  params.validate();
  std::vector<NodeFeature> out = features;
  LtigaReport rep;
  std::size_t begin = 0;
  while (begin < out.size()) {
    std::size_t end = begin;
    while (end < out.size() && out[end].segment_id == out[begin].segment_id) ++end;
    ++rep.segments_total;
    for (std::size_t i = begin; i < end; ++i) {
      out[i].refined = out[i].raw();
      out[i].smoothed = false;
    }
    if (params.enabled && out[begin].confidence < params.tau_c) {
      std::vector<Vec3> raw;
      raw.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) raw.push_back(out[i].raw());
      Standardized st = standardize(raw, params.eps);
      for (const Vec3& z : st.z) {
        if (kernels::norm(z) == 0.0) ++rep.zero_norm_vectors;
      }
      std::vector<Vec3> sm = smooth(st.z, params, backend);
      if (params.rescale) sm = restore_scale(sm, st.stats);
      for (std::size_t i = begin; i < end; ++i) {
        out[i].refined = sm[i - begin];
        out[i].smoothed = true;
      }
      ++rep.segments_smoothed;
      rep.nodes_smoothed += end - begin;
    }
    begin = end;
  }
  if (report) *report = rep;
  return out;
}

}  // namespace asd

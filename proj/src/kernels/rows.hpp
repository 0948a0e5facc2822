#pragma once

// Per-row bodies shared by the serial and OpenMP kernels.

#include <algorithm>
#include <cmath>

#include "asd/kernels.hpp"

namespace asd::kernels::detail {

inline void spmm_row(const Csr& a, std::span<const double> x, std::size_t cols, std::span<double> y,
                     std::size_t i) {
  double* yi = y.data() + i * cols;
  std::fill(yi, yi + cols, 0.0);
  for (std::size_t p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) {
    const double w = a.val[p];
    const double* xj = x.data() + a.col[p] * cols;
    for (std::size_t c = 0; c < cols; ++c) yi[c] += w * xj[c];
  }
}

inline double propagate_row(const Csr& w, std::span<const double> degree, std::span<const std::uint8_t> clamped,
                             std::span<const double> f, std::span<double> f_next, std::size_t classes,
                             std::size_t i) {
  const double* fi = f.data() + i * classes;
  double* out = f_next.data() + i * classes;
  if (clamped[i] || degree[i] <= 0.0) {
    std::copy(fi, fi + classes, out);
    return 0.0;
  }
  std::fill(out, out + classes, 0.0);
  for (std::size_t p = w.row_ptr[i]; p < w.row_ptr[i + 1]; ++p) {
    const double* fj = f.data() + w.col[p] * classes;
    for (std::size_t c = 0; c < classes; ++c) out[c] += w.val[p] * fj[c];
  }
  double change = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    out[c] /= degree[i];
    change = std::max(change, std::abs(out[c] - fi[c]));
  }
  return change;
}

inline bool better(const Neighbor& a, const Neighbor& b) {
  return a.weight > b.weight || (a.weight == b.weight && a.index < b.index);
}

inline std::vector<Neighbor> window_row(std::span<const Vec3> x, std::span<const double> t,
                                        std::span<const std::size_t> order, std::span<const std::uint8_t> masked,
                                        double window, std::size_t cap, double min_sim, std::size_t rank) {
  const std::size_t i = order[rank];
  std::vector<Neighbor> cand;
  if (masked[i] || cap == 0) return cand;
  auto visit = [&](std::size_t r) {
    const std::size_t j = order[r];
    if (masked[j]) return;
    const double sim = cosine(x[i], x[j]);
    if (sim >= min_sim && sim > 0.0) cand.push_back({j, sim});
  };
  for (std::size_t r = rank; r-- > 0;) {
    if (t[i] - t[order[r]] > window) break;
    visit(r);
  }
  for (std::size_t r = rank + 1; r < order.size(); ++r) {
    if (t[order[r]] - t[i] > window) break;
    visit(r);
  }
  if (cand.size() > cap) {
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(cap), cand.end(), better);
    cand.resize(cap);
  } else {
    std::sort(cand.begin(), cand.end(), better);
  }
  return cand;
}

inline Vec3 smooth_row(std::span<const Vec3> z, std::size_t k, double sigma, std::size_t i) {
  if (z.size() < 2 || k == 0) return z[i];
  std::vector<Neighbor> cand;
  cand.reserve(z.size() - 1);
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (j != i) cand.push_back({j, gaussian_of_cosine(z[i], z[j], sigma)});
  }
  const std::size_t take = std::min(k, cand.size());
  // Equal weights go to the samples closest in time (rows are time-ordered).
  auto closer = [i](const Neighbor& a, const Neighbor& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    const std::size_t da = a.index > i ? a.index - i : i - a.index;
    const std::size_t db = b.index > i ? b.index - i : i - b.index;
    return da != db ? da < db : a.index < b.index;
  };
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(), closer);
  Vec3 acc{0.0, 0.0, 0.0};
  double zsum = 0.0;
  for (std::size_t q = 0; q < take; ++q) {
    const Vec3& v = z[cand[q].index];
    for (int d = 0; d < 3; ++d) acc[d] += cand[q].weight * v[d];
    zsum += cand[q].weight;
  }
  if (!(zsum > 0.0)) return z[i];
  for (double& a : acc) a /= zsum;
  return acc;
}

}  // namespace asd::kernels::detail

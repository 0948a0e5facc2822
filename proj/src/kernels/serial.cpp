#include <algorithm>
#include <cmath>

#include "asd/kernels.hpp"
#include "rows.hpp"

namespace asd::kernels {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

double cosine(const Vec3& a, const Vec3& b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double gaussian_of_cosine(const Vec3& a, const Vec3& b, double sigma) {
  const double gap = 1.0 - cosine(a, b);
  return std::exp(-(gap * gap) / (2.0 * sigma * sigma));
}

namespace serial {

void spmm(const Csr& a, std::span<const double> x, std::size_t cols, std::span<double> y) {
  for (std::size_t i = 0; i < a.rows(); ++i) detail::spmm_row(a, x, cols, y, i);
}

double propagate_step(const Csr& w, std::span<const double> degree, std::span<const std::uint8_t> clamped,
                      std::span<const double> f, std::span<double> f_next, std::size_t classes) {
  double change = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    change = std::max(change, detail::propagate_row(w, degree, clamped, f, f_next, classes, i));
  }
  return change;
}

std::vector<std::vector<Neighbor>> window_topk_cosine(std::span<const Vec3> x, std::span<const double> t,
                                                      std::span<const std::size_t> order,
                                                      std::span<const std::uint8_t> masked, double window,
                                                      std::size_t cap, double min_sim) {
  std::vector<std::vector<Neighbor>> out(x.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    out[order[r]] = detail::window_row(x, t, order, masked, window, cap, min_sim, r);
  }
  return out;
}

std::vector<Vec3> knn_kernel_smooth(std::span<const Vec3> z, std::size_t k, double sigma) {
  std::vector<Vec3> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = detail::smooth_row(z, k, sigma, i);
  return out;
}

}  // namespace serial

void spmm(Backend b, const Csr& a, std::span<const double> x, std::size_t cols, std::span<double> y) {
  b == Backend::OpenMP ? omp::spmm(a, x, cols, y) : serial::spmm(a, x, cols, y);
}

double propagate_step(Backend b, const Csr& w, std::span<const double> degree,
                      std::span<const std::uint8_t> clamped, std::span<const double> f, std::span<double> f_next,
                      std::size_t classes) {
  return b == Backend::OpenMP ? omp::propagate_step(w, degree, clamped, f, f_next, classes)
                              : serial::propagate_step(w, degree, clamped, f, f_next, classes);
}

std::vector<std::vector<Neighbor>> window_topk_cosine(Backend b, std::span<const Vec3> x, std::span<const double> t,
                                                      std::span<const std::size_t> order,
                                                      std::span<const std::uint8_t> masked, double window,
                                                      std::size_t cap, double min_sim) {
  return b == Backend::OpenMP ? omp::window_topk_cosine(x, t, order, masked, window, cap, min_sim)
                              : serial::window_topk_cosine(x, t, order, masked, window, cap, min_sim);
}

std::vector<Vec3> knn_kernel_smooth(Backend b, std::span<const Vec3> z, std::size_t k, double sigma) {
  return b == Backend::OpenMP ? omp::knn_kernel_smooth(z, k, sigma) : serial::knn_kernel_smooth(z, k, sigma);
}

}  // namespace asd::kernels

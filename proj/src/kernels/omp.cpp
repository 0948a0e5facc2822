#include <omp.h>

#include <algorithm>

#include "asd/kernels.hpp"
#include "rows.hpp"

namespace asd::kernels::omp {

namespace {
// Below this many rows the thread fork costs more than the loop.
constexpr std::ptrdiff_t kMinParallelRows = 256;
}  // namespace

void spmm(const Csr& a, std::span<const double> x, std::size_t cols, std::span<double> y) {
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static) if (n >= kMinParallelRows)
  for (std::ptrdiff_t i = 0; i < n; ++i) detail::spmm_row(a, x, cols, y, static_cast<std::size_t>(i));
}

double propagate_step(const Csr& w, std::span<const double> degree, std::span<const std::uint8_t> clamped,
                      std::span<const double> f, std::span<double> f_next, std::size_t classes) {
  const auto n = static_cast<std::ptrdiff_t>(w.rows());
  double change = 0.0;
#pragma omp parallel for schedule(static) reduction(max : change) if (n >= kMinParallelRows)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    change = std::max(change,
                      detail::propagate_row(w, degree, clamped, f, f_next, classes, static_cast<std::size_t>(i)));
  }
  return change;
}

std::vector<std::vector<Neighbor>> window_topk_cosine(std::span<const Vec3> x, std::span<const double> t,
                                                      std::span<const std::size_t> order,
                                                      std::span<const std::uint8_t> masked, double window,
                                                      std::size_t cap, double min_sim) {
  std::vector<std::vector<Neighbor>> out(x.size());
  const auto n = static_cast<std::ptrdiff_t>(order.size());
#pragma omp parallel for schedule(dynamic, 64) if (n >= kMinParallelRows)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    const auto rank = static_cast<std::size_t>(r);
    out[order[rank]] = detail::window_row(x, t, order, masked, window, cap, min_sim, rank);
  }
  return out;
}

std::vector<Vec3> knn_kernel_smooth(std::span<const Vec3> z, std::size_t k, double sigma) {
  std::vector<Vec3> out(z.size());
  const auto n = static_cast<std::ptrdiff_t>(z.size());
#pragma omp parallel for schedule(static) if (n >= kMinParallelRows)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = detail::smooth_row(z, k, sigma, static_cast<std::size_t>(i));
  return out;
}

}  // namespace asd::kernels::omp

#pragma once

// Data-parallel inner loops of the pipeline. Every kernel has a serial
// reference in `kernels::serial` and an OpenMP version in `kernels::omp`
// with the same signature. Parallel versions only split work across
// independent output rows, so both produce bit-identical results.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "asd/geo.hpp"

namespace asd::kernels {

enum class Backend { Serial, OpenMP };

/// Compressed sparse rows; `val` is aligned with `col`.
struct Csr {
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col;
  std::vector<double> val;

  std::size_t rows() const { return row_ptr.size() - 1; }
  std::size_t nnz() const { return col.size(); }
};

struct Neighbor {
  std::size_t index = 0;
  double weight = 0.0;
};

namespace serial {

/// y = A x, x and y dense row-major with `cols` columns.
void spmm(const Csr& a, std::span<const double> x, std::size_t cols, std::span<double> y);

/// One clamped diffusion sweep: free rows take the degree-normalized
/// neighbor average, clamped and zero-degree rows are copied. Returns the
/// largest absolute entry change.
double propagate_step(const Csr& w, std::span<const double> degree, std::span<const std::uint8_t> clamped,
                      std::span<const double> f, std::span<double> f_next, std::size_t classes);

/// For each node, the `cap` most cosine-similar nodes whose time lies within
/// `window` (self and masked nodes excluded, similarity >= min_sim and > 0).
/// `order` sorts nodes by time. Ties prefer the lower index.
std::vector<std::vector<Neighbor>> window_topk_cosine(std::span<const Vec3> x, std::span<const double> t,
                                                      std::span<const std::size_t> order,
                                                      std::span<const std::uint8_t> masked, double window,
                                                      std::size_t cap, double min_sim);

/// Kernel-weighted average of each vector over its top-k most similar other
/// vectors (Gaussian of cosine distance). Rows are taken to be time-ordered;
/// equal weights prefer the nearer row, then the lower index.
std::vector<Vec3> knn_kernel_smooth(std::span<const Vec3> z, std::size_t k, double sigma);

}  // namespace serial

namespace omp {

void spmm(const Csr& a, std::span<const double> x, std::size_t cols, std::span<double> y);
double propagate_step(const Csr& w, std::span<const double> degree, std::span<const std::uint8_t> clamped,
                      std::span<const double> f, std::span<double> f_next, std::size_t classes);
std::vector<std::vector<Neighbor>> window_topk_cosine(std::span<const Vec3> x, std::span<const double> t,
                                                      std::span<const std::size_t> order,
                                                      std::span<const std::uint8_t> masked, double window,
                                                      std::size_t cap, double min_sim);
std::vector<Vec3> knn_kernel_smooth(std::span<const Vec3> z, std::size_t k, double sigma);

}  // namespace omp

// Dispatch helpers.
void spmm(Backend b, const Csr& a, std::span<const double> x, std::size_t cols, std::span<double> y);
double propagate_step(Backend b, const Csr& w, std::span<const double> degree,
                      std::span<const std::uint8_t> clamped, std::span<const double> f, std::span<double> f_next,
                      std::size_t classes);
std::vector<std::vector<Neighbor>> window_topk_cosine(Backend b, std::span<const Vec3> x, std::span<const double> t,
                                                      std::span<const std::size_t> order,
                                                      std::span<const std::uint8_t> masked, double window,
                                                      std::size_t cap, double min_sim);
std::vector<Vec3> knn_kernel_smooth(Backend b, std::span<const Vec3> z, std::size_t k, double sigma);

// Shared scalar helpers.
double dot(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);
/// Cosine similarity; 1 when both vectors are zero, 0 when only one is.
double cosine(const Vec3& a, const Vec3& b);
double gaussian_of_cosine(const Vec3& a, const Vec3& b, double sigma);

}  // namespace asd::kernels

// Serial reference vs OpenMP for each kernel, at a few problem sizes.
// With one core the OpenMP numbers only show the threading overhead.

#include <benchmark/benchmark.h>

#include <numeric>

#include "asd/kernels.hpp"
#include "asd/rng.hpp"

using namespace asd;
using namespace asd::kernels;

namespace {

Csr random_csr(std::size_t n, std::size_t per_row, std::uint64_t seed) {
  Rng rng(seed);
  Csr m;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t q = 0; q < per_row; ++q) {
      m.col.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)));
      m.val.push_back(rng.uniform(0.1, 1.0));
    }
    m.row_ptr.push_back(m.col.size());
  }
  return m;
}

std::vector<Vec3> random_vecs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> v(n);
  for (auto& x : v) x = {rng.uniform(-1, 2), rng.uniform(-1, 2), rng.uniform(-1, 2)};
  return v;
}

template <Backend B>
void BM_spmm(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  Csr a = random_csr(n, 12, 1);
  std::vector<double> x(n * 16, 0.5), y(n * 16);
  for (auto _ : st) {
    spmm(B, a, x, 16, y);
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * a.nnz()));
}

template <Backend B>
void BM_propagate_step(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  Csr w = random_csr(n, 12, 2);
  std::vector<double> deg(n, 0.0), f(2 * n, 0.5), g(2 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = w.row_ptr[i]; p < w.row_ptr[i + 1]; ++p) deg[i] += w.val[p];
  std::vector<std::uint8_t> clamped(n, 0);
  for (std::size_t i = 0; i < n; i += 50) clamped[i] = 1;
  for (auto _ : st) {
    benchmark::DoNotOptimize(propagate_step(B, w, deg, clamped, f, g, 2));
  }
}

template <Backend B>
void BM_window_topk_cosine(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  auto x = random_vecs(n, 3);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = 20.0 * static_cast<double>(i);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::uint8_t> masked(n, 0);
  for (auto _ : st) {
    auto r = window_topk_cosine(B, x, t, order, masked, 600.0, 10, 0.2);
    benchmark::DoNotOptimize(r.data());
  }
}

template <Backend B>
void BM_knn_kernel_smooth(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  auto z = random_vecs(n, 4);
  for (auto _ : st) {
    auto r = knn_kernel_smooth(B, z, 5, 0.5);
    benchmark::DoNotOptimize(r.data());
  }
}

}  // namespace

BENCHMARK(BM_spmm<Backend::Serial>)->Arg(1 << 10)->Arg(1 << 14);
BENCHMARK(BM_spmm<Backend::OpenMP>)->Arg(1 << 10)->Arg(1 << 14);
BENCHMARK(BM_propagate_step<Backend::Serial>)->Arg(1 << 10)->Arg(1 << 14);
BENCHMARK(BM_propagate_step<Backend::OpenMP>)->Arg(1 << 10)->Arg(1 << 14);
BENCHMARK(BM_window_topk_cosine<Backend::Serial>)->Arg(1 << 10)->Arg(1 << 13);
BENCHMARK(BM_window_topk_cosine<Backend::OpenMP>)->Arg(1 << 10)->Arg(1 << 13);
BENCHMARK(BM_knn_kernel_smooth<Backend::Serial>)->Arg(64)->Arg(512);
BENCHMARK(BM_knn_kernel_smooth<Backend::OpenMP>)->Arg(64)->Arg(512);

BENCHMARK_MAIN();

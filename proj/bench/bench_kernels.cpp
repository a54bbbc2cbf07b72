// Compares the OpenMP kernels with their serial reference versions on the
// shapes the model actually uses, and reports the max abs difference.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include <omp.h>

#include "cogenav/kernels.hpp"

using namespace cogenav::kernels;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

void bench_gemm(const char* label, bool ta, bool tb, int m, int n, int k, int reps, std::mt19937_64& rng) {
  auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
  auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
  std::vector<double> c1(static_cast<std::size_t>(m) * n), c2(c1.size());
  const double fast = time_ms([&] { gemm(ta, tb, m, n, k, 1.0, a.data(), b.data(), 0.0, c1.data()); }, reps);
  const double ref = time_ms([&] { gemm_reference(ta, tb, m, n, k, 1.0, a.data(), b.data(), 0.0, c2.data()); }, reps);
  std::printf("%-28s %4dx%4dx%4d  omp %8.3f ms  ref %8.3f ms  speedup %5.2fx  maxdiff %.2e\n", label, m, n, k, fast, ref,
              ref / fast, max_diff(c1, c2));
}

void bench_im2col(const char* label, Conv2dGeometry g, int reps, std::mt19937_64& rng) {
  auto x = random_vec(static_cast<std::size_t>(g.batch) * g.channels * g.height * g.width, rng);
  std::vector<double> c1(static_cast<std::size_t>(g.col_rows()) * g.col_cols()), c2(c1.size());
  const double fast = time_ms([&] { im2col(g, x.data(), c1.data()); }, reps);
  const double ref = time_ms([&] { im2col_reference(g, x.data(), c2.data()); }, reps);
  std::printf("%-28s %4dx%4d        omp %8.3f ms  ref %8.3f ms  speedup %5.2fx  maxdiff %.2e\n", label, g.col_rows(),
              g.col_cols(), fast, ref, ref / fast, max_diff(c1, c2));
}

}  // namespace

int main() {
  std::mt19937_64 rng(3);
  std::printf("threads: %d\n", omp_get_max_threads());
  bench_gemm("audio conv2 forward", false, false, 64, 320, 288, 50, rng);
  bench_gemm("audio proj forward", false, false, 24, 64, 1280, 200, rng);
  bench_gemm("audio proj weight grad", true, false, 1280, 64, 24, 100, rng);
  bench_gemm("attention ffn", false, false, 48, 256, 64, 500, rng);
  bench_gemm("square 256", false, false, 256, 256, 256, 10, rng);
  bench_gemm("square 512 (B^T)", false, true, 512, 512, 512, 3, rng);

  Conv2dGeometry audio{1, 32, 48, 40, 3, 3, 2, 2, 1, 1};
  bench_im2col("audio conv2 im2col", audio, 200, rng);
  Conv2dGeometry video{24, 16, 8, 8, 3, 3, 2, 2, 1, 1};
  bench_im2col("video block1 im2col", video, 200, rng);
  return 0;
}

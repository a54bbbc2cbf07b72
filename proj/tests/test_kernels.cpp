#include <doctest.h>

#include <random>
#include <tuple>
#include <vector>

#include "cogenav/kernels.hpp"

using namespace cogenav::kernels;

namespace {

std::vector<double> rnd(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("gemm matches the serial reference for every transpose combination") {
  // Sizes on both sides of the parallel threshold.
  for (auto [m, n, k] : {std::tuple{3, 5, 4}, std::tuple{70, 90, 80}, std::tuple{1, 257, 33}}) {
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        auto a = rnd(static_cast<std::size_t>(m) * k, 1);
        auto b = rnd(static_cast<std::size_t>(k) * n, 2);
        auto c0 = rnd(static_cast<std::size_t>(m) * n, 3);
        auto c1 = c0;
        gemm(ta, tb, m, n, k, 0.7, a.data(), b.data(), 0.3, c0.data());
        gemm_reference(ta, tb, m, n, k, 0.7, a.data(), b.data(), 0.3, c1.data());
        for (std::size_t i = 0; i < c0.size(); ++i) REQUIRE(c0[i] == doctest::Approx(c1[i]).epsilon(1e-12));
      }
  }
}

TEST_CASE("gemm with beta 0 ignores garbage in C") {
  std::vector<double> a{1, 2, 3, 4}, b{1, 0, 0, 1};
  std::vector<double> c(4, std::nan(""));
  gemm(false, false, 2, 2, 2, 1.0, a.data(), b.data(), 0.0, c.data());
  CHECK(c == a);
}

TEST_CASE("im2col matches reference and col2im is its adjoint") {
  Conv2dGeometry g{2, 3, 7, 6, 3, 3, 2, 2, 1, 1};
  auto x = rnd(static_cast<std::size_t>(2 * 3 * 7 * 6), 4);
  std::vector<double> c0(static_cast<std::size_t>(g.col_rows()) * g.col_cols()), c1(c0.size());
  im2col(g, x.data(), c0.data());
  im2col_reference(g, x.data(), c1.data());
  CHECK(c0 == c1);
  auto y = rnd(c0.size(), 5);
  std::vector<double> back(x.size(), 0.0);
  col2im(g, y.data(), back.data());
  CHECK(dot(c0, y) == doctest::Approx(dot(x, back)).epsilon(1e-12));
}

TEST_CASE("3d patches: col2im_3d is the adjoint of im2col_3d and frames are preserved") {
  Conv3dGeometry g;
  g.frames = 6;
  g.height = 8;
  g.width = 8;
  g.stride_h = g.stride_w = 2;
  CHECK(g.out_frames() == 6);
  auto x = rnd(static_cast<std::size_t>(6 * 8 * 8), 6);
  std::vector<double> cols(static_cast<std::size_t>(g.col_rows()) * g.col_cols());
  im2col_3d(g, x.data(), cols.data());
  auto y = rnd(cols.size(), 7);
  std::vector<double> back(x.size(), 0.0);
  col2im_3d(g, y.data(), back.data());
  CHECK(dot(cols, y) == doctest::Approx(dot(x, back)).epsilon(1e-12));
}

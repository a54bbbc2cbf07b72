#include <doctest.h>

#include <cmath>

#include "cogenav/errors.hpp"
#include "gradcheck.hpp"

using namespace cogenav;
using namespace cogenav::testing;

namespace {

constexpr double kTol = 1e-4;

void expect_grad(const LossFn& f, std::vector<Leaf> inputs, const std::vector<Param*>& params = {}) {
  const auto r = gradcheck(f, std::move(inputs), params);
  INFO(r.worst);
  CHECK(r.checked > 0);
  CHECK(r.max_rel < kTol);
}

// Values bounded away from 0 so ReLU/clamp kinks are not straddled by h.
Leaf away_from_zero(Shape s, std::uint64_t seed) {
  Leaf l = random_leaf(std::move(s), seed);
  for (double& x : l.value) x = (x < 0 ? -0.1 : 0.1) + x;
  return l;
}

}  // namespace

TEST_CASE("elementwise and broadcasting ops match finite differences") {
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::add(x[0], x[1])); },
              {random_leaf({3, 4}, 1), random_leaf({3, 4}, 2)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::sub(x[0], x[1])); },
              {random_leaf({3, 4}, 1), random_leaf({3, 4}, 2)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::mul(x[0], x[1])); },
              {random_leaf({3, 4}, 3), random_leaf({3, 4}, 4)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::scale(x[0], -2.5)); }, {random_leaf({2, 3}, 5)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::add_row(x[0], x[1])); },
              {random_leaf({3, 4}, 6), random_leaf({4}, 7)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::gelu(x[0])); }, {random_leaf({4, 5}, 8, -3, 3)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::relu(x[0])); }, {away_from_zero({4, 5}, 9)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::sigmoid(x[0])); }, {random_leaf({4, 5}, 10, -4, 4)});
  expect_grad([](Graph&, const auto& x) { return ops::mean(x[0]); }, {random_leaf({3, 3}, 11)});
}

TEST_CASE("relu subgradient at exactly zero is zero") {
  Graph g;
  Tensor x = g.input({0.0, -1.0, 2.0}, {3});
  g.backward(ops::sum(ops::relu(x)));
  CHECK(x.grad() == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("linear algebra ops match finite differences") {
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::matmul(x[0], x[1])); },
              {random_leaf({3, 4}, 1), random_leaf({4, 2}, 2)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::linear(x[0], x[1], x[2])); },
              {random_leaf({3, 4}, 3), random_leaf({4, 5}, 4), random_leaf({5}, 5)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::layer_norm(x[0], x[1], x[2])); },
              {random_leaf({3, 6}, 6, -2, 2), random_leaf({6}, 7), random_leaf({6}, 8)});
}

TEST_CASE("structural ops match finite differences") {
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::transpose01(x[0])); }, {random_leaf({2, 3, 4}, 1)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::reshape(x[0], {4, 3})); }, {random_leaf({3, 4}, 2)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::concat_cols(x[0], x[1])); },
              {random_leaf({3, 2}, 3), random_leaf({3, 4}, 4)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::slice_rows(x[0], 1, 2)); }, {random_leaf({4, 3}, 5)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::repeat_rows(x[0], 2)); }, {random_leaf({3, 2}, 6)});
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::interleave_rows(x[0], x[1])); },
              {random_leaf({3, 2}, 7), random_leaf({3, 2}, 8)});
}

TEST_CASE("repeat and interleave order rows as documented") {
  Graph g(false);
  Tensor a = g.constant({1, 2, 3, 4}, {2, 2});
  Tensor b = g.constant({5, 6, 7, 8}, {2, 2});
  CHECK(ops::repeat_rows(a, 2).value() == std::vector<double>{1, 2, 1, 2, 3, 4, 3, 4});
  CHECK(ops::interleave_rows(a, b).value() == std::vector<double>{1, 2, 5, 6, 3, 4, 7, 8});
}

TEST_CASE("convolutions match finite differences") {
  SUBCASE("conv2d stride 2 pad 1") {
    expect_grad([](Graph& g, const auto& x) { return project(g, ops::conv2d(x[0], x[1], x[2], 2, 1)); },
                {random_leaf({2, 2, 5, 4}, 1), random_leaf({3, 2, 3, 3}, 2), random_leaf({3}, 3)});
  }
  SUBCASE("conv2d 1x1 stride 2 no pad") {
    expect_grad([](Graph& g, const auto& x) { return project(g, ops::conv2d(x[0], x[1], x[2], 2, 0)); },
                {random_leaf({1, 2, 4, 4}, 4), random_leaf({3, 2, 1, 1}, 5), random_leaf({3}, 6)});
  }
  SUBCASE("conv3d stem") {
    expect_grad([](Graph& g, const auto& x) { return project(g, ops::conv3d_stem(x[0], x[1], x[2], 2, 1)); },
                {random_leaf({4, 4, 4}, 7), random_leaf({2, 5, 3, 3}, 8), random_leaf({2}, 9)});
  }
  SUBCASE("mean_hw") {
    expect_grad([](Graph& g, const auto& x) { return project(g, ops::mean_hw(x[0])); }, {random_leaf({2, 3, 2, 2}, 10)});
  }
  SUBCASE("depthwise temporal conv") {
    expect_grad([](Graph& g, const auto& x) { return project(g, ops::depthwise_conv_time(x[0], x[1], x[2])); },
                {random_leaf({4, 3}, 11), random_leaf({3, 3}, 12), random_leaf({3}, 13)});
  }
}

TEST_CASE("conv3d stem preserves the frame count") {
  Graph g(false);
  Tensor x = g.constant(std::vector<double>(10 * 16 * 16, 0.5), {10, 16, 16});
  Tensor w = g.constant(std::vector<double>(4 * 5 * 3 * 3, 0.1), {4, 5, 3, 3});
  Tensor b = g.constant({0, 0, 0, 0}, {4});
  CHECK(ops::conv3d_stem(x, w, b, 2, 1).shape() == Shape{10, 4, 8, 8});
}

TEST_CASE("attention matches finite differences") {
  for (bool causal : {false, true}) {
    CAPTURE(causal);
    expect_grad([causal](Graph& g, const auto& x) { return project(g, ops::attention(x[0], x[1], x[2], 2, causal)); },
                {random_leaf({3, 4}, 1), random_leaf({3, 4}, 2), random_leaf({3, 4}, 3)});
  }
  // Cross-attention with different query and memory lengths.
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::attention(x[0], x[1], x[2], 2, false)); },
              {random_leaf({2, 4}, 4), random_leaf({4, 4}, 5), random_leaf({4, 4}, 6)});
}

TEST_CASE("causal attention ignores future keys") {
  Graph g(false);
  Tensor q = g.constant({1, 0, 0, 1}, {2, 2});
  Tensor k = g.constant({1, 0, 0, 1}, {2, 2});
  Tensor v1 = g.constant({1, 2, 3, 4}, {2, 2});
  Tensor v2 = g.constant({1, 2, 9, 9}, {2, 2});
  const auto a = ops::attention(q, k, v1, 1, true).value();
  const auto b = ops::attention(q, k, v2, 1, true).value();
  CHECK(a[0] == b[0]);
  CHECK(a[1] == b[1]);
}

TEST_CASE("embedding and cross entropy match finite differences") {
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::embedding(x[0], {2, 0, 2})); }, {random_leaf({3, 4}, 1)});
  expect_grad([](Graph&, const auto& x) { return ops::cross_entropy(x[0], {1, 3, 2}, 3); }, {random_leaf({3, 4}, 2, -2, 2)});
}

TEST_CASE("cross entropy of uniform logits is ln V and ignores padded positions") {
  Graph g(false);
  Tensor logits = g.constant(std::vector<double>(3 * 5, 0.25), {3, 5});
  CHECK(ops::cross_entropy(logits, {0, 4, 2}, -1).item() == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  CHECK(ops::cross_entropy(logits, {0, 4, 4}, 4).item() == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  CHECK_THROWS_AS(ops::cross_entropy(logits, {4, 4, 4}, 4), Error);
}

TEST_CASE("frame cosine and bce match finite differences") {
  expect_grad([](Graph& g, const auto& x) { return project(g, ops::frame_cosine(x[0], x[1], 1e-8)); },
              {random_leaf({3, 4}, 1), random_leaf({3, 4}, 2)});
  expect_grad([](Graph& g, const auto& x) { return ops::bce(ops::sigmoid(ops::sum(x[0])), 1, 1e-7); },
              {random_leaf({3}, 3)});
  expect_grad([](Graph& g, const auto& x) { return ops::bce(ops::sigmoid(ops::sum(x[0])), 0, 1e-7); },
              {random_leaf({3}, 4)});
}

TEST_CASE("shape mismatches raise shape errors") {
  Graph g(false);
  Tensor a = g.constant({1, 2, 3, 4, 5, 6}, {2, 3});
  Tensor b = g.constant({1, 2, 3, 4}, {2, 2});
  try {
    ops::add(a, b);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShape);
  }
  CHECK_THROWS_AS(ops::matmul(a, a), Error);
}

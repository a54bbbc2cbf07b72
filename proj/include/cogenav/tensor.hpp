#pragma once

// Minimal reverse-mode automatic differentiation over dense float64 arrays.
//
// A Graph owns the tape for one forward pass. Tensors are cheap handles to
// graph nodes; ops (see ops.hpp) append nodes and register backward closures
// only when some input requires a gradient. Parameters live outside graphs
// (in a ParamStore) and enter a graph as leaves via Graph::param.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cogenav {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  bool trainable = true;
  std::size_t index = 0;
};

// Per-parameter gradient accumulators, indexed by Param::index.
struct GradBuffer {
  std::vector<std::vector<double>> grads;

  void add(const Param& p, std::span<const double> g, double scale = 1.0);
  void merge(const GradBuffer& other, double scale = 1.0);
  const std::vector<double>* find(const Param& p) const;
  void clear() { grads.clear(); }
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::function<void(const Node&)> backward;

  std::vector<double>& ensure_grad();
};

class Graph;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Graph* graph, std::shared_ptr<Node> node)
      : graph_(graph), node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int axis) const { return node_->shape.at(static_cast<std::size_t>(axis)); }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t size() const { return node_->value.size(); }
  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& grad() const { return node_->ensure_grad(); }
  double item() const { return node_->value.at(0); }
  double at(int r, int c) const { return node_->value[static_cast<std::size_t>(r) * node_->shape.back() + c]; }
  bool requires_grad() const { return node_->requires_grad; }

  Graph& graph() const { return *graph_; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  Graph* graph_ = nullptr;
  std::shared_ptr<Node> node_;
};

class Graph {
 public:
  explicit Graph(bool grad_enabled = true, bool training = false,
                 std::uint64_t seed = 0);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  bool training() const { return training_; }
  std::mt19937_64& rng() { return rng_; }

  Tensor constant(std::vector<double> value, Shape shape);
  // Leaf that records a gradient (when gradients are enabled).
  Tensor input(std::vector<double> value, Shape shape);
  // Leaf bound to a parameter. Frozen parameters enter as constants.
  Tensor param(const Param& p);

  // Creates an op output. `backward` is kept only if any parent requires a
  // gradient; it must read out.grad and accumulate into the parents.
  Tensor record(Shape shape, std::vector<double> value,
                std::initializer_list<const Tensor*> parents,
                std::function<void(const Node&)> backward);

  void backward(const Tensor& scalar_loss);

  const std::vector<double>* param_grad(const Param& p) const;
  void accumulate_param_grads(GradBuffer& buffer, double scale = 1.0) const;

 private:
  bool grad_enabled_;
  bool training_;
  std::mt19937_64 rng_;
  std::vector<std::shared_ptr<Node>> tape_;
  std::unordered_map<const Param*, Tensor> param_leaves_;
};

// Plain row-major matrix used at module boundaries (features, spectrograms).
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::span<const double> row(int r) const { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  bool operator==(const Matrix&) const = default;
};

Tensor as_tensor(Graph& g, const Matrix& m, bool requires_grad = false);
Matrix to_matrix(const Tensor& t);

}  // namespace cogenav

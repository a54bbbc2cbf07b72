#include "cogenav/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "cogenav/errors.hpp"

namespace cogenav {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

void GradBuffer::add(const Param& p, std::span<const double> g, double scale) {
  if (grads.size() <= p.index) grads.resize(p.index + 1);
  auto& dst = grads[p.index];
  if (dst.empty()) dst.assign(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += scale * g[i];
}

void GradBuffer::merge(const GradBuffer& other, double scale) {
  if (grads.size() < other.grads.size()) grads.resize(other.grads.size());
  for (std::size_t k = 0; k < other.grads.size(); ++k) {
    const auto& src = other.grads[k];
    if (src.empty()) continue;
    auto& dst = grads[k];
    if (dst.empty()) dst.assign(src.size(), 0.0);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += scale * src[i];
  }
}

const std::vector<double>* GradBuffer::find(const Param& p) const {
  if (p.index >= grads.size() || grads[p.index].empty()) return nullptr;
  return &grads[p.index];
}

std::vector<double>& Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Graph::Graph(bool grad_enabled, bool training, std::uint64_t seed)
    : grad_enabled_(grad_enabled), training_(training), rng_(seed) {}

Tensor Graph::constant(std::vector<double> value, Shape shape) {
  require(value.size() == numel(shape), ErrorCode::kShape,
          "constant: value size does not match shape " + shape_str(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  return Tensor(this, std::move(node));
}

Tensor Graph::input(std::vector<double> value, Shape shape) {
  Tensor t = constant(std::move(value), std::move(shape));
  if (grad_enabled_) {
    t.node()->requires_grad = true;
    tape_.push_back(t.node());
  }
  return t;
}

Tensor Graph::param(const Param& p) {
  if (auto it = param_leaves_.find(&p); it != param_leaves_.end()) return it->second;
  Tensor t = (grad_enabled_ && p.trainable) ? input(p.value, p.shape)
                                            : constant(p.value, p.shape);
  param_leaves_.emplace(&p, t);
  return t;
}

Tensor Graph::record(Shape shape, std::vector<double> value,
                     std::initializer_list<const Tensor*> parents,
                     std::function<void(const Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_enabled_) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor* t) { return t->defined() && t->requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      tape_.push_back(node);
    }
  }
  return Tensor(this, std::move(node));
}

void Graph::backward(const Tensor& scalar_loss) {
  require(scalar_loss.size() == 1, ErrorCode::kShape, "backward: loss must be a scalar");
  if (!scalar_loss.requires_grad()) return;
  scalar_loss.grad()[0] += 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
}

const std::vector<double>* Graph::param_grad(const Param& p) const {
  auto it = param_leaves_.find(&p);
  if (it == param_leaves_.end() || !it->second.requires_grad()) return nullptr;
  const auto& g = it->second.node()->grad;
  return g.empty() ? nullptr : &g;
}

void Graph::accumulate_param_grads(GradBuffer& buffer, double scale) const {
  for (const auto& [p, t] : param_leaves_) {
    if (!t.requires_grad() || t.node()->grad.empty()) continue;
    buffer.add(*p, t.node()->grad, scale);
  }
}

Tensor as_tensor(Graph& g, const Matrix& m, bool requires_grad) {
  return requires_grad ? g.input(m.data, {m.rows, m.cols})
                       : g.constant(m.data, {m.rows, m.cols});
}

Matrix to_matrix(const Tensor& t) {
  require(t.rank() == 2, ErrorCode::kShape, "to_matrix: expected rank-2 tensor, got " + shape_str(t.shape()));
  Matrix m;
  m.rows = t.dim(0);
  m.cols = t.dim(1);
  m.data = t.value();
  return m;
}

}  // namespace cogenav

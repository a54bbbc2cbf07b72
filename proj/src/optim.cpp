#include "cogenav/optim.hpp"

#include <cmath>
#include <exception>

#include <omp.h>

namespace cogenav {

Adam::Adam(const ParamStore& store, AdamConfig cfg) : cfg_(cfg) {
  m_.resize(store.size());
  v_.resize(store.size());
}

void Adam::step(ParamStore& store, const GradBuffer& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (auto& p : store.all()) {
    if (!p.trainable) continue;
    const auto* g = grads.find(p);
    if (!g) continue;
    if (m_.size() <= p.index) {
      m_.resize(p.index + 1);
      v_.resize(p.index + 1);
    }
    auto& m = m_[p.index];
    auto& v = v_[p.index];
    if (m.empty()) {
      m.assign(p.value.size(), 0.0);
      v.assign(p.value.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double gi = (*g)[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

double warmup_lr(double lr, int step, int warmup_steps) {
  if (warmup_steps <= 0 || step >= warmup_steps) return lr;
  return lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

double grad_norm(const GradBuffer& grads) {
  double s = 0.0;
  for (const auto& g : grads.grads)
    for (double x : g) s += x * x;
  return std::sqrt(s);
}

void clip_grad_norm(GradBuffer& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  const double n = grad_norm(grads);
  if (n <= max_norm) return;
  const double s = max_norm / n;
  for (auto& g : grads.grads)
    for (double& x : g) x *= s;
}

std::vector<double> parallel_items(int n, const std::function<double(int, GradBuffer&)>& fn, GradBuffer& out) {
  std::vector<double> values(static_cast<std::size_t>(n), 0.0);
  std::vector<GradBuffer> buffers(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 1) if (n > 1 && !omp_in_parallel())
  for (int i = 0; i < n; ++i) {
    try {
      values[i] = fn(i, buffers[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (const auto& b : buffers) out.merge(b);
  return values;
}

}  // namespace cogenav

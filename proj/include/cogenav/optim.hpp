#pragma once

#include <functional>
#include <vector>

#include "cogenav/params.hpp"

namespace cogenav {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(const ParamStore& store, AdamConfig cfg = {});

  // Updates every trainable parameter that has a gradient in `grads`.
  void step(ParamStore& store, const GradBuffer& grads, double lr);
  int steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Linear warmup: lr * step / warmup for step <= warmup (step is 1-based),
// then constant lr.
double warmup_lr(double lr, int step, int warmup_steps);

double grad_norm(const GradBuffer& grads);
// Rescales `grads` so their global norm is at most max_norm (no-op if <= 0).
void clip_grad_norm(GradBuffer& grads, double max_norm);

// Runs fn(i, buffer) for i in [0, n) in parallel, each item writing into its
// own buffer, then merges the buffers into `out` in index order so the
// result does not depend on thread scheduling. Returns fn's values.
std::vector<double> parallel_items(int n, const std::function<double(int, GradBuffer&)>& fn, GradBuffer& out);

}  // namespace cogenav

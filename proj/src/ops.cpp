#include "cogenav/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cogenav/errors.hpp"
#include "cogenav/kernels.hpp"

namespace cogenav::ops {

namespace {

using NodePtr = std::shared_ptr<Node>;

void check(bool ok, const std::string& what) { require(ok, ErrorCode::kShape, what); }

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_rank(const Tensor& a, int rank, const char* op) {
  check(a.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
}

// Accumulates `scale * src` into the gradient of `n` if it needs one.
void accumulate(const NodePtr& n, const std::vector<double>& src, double scale = 1.0) {
  if (!n || !n->requires_grad) return;
  auto& g = n->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * src[i];
}

template <class F>
Tensor unary(const Tensor& a, F&& fwd_and_deriv) {
  std::vector<double> v(a.size());
  std::vector<double> d(a.size());
  const auto& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) fwd_and_deriv(x[i], v[i], d[i]);
  NodePtr an = a.node();
  return a.graph().record(a.shape(), std::move(v), {&a}, [an, d = std::move(d)](const Node& out) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * d[i];
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same(a, b, "add");
  std::vector<double> v(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += bv[i];
  NodePtr an = a.node(), bn = b.node();
  return a.graph().record(a.shape(), std::move(v), {&a, &b}, [an, bn](const Node& out) {
    accumulate(an, out.grad);
    accumulate(bn, out.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same(a, b, "sub");
  std::vector<double> v(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= bv[i];
  NodePtr an = a.node(), bn = b.node();
  return a.graph().record(a.shape(), std::move(v), {&a, &b}, [an, bn](const Node& out) {
    accumulate(an, out.grad);
    accumulate(bn, out.grad, -1.0);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same(a, b, "mul");
  std::vector<double> v(a.size());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  NodePtr an = a.node(), bn = b.node();
  return a.graph().record(a.shape(), std::move(v), {&a, &b}, [an, bn](const Node& out) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * an->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> v(a.value());
  for (double& x : v) x *= s;
  NodePtr an = a.node();
  return a.graph().record(a.shape(), std::move(v), {&a}, [an, s](const Node& out) { accumulate(an, out.grad, s); });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  check_rank(a, 2, "add_row");
  check(row.size() == static_cast<std::size_t>(a.dim(1)), "add_row: row width mismatch");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> v(a.value());
  const auto& r = row.value();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(i) * n + j] += r[j];
  NodePtr an = a.node(), rn = row.node();
  return a.graph().record(a.shape(), std::move(v), {&a, &row}, [an, rn, m, n](const Node& out) {
    accumulate(an, out.grad);
    if (rn->requires_grad) {
      auto& g = rn->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) g[j] += out.grad[static_cast<std::size_t>(i) * n + j];
    }
  });
}

Tensor gelu(const Tensor& a) {
  return unary(a, [](double x, double& y, double& d) {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    y = x * cdf;
    d = cdf + x * pdf;
  });
}

Tensor relu(const Tensor& a) {
  // Subgradient at exactly zero is 0.
  return unary(a, [](double x, double& y, double& d) {
    y = x > 0.0 ? x : 0.0;
    d = x > 0.0 ? 1.0 : 0.0;
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, [](double x, double& y, double& d) {
    y = 1.0 / (1.0 + std::exp(-x));
    d = y * (1.0 - y);
  });
}

Tensor dropout(const Tensor& a, double p) {
  Graph& g = a.graph();
  if (!g.training() || p <= 0.0) return a;
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  std::vector<double> mask(a.size());
  for (double& m : mask) m = keep(g.rng()) ? s : 0.0;
  return mul(a, g.constant(std::move(mask), a.shape()));
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.value()) s += x;
  NodePtr an = a.node();
  return a.graph().record({1}, {s}, {&a}, [an](const Node& out) {
    auto& g = an->ensure_grad();
    for (double& x : g) x += out.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  check(a.size() > 0, "mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "matmul");
  check_rank(b, 2, "matmul");
  check(a.dim(1) == b.dim(0), "matmul: inner dimension mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> v(static_cast<std::size_t>(m) * n);
  kernels::gemm(false, false, m, n, k, 1.0, a.value().data(), b.value().data(), 0.0, v.data());
  NodePtr an = a.node(), bn = b.node();
  return a.graph().record({m, n}, std::move(v), {&a, &b}, [an, bn, m, n, k](const Node& out) {
    if (an->requires_grad)
      kernels::gemm(false, true, m, k, n, 1.0, out.grad.data(), bn->value.data(), 1.0, an->ensure_grad().data());
    if (bn->requires_grad)
      kernels::gemm(true, false, k, n, m, 1.0, an->value.data(), out.grad.data(), 1.0, bn->ensure_grad().data());
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_rank(x, 2, "linear");
  check_rank(w, 2, "linear");
  check(x.dim(1) == w.dim(0), "linear: input width " + std::to_string(x.dim(1)) + " vs weight " + shape_str(w.shape()));
  const int m = x.dim(0), k = x.dim(1), n = w.dim(1);
  std::vector<double> v(static_cast<std::size_t>(m) * n);
  if (b.defined()) {
    check(b.size() == static_cast<std::size_t>(n), "linear: bias width mismatch");
    for (int i = 0; i < m; ++i) std::copy(b.value().begin(), b.value().end(), v.begin() + static_cast<std::ptrdiff_t>(i) * n);
  }
  kernels::gemm(false, false, m, n, k, 1.0, x.value().data(), w.value().data(), 1.0, v.data());
  NodePtr xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : nullptr;
  const Tensor& bref = b;
  return x.graph().record({m, n}, std::move(v), {&x, &w, &bref}, [xn, wn, bn, m, n, k](const Node& out) {
    if (xn->requires_grad)
      kernels::gemm(false, true, m, k, n, 1.0, out.grad.data(), wn->value.data(), 1.0, xn->ensure_grad().data());
    if (wn->requires_grad)
      kernels::gemm(true, false, k, n, m, 1.0, xn->value.data(), out.grad.data(), 1.0, wn->ensure_grad().data());
    if (bn && bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) g[j] += out.grad[static_cast<std::size_t>(i) * n + j];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  check_rank(x, 2, "layer_norm");
  const int m = x.dim(0), n = x.dim(1);
  check(gamma.size() == static_cast<std::size_t>(n) && beta.size() == static_cast<std::size_t>(n), "layer_norm: affine width mismatch");
  std::vector<double> xhat(x.size()), rstd(m), v(x.size());
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (int i = 0; i < m; ++i) {
    const double* row = xv.data() + static_cast<std::size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= n;
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * n + j;
      xhat[idx] = (row[j] - mu) * rstd[i];
      v[idx] = xhat[idx] * gv[j] + bv[j];
    }
  }
  NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
  return x.graph().record(x.shape(), std::move(v), {&x, &gamma, &beta},
                          [xn, gn, bn, m, n, xhat = std::move(xhat), rstd = std::move(rstd)](const Node& out) {
    const auto& dy = out.grad;
    if (gn->requires_grad || bn->requires_grad) {
      auto& gg = gn->ensure_grad();
      auto& bg = bn->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * n + j;
          gg[j] += dy[idx] * xhat[idx];
          bg[j] += dy[idx];
        }
    }
    if (xn->requires_grad) {
      auto& xg = xn->ensure_grad();
      const auto& gv = gn->value;
      for (int i = 0; i < m; ++i) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (int j = 0; j < n; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * n + j;
          const double d = dy[idx] * gv[j];
          mean_d += d;
          mean_dx += d * xhat[idx];
        }
        mean_d /= n;
        mean_dx /= n;
        for (int j = 0; j < n; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * n + j;
          const double d = dy[idx] * gv[j];
          xg[idx] += rstd[i] * (d - mean_d - xhat[idx] * mean_dx);
        }
      }
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check(numel(shape) == a.size(), "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  NodePtr an = a.node();
  return a.graph().record(std::move(shape), a.value(), {&a}, [an](const Node& out) { accumulate(an, out.grad); });
}

Tensor transpose01(const Tensor& a) {
  check_rank(a, 3, "transpose01");
  const int d0 = a.dim(0), d1 = a.dim(1), d2 = a.dim(2);
  std::vector<double> v(a.size());
  const auto& x = a.value();
  for (int i = 0; i < d0; ++i)
    for (int j = 0; j < d1; ++j)
      std::copy_n(x.begin() + (static_cast<std::ptrdiff_t>(i) * d1 + j) * d2, d2,
                  v.begin() + (static_cast<std::ptrdiff_t>(j) * d0 + i) * d2);
  NodePtr an = a.node();
  return a.graph().record({d1, d0, d2}, std::move(v), {&a}, [an, d0, d1, d2](const Node& out) {
    auto& g = an->ensure_grad();
    for (int i = 0; i < d0; ++i)
      for (int j = 0; j < d1; ++j)
        for (int k = 0; k < d2; ++k)
          g[(static_cast<std::size_t>(i) * d1 + j) * d2 + k] += out.grad[(static_cast<std::size_t>(j) * d0 + i) * d2 + k];
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "concat_cols");
  check_rank(b, 2, "concat_cols");
  check(a.dim(0) == b.dim(0), "concat_cols: row count mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int m = a.dim(0), n1 = a.dim(1), n2 = b.dim(1), n = n1 + n2;
  std::vector<double> v(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    std::copy_n(a.value().begin() + static_cast<std::ptrdiff_t>(i) * n1, n1, v.begin() + static_cast<std::ptrdiff_t>(i) * n);
    std::copy_n(b.value().begin() + static_cast<std::ptrdiff_t>(i) * n2, n2, v.begin() + static_cast<std::ptrdiff_t>(i) * n + n1);
  }
  NodePtr an = a.node(), bn = b.node();
  return a.graph().record({m, n}, std::move(v), {&a, &b}, [an, bn, m, n1, n2, n](const Node& out) {
    for (int i = 0; i < m; ++i) {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (int j = 0; j < n1; ++j) g[static_cast<std::size_t>(i) * n1 + j] += out.grad[static_cast<std::size_t>(i) * n + j];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (int j = 0; j < n2; ++j) g[static_cast<std::size_t>(i) * n2 + j] += out.grad[static_cast<std::size_t>(i) * n + n1 + j];
      }
    }
  });
}

Tensor slice_rows(const Tensor& a, int begin, int count) {
  check(a.rank() >= 1, "slice_rows: scalar input");
  check(begin >= 0 && count >= 1 && begin + count <= a.dim(0), "slice_rows: range out of bounds");
  const std::size_t row = a.size() / static_cast<std::size_t>(a.dim(0));
  Shape shape = a.shape();
  shape[0] = count;
  std::vector<double> v(a.value().begin() + static_cast<std::ptrdiff_t>(begin * row),
                        a.value().begin() + static_cast<std::ptrdiff_t>((begin + count) * row));
  NodePtr an = a.node();
  return a.graph().record(std::move(shape), std::move(v), {&a}, [an, begin, row](const Node& out) {
    auto& g = an->ensure_grad();
    const std::size_t off = static_cast<std::size_t>(begin) * row;
    for (std::size_t i = 0; i < out.grad.size(); ++i) g[off + i] += out.grad[i];
  });
}

Tensor repeat_rows(const Tensor& a, int factor) {
  check_rank(a, 2, "repeat_rows");
  check(factor >= 1, "repeat_rows: factor must be positive");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> v(static_cast<std::size_t>(m) * factor * n);
  for (int i = 0; i < m; ++i)
    for (int r = 0; r < factor; ++r)
      std::copy_n(a.value().begin() + static_cast<std::ptrdiff_t>(i) * n, n,
                  v.begin() + (static_cast<std::ptrdiff_t>(i) * factor + r) * n);
  NodePtr an = a.node();
  return a.graph().record({m * factor, n}, std::move(v), {&a}, [an, m, n, factor](const Node& out) {
    auto& g = an->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int r = 0; r < factor; ++r)
        for (int j = 0; j < n; ++j)
          g[static_cast<std::size_t>(i) * n + j] += out.grad[(static_cast<std::size_t>(i) * factor + r) * n + j];
  });
}

Tensor interleave_rows(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "interleave_rows");
  check_same(a, b, "interleave_rows");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> v(static_cast<std::size_t>(2 * m) * n);
  for (int i = 0; i < m; ++i) {
    std::copy_n(a.value().begin() + static_cast<std::ptrdiff_t>(i) * n, n, v.begin() + static_cast<std::ptrdiff_t>(2 * i) * n);
    std::copy_n(b.value().begin() + static_cast<std::ptrdiff_t>(i) * n, n, v.begin() + static_cast<std::ptrdiff_t>(2 * i + 1) * n);
  }
  NodePtr an = a.node(), bn = b.node();
  return a.graph().record({2 * m, n}, std::move(v), {&a, &b}, [an, bn, m, n](const Node& out) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        if (an->requires_grad) an->ensure_grad()[static_cast<std::size_t>(i) * n + j] += out.grad[static_cast<std::size_t>(2 * i) * n + j];
        if (bn->requires_grad) bn->ensure_grad()[static_cast<std::size_t>(i) * n + j] += out.grad[static_cast<std::size_t>(2 * i + 1) * n + j];
      }
  });
}

namespace {

// Shared tail of the im2col-based convolutions: given patch columns
// [K, batch*P] and weights [O, K], produce [batch, O, P] (+bias).
Tensor conv_from_cols(const Tensor& x, const Tensor& w, const Tensor& b,
                      std::vector<double> cols, int batch, int plane, Shape out_shape,
                      std::function<void(const std::vector<double>& dcols, std::vector<double>& dx)> col_adjoint) {
  const int out_ch = w.dim(0);
  const int kdim = static_cast<int>(w.size() / static_cast<std::size_t>(out_ch));
  const int ncols = batch * plane;
  check(b.size() == static_cast<std::size_t>(out_ch), "conv: bias size mismatch");
  std::vector<double> y(static_cast<std::size_t>(out_ch) * ncols);
  kernels::gemm(false, false, out_ch, ncols, kdim, 1.0, w.value().data(), cols.data(), 0.0, y.data());
  std::vector<double> v(y.size());
  const auto& bv = b.value();
  for (int n = 0; n < batch; ++n)
    for (int o = 0; o < out_ch; ++o) {
      const double* src = y.data() + static_cast<std::size_t>(o) * ncols + static_cast<std::size_t>(n) * plane;
      double* dst = v.data() + (static_cast<std::size_t>(n) * out_ch + o) * plane;
      for (int p = 0; p < plane; ++p) dst[p] = src[p] + bv[o];
    }
  NodePtr xn = x.node(), wn = w.node(), bn = b.node();
  return x.graph().record(std::move(out_shape), std::move(v), {&x, &w, &b},
                          [xn, wn, bn, out_ch, kdim, ncols, batch, plane, cols = std::move(cols),
                           col_adjoint = std::move(col_adjoint)](const Node& out) {
    std::vector<double> dy(static_cast<std::size_t>(out_ch) * ncols);
    for (int n = 0; n < batch; ++n)
      for (int o = 0; o < out_ch; ++o)
        std::copy_n(out.grad.begin() + (static_cast<std::ptrdiff_t>(n) * out_ch + o) * plane, plane,
                    dy.begin() + static_cast<std::ptrdiff_t>(o) * ncols + static_cast<std::ptrdiff_t>(n) * plane);
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (int o = 0; o < out_ch; ++o) {
        double s = 0.0;
        const double* row = dy.data() + static_cast<std::size_t>(o) * ncols;
        for (int c = 0; c < ncols; ++c) s += row[c];
        g[o] += s;
      }
    }
    if (wn->requires_grad)
      kernels::gemm(false, true, out_ch, kdim, ncols, 1.0, dy.data(), cols.data(), 1.0, wn->ensure_grad().data());
    if (xn->requires_grad) {
      std::vector<double> dcols(static_cast<std::size_t>(kdim) * ncols);
      kernels::gemm(true, false, kdim, ncols, out_ch, 1.0, wn->value.data(), dy.data(), 0.0, dcols.data());
      col_adjoint(dcols, xn->ensure_grad());
    }
  });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  check_rank(x, 4, "conv2d");
  check_rank(w, 4, "conv2d");
  check(x.dim(1) == w.dim(1), "conv2d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  kernels::Conv2dGeometry geo;
  geo.batch = x.dim(0);
  geo.channels = x.dim(1);
  geo.height = x.dim(2);
  geo.width = x.dim(3);
  geo.kernel_h = w.dim(2);
  geo.kernel_w = w.dim(3);
  geo.stride_h = geo.stride_w = stride;
  geo.pad_h = geo.pad_w = pad;
  check(geo.out_height() >= 1 && geo.out_width() >= 1, "conv2d: input smaller than kernel");
  std::vector<double> cols(static_cast<std::size_t>(geo.col_rows()) * geo.col_cols());
  kernels::im2col(geo, x.value().data(), cols.data());
  const int plane = geo.out_height() * geo.out_width();
  return conv_from_cols(x, w, b, std::move(cols), geo.batch, plane,
                        {geo.batch, w.dim(0), geo.out_height(), geo.out_width()},
                        [geo](const std::vector<double>& dcols, std::vector<double>& dx) {
                          kernels::col2im(geo, dcols.data(), dx.data());
                        });
}

Tensor conv3d_stem(const Tensor& x, const Tensor& w, const Tensor& b, int spatial_stride, int spatial_pad) {
  check_rank(x, 3, "conv3d_stem");
  check_rank(w, 4, "conv3d_stem");
  check(w.dim(1) % 2 == 1, "conv3d_stem: temporal kernel must be odd");
  kernels::Conv3dGeometry geo;
  geo.frames = x.dim(0);
  geo.height = x.dim(1);
  geo.width = x.dim(2);
  geo.kernel_t = w.dim(1);
  geo.kernel_h = w.dim(2);
  geo.kernel_w = w.dim(3);
  geo.pad_t = (geo.kernel_t - 1) / 2;
  geo.stride_h = geo.stride_w = spatial_stride;
  geo.pad_h = geo.pad_w = spatial_pad;
  check(geo.out_height() >= 1 && geo.out_width() >= 1, "conv3d_stem: input smaller than kernel");
  std::vector<double> cols(static_cast<std::size_t>(geo.col_rows()) * geo.col_cols());
  kernels::im2col_3d(geo, x.value().data(), cols.data());
  const int plane = geo.out_height() * geo.out_width();
  return conv_from_cols(x, w, b, std::move(cols), geo.out_frames(), plane,
                        {geo.out_frames(), w.dim(0), geo.out_height(), geo.out_width()},
                        [geo](const std::vector<double>& dcols, std::vector<double>& dx) {
                          kernels::col2im_3d(geo, dcols.data(), dx.data());
                        });
}

Tensor mean_hw(const Tensor& x) {
  check_rank(x, 4, "mean_hw");
  const int n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<double> v(static_cast<std::size_t>(n) * c);
  for (std::size_t i = 0; i < v.size(); ++i) {
    double s = 0.0;
    for (int p = 0; p < plane; ++p) s += x.value()[i * plane + p];
    v[i] = s / plane;
  }
  NodePtr xn = x.node();
  return x.graph().record({n, c}, std::move(v), {&x}, [xn, plane](const Node& out) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < out.grad.size(); ++i)
      for (int p = 0; p < plane; ++p) g[i * plane + p] += out.grad[i] / plane;
  });
}

Tensor depthwise_conv_time(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_rank(x, 2, "depthwise_conv_time");
  const int t_len = x.dim(0), d = x.dim(1);
  check(w.shape() == Shape{d, 3}, "depthwise_conv_time: weight must be [D,3]");
  check(b.size() == static_cast<std::size_t>(d), "depthwise_conv_time: bias must be [D]");
  const auto& xv = x.value();
  const auto& wv = w.value();
  std::vector<double> v(x.size());
  for (int t = 0; t < t_len; ++t)
    for (int c = 0; c < d; ++c) {
      double s = b.value()[c];
      for (int j = 0; j < 3; ++j) {
        const int src = t + j - 1;
        if (src >= 0 && src < t_len) s += wv[static_cast<std::size_t>(c) * 3 + j] * xv[static_cast<std::size_t>(src) * d + c];
      }
      v[static_cast<std::size_t>(t) * d + c] = s;
    }
  NodePtr xn = x.node(), wn = w.node(), bn = b.node();
  return x.graph().record(x.shape(), std::move(v), {&x, &w, &b}, [xn, wn, bn, t_len, d](const Node& out) {
    const auto& dy = out.grad;
    for (int t = 0; t < t_len; ++t)
      for (int c = 0; c < d; ++c) {
        const double gy = dy[static_cast<std::size_t>(t) * d + c];
        if (bn->requires_grad) bn->ensure_grad()[c] += gy;
        for (int j = 0; j < 3; ++j) {
          const int src = t + j - 1;
          if (src < 0 || src >= t_len) continue;
          if (wn->requires_grad) wn->ensure_grad()[static_cast<std::size_t>(c) * 3 + j] += gy * xn->value[static_cast<std::size_t>(src) * d + c];
          if (xn->requires_grad) xn->ensure_grad()[static_cast<std::size_t>(src) * d + c] += gy * wn->value[static_cast<std::size_t>(c) * 3 + j];
        }
      }
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads, bool causal) {
  check_rank(q, 2, "attention");
  check_rank(k, 2, "attention");
  check_rank(v, 2, "attention");
  const int lq = q.dim(0), lk = k.dim(0), d = q.dim(1);
  check(k.dim(1) == d && v.dim(1) == d && v.dim(0) == lk, "attention: q/k/v shape mismatch");
  check(heads >= 1 && d % heads == 0, "attention: width not divisible by heads");
  const int dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  std::vector<double> probs(static_cast<std::size_t>(heads) * lq * lk, 0.0);
  std::vector<double> out(static_cast<std::size_t>(lq) * d, 0.0);
  for (int h = 0; h < heads; ++h) {
    const int off = h * dh;
    for (int i = 0; i < lq; ++i) {
      double* p = probs.data() + (static_cast<std::size_t>(h) * lq + i) * lk;
      const int limit = causal ? std::min(lk, i + 1) : lk;
      double mx = -1e300;
      for (int j = 0; j < limit; ++j) {
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += qv[static_cast<std::size_t>(i) * d + off + c] * kv[static_cast<std::size_t>(j) * d + off + c];
        p[j] = s * inv;
        mx = std::max(mx, p[j]);
      }
      double z = 0.0;
      for (int j = 0; j < limit; ++j) {
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      for (int j = 0; j < limit; ++j) p[j] /= z;
      double* o = out.data() + static_cast<std::size_t>(i) * d + off;
      for (int j = 0; j < limit; ++j) {
        const double* vr = vv.data() + static_cast<std::size_t>(j) * d + off;
        for (int c = 0; c < dh; ++c) o[c] += p[j] * vr[c];
      }
    }
  }
  NodePtr qn = q.node(), kn = k.node(), vn = v.node();
  return q.graph().record({lq, d}, std::move(out), {&q, &k, &v},
                          [qn, kn, vn, heads, lq, lk, d, dh, inv, causal, probs = std::move(probs)](const Node& node) {
    const auto& dy = node.grad;
    std::vector<double> dp(static_cast<std::size_t>(lk));
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      for (int i = 0; i < lq; ++i) {
        const double* p = probs.data() + (static_cast<std::size_t>(h) * lq + i) * lk;
        const double* g = dy.data() + static_cast<std::size_t>(i) * d + off;
        const int limit = causal ? std::min(lk, i + 1) : lk;
        double dot = 0.0;
        for (int j = 0; j < limit; ++j) {
          const double* vr = vn->value.data() + static_cast<std::size_t>(j) * d + off;
          double s = 0.0;
          for (int c = 0; c < dh; ++c) s += g[c] * vr[c];
          dp[j] = s;
          dot += s * p[j];
          if (vn->requires_grad) {
            double* vg = vn->ensure_grad().data() + static_cast<std::size_t>(j) * d + off;
            for (int c = 0; c < dh; ++c) vg[c] += p[j] * g[c];
          }
        }
        for (int j = 0; j < limit; ++j) {
          const double ds = p[j] * (dp[j] - dot) * inv;
          if (ds == 0.0) continue;
          if (qn->requires_grad) {
            double* qg = qn->ensure_grad().data() + static_cast<std::size_t>(i) * d + off;
            const double* kr = kn->value.data() + static_cast<std::size_t>(j) * d + off;
            for (int c = 0; c < dh; ++c) qg[c] += ds * kr[c];
          }
          if (kn->requires_grad) {
            double* kg = kn->ensure_grad().data() + static_cast<std::size_t>(j) * d + off;
            const double* qr = qn->value.data() + static_cast<std::size_t>(i) * d + off;
            for (int c = 0; c < dh; ++c) kg[c] += ds * qr[c];
          }
        }
      }
    }
  });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  check_rank(table, 2, "embedding");
  const int vocab = table.dim(0), d = table.dim(1);
  check(!ids.empty(), "embedding: empty id list");
  const int len = static_cast<int>(ids.size());
  std::vector<double> v(static_cast<std::size_t>(len) * d);
  for (int i = 0; i < len; ++i) {
    check(ids[i] >= 0 && ids[i] < vocab, "embedding: id out of range");
    std::copy_n(table.value().begin() + static_cast<std::ptrdiff_t>(ids[i]) * d, d, v.begin() + static_cast<std::ptrdiff_t>(i) * d);
  }
  NodePtr tn = table.node();
  return table.graph().record({len, d}, std::move(v), {&table}, [tn, ids, d](const Node& out) {
    auto& g = tn->ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (int c = 0; c < d; ++c) g[static_cast<std::size_t>(ids[i]) * d + c] += out.grad[i * d + c];
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index) {
  check_rank(logits, 2, "cross_entropy");
  const int len = logits.dim(0), vocab = logits.dim(1);
  check(static_cast<int>(targets.size()) == len, "cross_entropy: target length mismatch");
  std::vector<double> probs(logits.size());
  double total = 0.0;
  int count = 0;
  for (int i = 0; i < len; ++i) {
    const double* row = logits.value().data() + static_cast<std::size_t>(i) * vocab;
    double* p = probs.data() + static_cast<std::size_t>(i) * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (int j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
    for (int j = 0; j < vocab; ++j) p[j] = std::exp(row[j] - mx) / z;
    if (targets[i] == ignore_index) continue;
    check(targets[i] >= 0 && targets[i] < vocab, "cross_entropy: target out of range");
    total += -(row[targets[i]] - mx - std::log(z));
    ++count;
  }
  require(count > 0, ErrorCode::kBatch, "cross_entropy: no non-ignored targets");
  NodePtr ln = logits.node();
  return logits.graph().record({1}, {total / count}, {&logits},
                               [ln, targets, ignore_index, vocab, count, probs = std::move(probs)](const Node& out) {
    auto& g = ln->ensure_grad();
    const double s = out.grad[0] / count;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i] == ignore_index) continue;
      for (int j = 0; j < vocab; ++j) g[i * vocab + j] += s * probs[i * vocab + j];
      g[i * vocab + targets[i]] -= s;
    }
  });
}

Tensor frame_cosine(const Tensor& a, const Tensor& b, double eps) {
  check_rank(a, 2, "frame_cosine");
  check_same(a, b, "frame_cosine");
  const int t_len = a.dim(0), d = a.dim(1);
  std::vector<double> v(t_len), na(t_len), nb(t_len);
  std::vector<char> a_clamped(t_len), b_clamped(t_len);
  for (int t = 0; t < t_len; ++t) {
    const double* x = a.value().data() + static_cast<std::size_t>(t) * d;
    const double* y = b.value().data() + static_cast<std::size_t>(t) * d;
    double dot = 0.0, xx = 0.0, yy = 0.0;
    for (int c = 0; c < d; ++c) {
      dot += x[c] * y[c];
      xx += x[c] * x[c];
      yy += y[c] * y[c];
    }
    const double rx = std::sqrt(xx), ry = std::sqrt(yy);
    a_clamped[t] = rx <= eps;
    b_clamped[t] = ry <= eps;
    na[t] = std::max(rx, eps);
    nb[t] = std::max(ry, eps);
    // sqrt(xx * yy) makes identical rows score exactly 1.
    const double both = xx * yy;
    v[t] = dot / (rx > eps && ry > eps && std::isfinite(both) ? std::sqrt(both) : na[t] * nb[t]);
  }
  NodePtr an = a.node(), bn = b.node();
  std::vector<double> cosv = v;
  return a.graph().record({t_len}, std::move(v), {&a, &b},
                          [an, bn, t_len, d, na, nb, a_clamped, b_clamped, cosv](const Node& out) {
    for (int t = 0; t < t_len; ++t) {
      const double g = out.grad[t];
      if (g == 0.0) continue;
      const double* x = an->value.data() + static_cast<std::size_t>(t) * d;
      const double* y = bn->value.data() + static_cast<std::size_t>(t) * d;
      const double denom = na[t] * nb[t];
      if (an->requires_grad) {
        double* gx = an->ensure_grad().data() + static_cast<std::size_t>(t) * d;
        const double self = a_clamped[t] ? 0.0 : cosv[t] / (na[t] * na[t]);
        for (int c = 0; c < d; ++c) gx[c] += g * (y[c] / denom - self * x[c]);
      }
      if (bn->requires_grad) {
        double* gy = bn->ensure_grad().data() + static_cast<std::size_t>(t) * d;
        const double self = b_clamped[t] ? 0.0 : cosv[t] / (nb[t] * nb[t]);
        for (int c = 0; c < d; ++c) gy[c] += g * (x[c] / denom - self * y[c]);
      }
    }
  });
}

Tensor bce(const Tensor& prob, int label, double eps) {
  check(prob.size() == 1, "bce: probability must be a scalar");
  require(label == 0 || label == 1, ErrorCode::kBatch, "bce: label must be 0 or 1");
  const double raw = prob.item();
  const double p = std::clamp(raw, eps, 1.0 - eps);
  const bool active = raw > eps && raw < 1.0 - eps;
  const double loss = label == 1 ? -std::log(p) : -std::log(1.0 - p);
  NodePtr pn = prob.node();
  return prob.graph().record({1}, {loss}, {&prob}, [pn, p, label, active](const Node& out) {
    if (!active) return;
    const double d = label == 1 ? -1.0 / p : 1.0 / (1.0 - p);
    pn->ensure_grad()[0] += out.grad[0] * d;
  });
}

}  // namespace cogenav::ops

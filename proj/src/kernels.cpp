#include "cogenav/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <vector>

namespace cogenav::kernels {

namespace {

// dst[cols x rows] = src[rows x cols]^T
void transpose(int rows, int cols, const double* src, double* dst) {
  constexpr int kBlock = 32;
  for (int r0 = 0; r0 < rows; r0 += kBlock) {
    for (int c0 = 0; c0 < cols; c0 += kBlock) {
      const int r1 = std::min(rows, r0 + kBlock);
      const int c1 = std::min(cols, c0 + kBlock);
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
    }
  }
}

void scale_rows(int m, int n, double beta, double* c) {
  const std::size_t total = static_cast<std::size_t>(m) * n;
  if (beta == 0.0) {
    std::fill(c, c + total, 0.0);
  } else if (beta != 1.0) {
    for (std::size_t i = 0; i < total; ++i) c[i] *= beta;
  }
}

// C[m x n] += alpha * A[m x k] * B[k x n]
void gemm_nn(int m, int n, int k, double alpha, const double* a,
             const double* b, double* c) {
  const std::size_t work = static_cast<std::size_t>(m) * n * k;
#pragma omp parallel for schedule(static) if (work > kParallelThreshold && !omp_in_parallel())
  for (int i = 0; i < m; ++i) {
    double* __restrict__ crow = c + static_cast<std::size_t>(i) * n;
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double s = alpha * arow[p];
      const double* __restrict__ brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, const double* b, double beta, double* c) {
  scale_rows(m, n, beta, c);
  if (m == 0 || n == 0 || k == 0) return;
  std::vector<double> a_buf, b_buf;
  if (trans_a) {
    a_buf.resize(static_cast<std::size_t>(m) * k);
    transpose(k, m, a, a_buf.data());
    a = a_buf.data();
  }
  if (trans_b) {
    b_buf.resize(static_cast<std::size_t>(k) * n);
    transpose(n, k, b, b_buf.data());
    b = b_buf.data();
  }
  gemm_nn(m, n, k, alpha, a, b, c);
}

void gemm_reference(bool trans_a, bool trans_b, int m, int n, int k,
                    double alpha, const double* a, const double* b,
                    double beta, double* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = trans_a ? a[static_cast<std::size_t>(p) * m + i] : a[static_cast<std::size_t>(i) * k + p];
        const double bv = trans_b ? b[static_cast<std::size_t>(j) * k + p] : b[static_cast<std::size_t>(p) * n + j];
        acc += av * bv;
      }
      double& out = c[static_cast<std::size_t>(i) * n + j];
      out = alpha * acc + (beta == 0.0 ? 0.0 : beta * out);
    }
  }
}

void im2col(const Conv2dGeometry& g, const double* input, double* cols) {
  const int oh = g.out_height(), ow = g.out_width();
  const int plane = oh * ow;
  const std::size_t ncols = static_cast<std::size_t>(g.col_cols());
  const int rows = g.col_rows();
#pragma omp parallel for schedule(static) if (static_cast<std::size_t>(rows) * ncols > kParallelThreshold && !omp_in_parallel())
  for (int r = 0; r < rows; ++r) {
    const int kx = r % g.kernel_w;
    const int ky = (r / g.kernel_w) % g.kernel_h;
    const int ch = r / (g.kernel_w * g.kernel_h);
    double* dst = cols + static_cast<std::size_t>(r) * ncols;
    for (int n = 0; n < g.batch; ++n) {
      const double* src = input + (static_cast<std::size_t>(n) * g.channels + ch) * g.height * g.width;
      double* out = dst + static_cast<std::size_t>(n) * plane;
      for (int y = 0; y < oh; ++y) {
        const int iy = y * g.stride_h - g.pad_h + ky;
        if (iy < 0 || iy >= g.height) {
          std::fill(out + y * ow, out + (y + 1) * ow, 0.0);
          continue;
        }
        const double* srow = src + static_cast<std::size_t>(iy) * g.width;
        for (int x = 0; x < ow; ++x) {
          const int ix = x * g.stride_w - g.pad_w + kx;
          out[y * ow + x] = (ix >= 0 && ix < g.width) ? srow[ix] : 0.0;
        }
      }
    }
  }
}

void im2col_reference(const Conv2dGeometry& g, const double* input, double* cols) {
  const int oh = g.out_height(), ow = g.out_width();
  const std::size_t ncols = static_cast<std::size_t>(g.col_cols());
  for (int ch = 0; ch < g.channels; ++ch)
    for (int ky = 0; ky < g.kernel_h; ++ky)
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const int r = (ch * g.kernel_h + ky) * g.kernel_w + kx;
        for (int n = 0; n < g.batch; ++n)
          for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
              const int iy = y * g.stride_h - g.pad_h + ky;
              const int ix = x * g.stride_w - g.pad_w + kx;
              double v = 0.0;
              if (iy >= 0 && iy < g.height && ix >= 0 && ix < g.width)
                v = input[((static_cast<std::size_t>(n) * g.channels + ch) * g.height + iy) * g.width + ix];
              cols[r * ncols + (static_cast<std::size_t>(n) * oh + y) * ow + x] = v;
            }
      }
}

void col2im(const Conv2dGeometry& g, const double* cols, double* input_grad) {
  const int oh = g.out_height(), ow = g.out_width();
  const int plane = oh * ow;
  const std::size_t ncols = static_cast<std::size_t>(g.col_cols());
  // Parallel over (batch, channel) planes: each owns a disjoint slice of
  // input_grad and visits its kernel offsets in a fixed order.
  const int planes = g.batch * g.channels;
#pragma omp parallel for schedule(static) if (static_cast<std::size_t>(g.col_rows()) * ncols > kParallelThreshold && !omp_in_parallel())
  for (int nc = 0; nc < planes; ++nc) {
    const int n = nc / g.channels, ch = nc % g.channels;
    double* dst = input_grad + static_cast<std::size_t>(nc) * g.height * g.width;
    for (int ky = 0; ky < g.kernel_h; ++ky)
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const int r = (ch * g.kernel_h + ky) * g.kernel_w + kx;
        const double* src = cols + r * ncols + static_cast<std::size_t>(n) * plane;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride_h - g.pad_h + ky;
          if (iy < 0 || iy >= g.height) continue;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * g.stride_w - g.pad_w + kx;
            if (ix >= 0 && ix < g.width) dst[iy * g.width + ix] += src[y * ow + x];
          }
        }
      }
  }
}

void im2col_3d(const Conv3dGeometry& g, const double* input, double* cols) {
  const int of = g.out_frames(), oh = g.out_height(), ow = g.out_width();
  const std::size_t ncols = static_cast<std::size_t>(g.col_cols());
  const int rows = g.col_rows();
  for (int r = 0; r < rows; ++r) {
    const int kx = r % g.kernel_w;
    const int ky = (r / g.kernel_w) % g.kernel_h;
    const int kt = r / (g.kernel_w * g.kernel_h);
    double* dst = cols + static_cast<std::size_t>(r) * ncols;
    for (int t = 0; t < of; ++t) {
      const int it = t - g.pad_t + kt;
      double* out = dst + static_cast<std::size_t>(t) * oh * ow;
      if (it < 0 || it >= g.frames) {
        std::fill(out, out + oh * ow, 0.0);
        continue;
      }
      const double* src = input + static_cast<std::size_t>(it) * g.height * g.width;
      for (int y = 0; y < oh; ++y) {
        const int iy = y * g.stride_h - g.pad_h + ky;
        for (int x = 0; x < ow; ++x) {
          const int ix = x * g.stride_w - g.pad_w + kx;
          out[y * ow + x] = (iy >= 0 && iy < g.height && ix >= 0 && ix < g.width) ? src[iy * g.width + ix] : 0.0;
        }
      }
    }
  }
}

void col2im_3d(const Conv3dGeometry& g, const double* cols, double* input_grad) {
  const int of = g.out_frames(), oh = g.out_height(), ow = g.out_width();
  const std::size_t ncols = static_cast<std::size_t>(g.col_cols());
  for (int kt = 0; kt < g.kernel_t; ++kt)
    for (int ky = 0; ky < g.kernel_h; ++ky)
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const int r = (kt * g.kernel_h + ky) * g.kernel_w + kx;
        const double* src = cols + r * ncols;
        for (int t = 0; t < of; ++t) {
          const int it = t - g.pad_t + kt;
          if (it < 0 || it >= g.frames) continue;
          double* dst = input_grad + static_cast<std::size_t>(it) * g.height * g.width;
          for (int y = 0; y < oh; ++y) {
            const int iy = y * g.stride_h - g.pad_h + ky;
            if (iy < 0 || iy >= g.height) continue;
            for (int x = 0; x < ow; ++x) {
              const int ix = x * g.stride_w - g.pad_w + kx;
              if (ix >= 0 && ix < g.width) dst[iy * g.width + ix] += src[(static_cast<std::size_t>(t) * oh + y) * ow + x];
            }
          }
        }
      }
}

}  // namespace cogenav::kernels

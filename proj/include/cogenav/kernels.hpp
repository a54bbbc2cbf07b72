#pragma once

// Dense numeric kernels shared by the autodiff ops.
//
// Every kernel has two implementations: the production one, which is
// vectorization-friendly and splits independent output rows across OpenMP
// threads, and a plain serial `*_reference` version kept for testing and
// benchmarking. Both produce each output element with the same summation
// order, so results agree to rounding and are independent of thread count.

#include <cstddef>

namespace cogenav::kernels {

// C[m x n] = alpha * op(A) * op(B) + beta * C, row-major.
// op(A) is m x k, op(B) is k x n. With trans_a, A is stored k x m; with
// trans_b, B is stored n x k.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, const double* b, double beta, double* c);
void gemm_reference(bool trans_a, bool trans_b, int m, int n, int k,
                    double alpha, const double* a, const double* b,
                    double beta, double* c);

struct Conv2dGeometry {
  int batch = 1, channels = 1, height = 0, width = 0;
  int kernel_h = 3, kernel_w = 3;
  int stride_h = 1, stride_w = 1;
  int pad_h = 0, pad_w = 0;

  int out_height() const { return (height + 2 * pad_h - kernel_h) / stride_h + 1; }
  int out_width() const { return (width + 2 * pad_w - kernel_w) / stride_w + 1; }
  int col_rows() const { return channels * kernel_h * kernel_w; }
  int col_cols() const { return batch * out_height() * out_width(); }
};

// input [batch, channels, height, width] -> cols [channels*kh*kw, batch*oh*ow]
void im2col(const Conv2dGeometry& g, const double* input, double* cols);
void im2col_reference(const Conv2dGeometry& g, const double* input, double* cols);
// Adjoint of im2col: accumulates cols back into `input_grad` (not cleared).
void col2im(const Conv2dGeometry& g, const double* cols, double* input_grad);

// Single-channel 3D patches over a [frames, height, width] volume with
// temporal stride 1 -> cols [kt*kh*kw, frames_out*oh*ow].
struct Conv3dGeometry {
  int frames = 0, height = 0, width = 0;
  int kernel_t = 5, kernel_h = 3, kernel_w = 3;
  int stride_h = 1, stride_w = 1;
  int pad_t = 2, pad_h = 1, pad_w = 1;

  int out_frames() const { return frames + 2 * pad_t - kernel_t + 1; }
  int out_height() const { return (height + 2 * pad_h - kernel_h) / stride_h + 1; }
  int out_width() const { return (width + 2 * pad_w - kernel_w) / stride_w + 1; }
  int col_rows() const { return kernel_t * kernel_h * kernel_w; }
  int col_cols() const { return out_frames() * out_height() * out_width(); }
};

void im2col_3d(const Conv3dGeometry& g, const double* input, double* cols);
void col2im_3d(const Conv3dGeometry& g, const double* cols, double* input_grad);

// Work (in multiply-adds) above which kernels fork OpenMP threads.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

}  // namespace cogenav::kernels

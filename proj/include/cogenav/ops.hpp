#pragma once

// Differentiable tensor operations. Shapes are row-major; "rows" are time
// steps for sequence tensors. Every op validates its shapes and throws
// Error(kShape) on mismatch.

#include <vector>

#include "cogenav/tensor.hpp"

namespace cogenav::ops {

// Elementwise / broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_row(const Tensor& a, const Tensor& row);  // [m,n] + [n]

Tensor gelu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor dropout(const Tensor& a, double p);  // active only in training graphs

// Reductions to a scalar of shape [1].
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
// x[m,in] * w[in,out] + b[out]; `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// Structural.
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose01(const Tensor& a);  // [a,b,c] -> [b,a,c]
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, int begin, int count);
Tensor repeat_rows(const Tensor& a, int factor);       // r0 r0 r1 r1 ...
Tensor interleave_rows(const Tensor& a, const Tensor& b);  // a0 b0 a1 b1 ...

// Convolutions.
// x[N,C,H,W], w[O,C,kh,kw], b[O] -> [N,O,oh,ow]
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);
// Single-channel volume x[T,H,W], w[O,kt,kh,kw] -> [T,O,oh,ow]; temporal
// stride 1 with zero padding (kt-1)/2 so T is preserved.
Tensor conv3d_stem(const Tensor& x, const Tensor& w, const Tensor& b,
                   int spatial_stride, int spatial_pad);
Tensor mean_hw(const Tensor& x);  // [N,C,H,W] -> [N,C]
// Depthwise temporal conv, kernel 3, zero padded: x[T,D], w[D,3], b[D].
Tensor depthwise_conv_time(const Tensor& x, const Tensor& w, const Tensor& b);

// Multi-head scaled dot-product attention over already-projected inputs:
// q[Lq,D], k[Lk,D], v[Lk,D] -> [Lq,D]. `causal` masks keys j > i.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                 bool causal);

Tensor embedding(const Tensor& table, const std::vector<int>& ids);
// Mean token cross-entropy over positions whose target != ignore_index.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     int ignore_index);

// Frame-wise cosine similarity with norms clamped below by eps: [T,D] -> [T].
Tensor frame_cosine(const Tensor& a, const Tensor& b, double eps);
// Binary cross-entropy of a probability scalar, clamped to [eps, 1-eps].
Tensor bce(const Tensor& prob, int label, double eps);

}  // namespace cogenav::ops

#pragma once

// Frame-wise audio-visual similarity, the BCE synchronization loss and the
// offset search built on top of them.

#include <vector>

#include "cogenav/tensor.hpp"

namespace cogenav {

inline constexpr double kCosineEps = 1e-8;
inline constexpr double kLogEps = 1e-7;

struct SyncScore {
  double d_bar = 0.0;
  std::vector<double> per_frame;  // ReLU(cosine) per frame
};

SyncScore frame_similarity(const Matrix& f_a, const Matrix& f_v, double eps = kCosineEps);
double contrastive_loss(const std::vector<SyncScore>& scores, const std::vector<int>& labels,
                        double eps_log = kLogEps);
// Raw cosines S[i][j] between audio frame i and visual frame j.
Matrix similarity_matrix(const Matrix& f_a, const Matrix& f_v, double eps = kCosineEps);
// Shift s maximizing d_bar between f_a[t] and f_v[t - s] over their overlap.
int best_offset(const Matrix& f_a, const Matrix& f_v, int max_shift, double eps = kCosineEps);

// Differentiable counterparts used by training: d_bar as a [1] tensor and
// the single-pair BCE term.
Tensor mean_similarity(const Tensor& f_a, const Tensor& f_v, double eps = kCosineEps);
Tensor contrastive_term(const Tensor& d_bar, int label, double eps_log = kLogEps);

}  // namespace cogenav

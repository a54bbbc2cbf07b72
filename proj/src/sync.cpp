#include "cogenav/sync.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "cogenav/errors.hpp"
#include "cogenav/ops.hpp"

namespace cogenav {

namespace {

double cosine(std::span<const double> a, std::span<const double> b, double eps) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double ra = std::sqrt(na), rb = std::sqrt(nb), both = na * nb;
  // sqrt(na * nb) makes identical rows score exactly 1.
  if (ra > eps && rb > eps && std::isfinite(both)) return dot / std::sqrt(both);
  return dot / (std::max(ra, eps) * std::max(rb, eps));
}

// d_bar over frames t in [lo, hi) of f_a against f_v[t - s].
double shifted_d_bar(const Matrix& f_a, const Matrix& f_v, int s, double eps) {
  const int lo = std::max(0, s), hi = std::min(f_a.rows, f_v.rows + s);
  double total = 0.0;
  for (int t = lo; t < hi; ++t) total += std::max(0.0, cosine(f_a.row(t), f_v.row(t - s), eps));
  return total / (hi - lo);
}

}  // namespace

SyncScore frame_similarity(const Matrix& f_a, const Matrix& f_v, double eps) {
  require(f_a.rows == f_v.rows && f_a.cols == f_v.cols && f_a.rows >= 1, ErrorCode::kShape,
          "frame_similarity: shapes [" + std::to_string(f_a.rows) + "," + std::to_string(f_a.cols) + "] vs [" +
              std::to_string(f_v.rows) + "," + std::to_string(f_v.cols) + "]");
  require(eps > 0.0, ErrorCode::kConfig, "frame_similarity: eps must be positive");
  SyncScore s;
  s.per_frame.resize(static_cast<std::size_t>(f_a.rows));
  double total = 0.0;
  for (int t = 0; t < f_a.rows; ++t) {
    s.per_frame[t] = std::max(0.0, cosine(f_a.row(t), f_v.row(t), eps));
    total += s.per_frame[t];
  }
  s.d_bar = total / f_a.rows;
  return s;
}

double contrastive_loss(const std::vector<SyncScore>& scores, const std::vector<int>& labels, double eps_log) {
  require(!scores.empty(), ErrorCode::kBatch, "contrastive_loss: empty batch");
  require(scores.size() == labels.size(), ErrorCode::kBatch, "contrastive_loss: scores/labels length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double d = std::clamp(scores[i].d_bar, eps_log, 1.0 - eps_log);
    total -= labels[i] ? std::log(d) : std::log(1.0 - d);
  }
  return total / static_cast<double>(scores.size());
}

Matrix similarity_matrix(const Matrix& f_a, const Matrix& f_v, double eps) {
  require(f_a.cols == f_v.cols, ErrorCode::kShape, "similarity_matrix: feature width mismatch");
  Matrix s(f_a.rows, f_v.rows);
  for (int i = 0; i < f_a.rows; ++i)
    for (int j = 0; j < f_v.rows; ++j) s(i, j) = std::clamp(cosine(f_a.row(i), f_v.row(j), eps), -1.0, 1.0);
  return s;
}

int best_offset(const Matrix& f_a, const Matrix& f_v, int max_shift, double eps) {
  require(f_a.cols == f_v.cols, ErrorCode::kShape, "best_offset: feature width mismatch");
  require(max_shift >= 0 && max_shift < std::min(f_a.rows, f_v.rows), ErrorCode::kShape,
          "best_offset: max_shift must be below the sequence length");
  int best = 0;
  double best_score = -1.0;
  // Visit 0, -1, +1, -2, +2, ... so strict improvement implements the tie-break.
  for (int m = 0; m <= max_shift; ++m) {
    for (int s : {-m, m}) {
      if (m == 0 && s > 0) continue;
      const int overlap = std::min(f_a.rows, f_v.rows + s) - std::max(0, s);
      require(overlap >= 1, ErrorCode::kShape, "best_offset: empty overlap at shift " + std::to_string(s));
      const double score = shifted_d_bar(f_a, f_v, s, eps);
      if (score > best_score) {
        best_score = score;
        best = s;
      }
    }
  }
  return best;
}

Tensor mean_similarity(const Tensor& f_a, const Tensor& f_v, double eps) {
  return ops::mean(ops::relu(ops::frame_cosine(f_a, f_v, eps)));
}

Tensor contrastive_term(const Tensor& d_bar, int label, double eps_log) {
  return ops::bce(d_bar, label, eps_log);
}

}  // namespace cogenav

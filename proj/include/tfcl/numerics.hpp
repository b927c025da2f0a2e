#pragma once

// Stable scalar and matrix kernels shared by every loss: row normalization,
// cosine similarity, log-sum-exp / softmax and the scaled log-odds map
// c -> log((1 + c) / (1 - c)) = 2 atanh(c).

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfcl/error.hpp"

namespace tfcl {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kMinRowNorm = 1e-30;
inline constexpr double kDefaultClampEps = 1e-7;
inline constexpr double kCosineSlack = 1e-9;

inline std::span<const double> row_span(const Matrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

// N x D matrix of representation vectors, one row per instance.
class EmbeddingBatch {
 public:
  EmbeddingBatch() = default;
  explicit EmbeddingBatch(Matrix data) : data_(std::move(data)) {
    if (data_.rows() < 1 || data_.cols() < 1) {
      throw Error(ErrorCode::EmptyInput, "embedding batch has no entries");
    }
    if (!data_.allFinite()) {
      throw Error(ErrorCode::InvalidParams, "embedding batch has non-finite entries");
    }
  }

  Eigen::Index n() const { return data_.rows(); }
  Eigen::Index d() const { return data_.cols(); }
  const Matrix& matrix() const { return data_; }

 private:
  Matrix data_;
};

// s[i][j] = cos(theta_ij) between anchor i and view j; diagonal holds the
// positive pairs.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  explicit SimilarityMatrix(Matrix s) : s_(std::move(s)) {}

  Eigen::Index rows() const { return s_.rows(); }
  Eigen::Index cols() const { return s_.cols(); }
  bool square() const { return s_.rows() == s_.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return s_(i, j); }
  const Matrix& values() const { return s_; }

 private:
  Matrix s_;
};

// Shortest round-trip decimal, independent of the global locale.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline Vector row_norms(const Matrix& m) { return m.rowwise().norm(); }

inline EmbeddingBatch l2_normalize(const EmbeddingBatch& batch) {
  const Matrix& x = batch.matrix();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double norm = x.row(i).norm();
    if (!(norm >= kMinRowNorm)) {
      throw Error(ErrorCode::ZeroNormRow,
                  "row " + std::to_string(i) + " has norm below 1e-30",
                  static_cast<std::size_t>(i));
    }
    out.row(i) = x.row(i) / norm;
    assert(std::abs(out.row(i).norm() - 1.0) <= 1e-12);
  }
  return EmbeddingBatch(std::move(out));
}

inline SimilarityMatrix cosine_similarity_matrix(const EmbeddingBatch& anchors,
                                                 const EmbeddingBatch& views) {
  if (anchors.n() != views.n() || anchors.d() != views.d()) {
    throw Error(ErrorCode::ShapeMismatch, "anchors and views differ in shape");
  }
  const Matrix a = l2_normalize(anchors).matrix();
  const Matrix v = l2_normalize(views).matrix();
  return SimilarityMatrix(a * v.transpose());
}

inline double log_sum_exp(std::span<const double> logits) {
  if (logits.empty()) {
    throw Error(ErrorCode::EmptyInput, "log_sum_exp of an empty vector");
  }
  const double hi = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(hi)) {
    return hi;
  }
  double acc = 0.0;
  for (double x : logits) {
    acc += std::exp(x - hi);
  }
  return hi + std::log(acc);
}

inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) {
    throw Error(ErrorCode::EmptyInput, "softmax of an empty vector");
  }
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    p[j] = std::exp(logits[j] - hi);
    total += p[j];
  }
  for (double& v : p) {
    v /= total;
  }
  return p;
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double clamp_cosine(double c, double eps = kDefaultClampEps) {
  if (!(std::abs(c) <= 1.0 + kCosineSlack)) {
    throw Error(ErrorCode::OutOfDomain,
                "cosine similarity " + std::to_string(c) + " outside [-1, 1]");
  }
  return std::clamp(c, -1.0 + eps, 1.0 - eps);
}

// log((1 + c) / (1 - c)); |c| is clamped to 1 - eps first.
inline double logit_map(double c, double eps = kDefaultClampEps) {
  return 2.0 * std::atanh(clamp_cosine(c, eps));
}

inline double logit_map_derivative(double c, double eps = kDefaultClampEps) {
  const double x = clamp_cosine(c, eps);
  return 2.0 / ((1.0 - x) * (1.0 + x));
}

inline SimilarityMatrix clamp_for_logit(const SimilarityMatrix& s,
                                       double eps = kDefaultClampEps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw Error(ErrorCode::InvalidParams, "clamp eps must lie in (0, 1e-2]");
  }
  Matrix out = s.values();
  const double lo = -1.0 + eps;
  const double hi = 1.0 - eps;
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    double& v = out.data()[k];
    if (v < lo) {
      v = lo;
    } else if (v > hi) {
      v = hi;
    }
  }
  return SimilarityMatrix(std::move(out));
}

}  // namespace tfcl

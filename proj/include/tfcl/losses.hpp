#pragma once

// InfoNCE / NT-Xent loss family over an anchor-view similarity matrix.
//
// Three logit maps feed the same row-wise softmax cross-entropy:
//   fixed temperature     z_ij = s_ij / tau
//   learnable temperature z_ij = s_ij * exp(t)
//   temperature-free      z_ij = 2 atanh(clamp(s_ij))
// The positive pair of row i is column i; the denominator sums over every
// column, the positive included.

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tfcl/error.hpp"
#include "tfcl/numerics.hpp"

namespace tfcl {

enum class Reduction { Sum, Mean };
enum class Direction { OneWay, Symmetric };

struct LossOptions {
  Reduction reduction = Reduction::Sum;
  Direction direction = Direction::OneWay;
  double clamp_eps = kDefaultClampEps;
};

struct LossResult {
  double loss = 0.0;
  // Per-row L_i of the anchor->view direction, before reduction.
  std::vector<double> row_loss;
  Matrix grad_sim;
  std::optional<double> grad_t;
};

enum class TemperatureKind { FixedTau, LearnableT, TemperatureFree };

struct TemperatureParam {
  TemperatureKind kind = TemperatureKind::TemperatureFree;
  double tau = 1.0;
  double t = 0.0;

  static TemperatureParam fixed(double tau) { return {TemperatureKind::FixedTau, tau, 0.0}; }
  static TemperatureParam learnable(double t) { return {TemperatureKind::LearnableT, 1.0, t}; }
  static TemperatureParam temperature_free() { return {}; }

  void validate() const {
    if (kind == TemperatureKind::FixedTau && !(tau > 0.0 && std::isfinite(tau))) {
      throw Error(ErrorCode::NonPositiveTemperature, "tau must be positive");
    }
    if (kind == TemperatureKind::LearnableT && !(std::abs(t) <= 700.0)) {
      throw Error(ErrorCode::TOverflow, "exp(t) overflows for |t| > 700");
    }
  }
};

inline std::string to_string(TemperatureKind kind) {
  switch (kind) {
    case TemperatureKind::FixedTau: return "ntxent";
    case TemperatureKind::LearnableT: return "learnable";
    case TemperatureKind::TemperatureFree: return "temp-free";
  }
  return "unknown";
}

namespace detail {

struct RowXent {
  std::vector<double> row_loss;
  Matrix prob_minus_target;  // p_ij - 1{j == i}
};

inline RowXent softmax_xent_rows(const Matrix& logits) {
  const Eigen::Index n = logits.rows();
  RowXent out{std::vector<double>(static_cast<std::size_t>(n)), Matrix(n, logits.cols())};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = row_span(logits, i);
    out.row_loss[static_cast<std::size_t>(i)] = log_sum_exp(row) - logits(i, i);
    const std::vector<double> p = softmax(row);
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      out.prob_minus_target(i, j) = p[static_cast<std::size_t>(j)] - (i == j ? 1.0 : 0.0);
    }
  }
  return out;
}

inline void require_square(const SimilarityMatrix& s) {
  if (!s.square() || s.rows() < 1) {
    throw Error(ErrorCode::NonSquare, "similarity matrix must be square and non-empty");
  }
}

inline double total(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc;
}

// One direction (rows = anchors) with sum reduction.
inline LossResult one_way(const Matrix& s, const TemperatureParam& param, double eps) {
  LossResult r;
  switch (param.kind) {
    case TemperatureKind::FixedTau: {
      RowXent x = softmax_xent_rows(s / param.tau);
      r.row_loss = std::move(x.row_loss);
      r.grad_sim = x.prob_minus_target / param.tau;
      break;
    }
    case TemperatureKind::LearnableT: {
      const double scale = std::exp(param.t);
      RowXent x = softmax_xent_rows(s * scale);
      r.row_loss = std::move(x.row_loss);
      r.grad_sim = x.prob_minus_target * scale;
      double gt = 0.0;
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < s.cols(); ++j) {
          row += x.prob_minus_target(i, j) * s(i, j);
        }
        gt += row * scale;
      }
      r.grad_t = gt;
      break;
    }
    case TemperatureKind::TemperatureFree: {
      const Matrix c = clamp_for_logit(SimilarityMatrix(s), eps).values();
      Matrix z(c.rows(), c.cols());
      for (Eigen::Index k = 0; k < c.size(); ++k) {
        // Domain check happens on the raw value.
        clamp_cosine(s.data()[k], eps);
        z.data()[k] = 2.0 * std::atanh(c.data()[k]);
      }
      RowXent x = softmax_xent_rows(z);
      r.row_loss = std::move(x.row_loss);
      r.grad_sim = Matrix(c.rows(), c.cols());
      for (Eigen::Index k = 0; k < c.size(); ++k) {
        const bool clipped = c.data()[k] != s.data()[k];
        const double dz = clipped ? 0.0 : 2.0 / ((1.0 - c.data()[k]) * (1.0 + c.data()[k]));
        r.grad_sim.data()[k] = x.prob_minus_target.data()[k] * dz;
      }
      break;
    }
  }
  r.loss = total(r.row_loss);
  return r;
}

}  // namespace detail

inline LossResult compute_loss(const SimilarityMatrix& s, const TemperatureParam& param,
                               const LossOptions& opts = {}) {
  detail::require_square(s);
  param.validate();
  LossResult r = detail::one_way(s.values(), param, opts.clamp_eps);
  if (opts.direction == Direction::Symmetric) {
    const Matrix st = s.values().transpose();
    const LossResult back = detail::one_way(st, param, opts.clamp_eps);
    r.loss = 0.5 * (r.loss + back.loss);
    r.grad_sim = 0.5 * (r.grad_sim + back.grad_sim.transpose());
    if (r.grad_t) {
      r.grad_t = 0.5 * (*r.grad_t + *back.grad_t);
    }
  }
  if (opts.reduction == Reduction::Mean) {
    const double n = static_cast<double>(s.rows());
    r.loss /= n;
    r.grad_sim /= n;
    if (r.grad_t) {
      r.grad_t = *r.grad_t / n;
    }
  }
  return r;
}

inline LossResult ntxent_loss(const SimilarityMatrix& s, double tau, const LossOptions& opts = {}) {
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::NonPositiveTemperature, "tau must be positive");
  }
  return compute_loss(s, TemperatureParam::fixed(tau), opts);
}

inline LossResult learnable_temp_loss(const SimilarityMatrix& s, double t,
                                      const LossOptions& opts = {}) {
  return compute_loss(s, TemperatureParam::learnable(t), opts);
}

inline LossResult tf_infonce_loss(const SimilarityMatrix& s, double eps = kDefaultClampEps,
                                  LossOptions opts = {}) {
  opts.clamp_eps = eps;
  return compute_loss(s, TemperatureParam::temperature_free(), opts);
}

struct EmbeddingGrads {
  Matrix anchors;
  Matrix views;
};

// Gradient of sum_ij grad_sim[i][j] * cos(theta_ij) with respect to the raw
// (unnormalized) anchor and view rows.
inline EmbeddingGrads backprop_to_embeddings(const EmbeddingBatch& anchors,
                                             const EmbeddingBatch& views,
                                             const Matrix& grad_sim) {
  if (anchors.d() != views.d() || grad_sim.rows() != anchors.n() ||
      grad_sim.cols() != views.n()) {
    throw Error(ErrorCode::ShapeMismatch, "grad_sim does not match the embedding batches");
  }
  const Matrix a_hat = l2_normalize(anchors).matrix();
  const Matrix v_hat = l2_normalize(views).matrix();
  const Vector a_norm = row_norms(anchors.matrix());
  const Vector v_norm = row_norms(views.matrix());

  // Gradients with respect to the unit vectors, then through x -> x / |x|.
  const Matrix g_a = grad_sim * v_hat;
  const Matrix g_v = grad_sim.transpose() * a_hat;

  auto project = [](const Matrix& g, const Matrix& unit, const Vector& norm) {
    Matrix out(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double radial = g.row(i).dot(unit.row(i));
      out.row(i) = (g.row(i) - radial * unit.row(i)) / norm(i);
    }
    return out;
  };
  return {project(g_a, a_hat, a_norm), project(g_v, v_hat, v_norm)};
}

}  // namespace tfcl

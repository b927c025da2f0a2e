#pragma once

// Fully connected encoder with hand-written reverse mode, momentum SGD and a
// cosine-annealed learning rate.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tfcl/data.hpp"
#include "tfcl/error.hpp"
#include "tfcl/numerics.hpp"

namespace tfcl {

enum class Activation { Relu, Tanh };

inline std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

struct EncoderConfig {
  // Input width, hidden widths..., output width.
  std::vector<int> widths{32, 64, 32};
  Activation activation = Activation::Relu;
  std::uint64_t init_seed = 0;

  void validate() const {
    if (widths.size() < 2) {
      throw Error(ErrorCode::InvalidParams, "encoder needs at least input and output widths");
    }
    for (int w : widths) {
      if (w < 1) throw Error(ErrorCode::InvalidParams, "layer widths must be >= 1");
    }
  }
};

// Layer l maps width[l] -> width[l+1] as y = x W_l + b_l, with x a row.
struct MlpParams {
  std::vector<Matrix> w;
  std::vector<Matrix> b;  // 1 x out

  std::size_t layers() const { return w.size(); }
};

namespace detail {
inline std::uint64_t next_stamp() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

// Parameters plus a stamp that changes on every update, used to reject
// backward passes against a cache recorded before the update.
struct MlpWeights {
  MlpParams params;
  std::uint64_t stamp = detail::next_stamp();

  void touch() { stamp = detail::next_stamp(); }
};

inline MlpParams zeros_like(const MlpParams& p) {
  MlpParams z;
  for (std::size_t l = 0; l < p.layers(); ++l) {
    z.w.push_back(Matrix::Zero(p.w[l].rows(), p.w[l].cols()));
    z.b.push_back(Matrix::Zero(1, p.b[l].cols()));
  }
  return z;
}

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline MlpWeights init_mlp(const EncoderConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.init_seed ^ 0x9e3779b97f4a7c15ULL);
  MlpWeights out;
  for (std::size_t l = 0; l + 1 < cfg.widths.size(); ++l) {
    const int fan_in = cfg.widths[l];
    const int fan_out = cfg.widths[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_in, fan_out);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = dist(rng);
    out.params.w.push_back(std::move(w));
    out.params.b.push_back(Matrix::Zero(1, fan_out));
  }
  return out;
}

struct ForwardCache {
  std::uint64_t stamp = 0;
  Activation activation = Activation::Relu;
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each hidden layer
};

inline Matrix activate(const Matrix& z, Activation a) {
  return a == Activation::Relu ? Matrix(z.cwiseMax(0.0)) : Matrix(z.array().tanh().matrix());
}

inline std::pair<Matrix, ForwardCache> mlp_forward(const EncoderConfig& cfg,
                                                   const MlpWeights& weights, const Matrix& batch) {
  const MlpParams& p = weights.params;
  if (p.layers() + 1 != cfg.widths.size() || p.layers() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "weights do not match the encoder config");
  }
  if (batch.cols() != p.w.front().rows()) {
    throw Error(ErrorCode::ShapeMismatch, "batch width " + std::to_string(batch.cols()) +
                                              " differs from input width " +
                                              std::to_string(p.w.front().rows()));
  }
  ForwardCache cache;
  cache.stamp = weights.stamp;
  cache.activation = cfg.activation;
  Matrix x = batch;
  for (std::size_t l = 0; l < p.layers(); ++l) {
    Matrix z = x * p.w[l];
    z.rowwise() += p.b[l].row(0);
    cache.inputs.push_back(std::move(x));
    if (l + 1 == p.layers()) {
      return {std::move(z), std::move(cache)};
    }
    x = activate(z, cfg.activation);
    cache.pre.push_back(std::move(z));
  }
  return {};  // unreachable
}

inline MlpParams mlp_backward(const ForwardCache& cache, const MlpWeights& weights,
                              const Matrix& grad_out) {
  if (cache.stamp != weights.stamp) {
    throw Error(ErrorCode::StaleCache, "forward cache was recorded against other weights");
  }
  const MlpParams& p = weights.params;
  if (cache.inputs.size() != p.layers() || grad_out.rows() != cache.inputs.front().rows() ||
      grad_out.cols() != p.w.back().cols()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient does not match the forward cache");
  }
  MlpParams g = zeros_like(p);
  Matrix delta = grad_out;
  for (std::size_t l = p.layers(); l-- > 0;) {
    g.w[l] = cache.inputs[l].transpose() * delta;
    g.b[l] = delta.colwise().sum();
    if (l == 0) break;
    Matrix up = delta * p.w[l].transpose();
    const Matrix& z = cache.pre[l - 1];
    if (cache.activation == Activation::Relu) {
      delta = (z.array() > 0.0).select(up, 0.0);
    } else {
      const Matrix& h = cache.inputs[l];  // tanh(z)
      delta = up.array() * (1.0 - h.array().square());
    }
  }
  return g;
}

inline void accumulate(MlpParams& into, const MlpParams& g) {
  for (std::size_t l = 0; l < into.layers(); ++l) {
    into.w[l] += g.w[l];
    into.b[l] += g.b[l];
  }
}

// v <- momentum * v + (grad + weight_decay * w);  w <- w - lr * v
inline void sgd_step(Matrix& w, const Matrix& grad, Matrix& velocity, double lr, double momentum,
                     double weight_decay) {
  velocity = momentum * velocity + grad + weight_decay * w;
  w -= lr * velocity;
}

inline void sgd_step(double& w, double grad, double& velocity, double lr, double momentum,
                     double weight_decay) {
  velocity = momentum * velocity + grad + weight_decay * w;
  w -= lr * velocity;
}

inline void sgd_step(MlpWeights& weights, const MlpParams& grads, MlpParams& velocity, double lr,
                     double momentum, double weight_decay) {
  MlpParams& p = weights.params;
  for (std::size_t l = 0; l < p.layers(); ++l) {
    sgd_step(p.w[l], grads.w[l], velocity.w[l], lr, momentum, weight_decay);
    sgd_step(p.b[l], grads.b[l], velocity.b[l], lr, momentum, weight_decay);
  }
  weights.touch();
}

inline double cosine_lr(long step, long total_steps, double lr0) {
  if (total_steps < 1 || step < 0 || step > total_steps) {
    throw Error(ErrorCode::InvalidParams, "cosine_lr needs 0 <= step <= total_steps, total >= 1");
  }
  if (step == total_steps) return 0.0;
  return lr0 * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                         static_cast<double>(total_steps)));
}

}  // namespace tfcl

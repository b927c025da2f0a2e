#pragma once

// Contrastive training loop: shuffle, two augmented views per row, encoder
// forward, cosine similarities, one of the three losses, backward, momentum
// SGD under a cosine-annealed learning rate.

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "tfcl/data.hpp"
#include "tfcl/error.hpp"
#include "tfcl/eval.hpp"
#include "tfcl/losses.hpp"
#include "tfcl/mlp.hpp"
#include "tfcl/numerics.hpp"

namespace tfcl {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double lr0 = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  // For LearnableT, `t` is the initial value.
  TemperatureParam loss = TemperatureParam::temperature_free();
  double clamp_eps = kDefaultClampEps;
  AugmentationConfig aug{0.25, 0.9, 1.1, 0.1};
  std::uint64_t seed = 0;
  bool symmetrize = false;
  Reduction reduction = Reduction::Mean;

  void validate() const {
    if (epochs < 1) throw Error(ErrorCode::InvalidParams, "epochs must be >= 1");
    if (batch_size < 2) throw Error(ErrorCode::InvalidParams, "batch_size must be >= 2");
    if (!(lr0 > 0.0)) throw Error(ErrorCode::InvalidParams, "lr0 must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw Error(ErrorCode::InvalidParams, "momentum must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidParams, "weight_decay must be >= 0");
    loss.validate();
    aug.validate();
  }
};

struct RunReport {
  std::vector<double> loss_trajectory;
  std::optional<std::vector<double>> t_trajectory;
  double final_knn_acc = 0.0;
  double wall_time_s = 0.0;
};

struct TrainResult {
  MlpWeights weights;
  // Final learnable temperature parameter (equals the initial t otherwise).
  double t = 0.0;
  RunReport report;
};

// Row-normalized encoder output for a whole matrix of inputs.
inline Matrix embed(const EncoderConfig& enc, const MlpWeights& weights, const Matrix& x) {
  auto [y, cache] = mlp_forward(enc, weights, x);
  return l2_normalize(EmbeddingBatch(std::move(y))).matrix();
}

inline TrainResult train_contrastive(const Dataset& data, const EncoderConfig& enc,
                                     const TrainConfig& cfg) {
  enc.validate();
  cfg.validate();
  if (data.size() < cfg.batch_size) {
    throw Error(ErrorCode::InvalidParams, "dataset is smaller than one batch");
  }
  if (data.dim() != enc.widths.front()) {
    throw Error(ErrorCode::ShapeMismatch, "dataset width differs from encoder input width");
  }
  const auto start = std::chrono::steady_clock::now();

  TrainResult out{init_mlp(enc), cfg.loss.t, {}};
  MlpParams velocity = zeros_like(out.weights.params);
  double t_velocity = 0.0;
  const bool learnable = cfg.loss.kind == TemperatureKind::LearnableT;
  if (learnable) out.report.t_trajectory.emplace();

  const LossOptions opts{cfg.reduction,
                         cfg.symmetrize ? Direction::Symmetric : Direction::OneWay,
                         cfg.clamp_eps};
  Rng rng(cfg.seed);
  const Eigen::Index batches = data.size() / cfg.batch_size;  // last partial batch dropped
  const long total_steps = static_cast<long>(cfg.epochs) * static_cast<long>(batches);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Matrix rows(cfg.batch_size, data.dim());
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Eigen::Index b = 0; b < batches; ++b, ++step) {
      for (Eigen::Index r = 0; r < cfg.batch_size; ++r) {
        rows.row(r) = data.features.row(order[static_cast<std::size_t>(b * cfg.batch_size + r)]);
      }
      const ViewPair views = make_views(rows, cfg.aug, rng);
      auto [ya, cache_a] = mlp_forward(enc, out.weights, views.a);
      auto [yb, cache_b] = mlp_forward(enc, out.weights, views.b);
      if (!ya.allFinite() || !yb.allFinite()) {
        throw Error(ErrorCode::DivergedLoss, "encoder output became non-finite at epoch " +
                                                 std::to_string(epoch + 1));
      }
      const EmbeddingBatch ea(std::move(ya));
      const EmbeddingBatch eb(std::move(yb));

      TemperatureParam param = cfg.loss;
      param.t = out.t;
      const LossResult loss = compute_loss(cosine_similarity_matrix(ea, eb), param, opts);
      if (!std::isfinite(loss.loss)) {
        throw Error(ErrorCode::DivergedLoss, "loss became non-finite at epoch " +
                                                 std::to_string(epoch + 1));
      }
      epoch_loss += loss.loss;

      const EmbeddingGrads eg = backprop_to_embeddings(ea, eb, loss.grad_sim);
      MlpParams grads = mlp_backward(cache_a, out.weights, eg.anchors);
      accumulate(grads, mlp_backward(cache_b, out.weights, eg.views));

      const double lr = cosine_lr(step, total_steps, cfg.lr0);
      sgd_step(out.weights, grads, velocity, lr, cfg.momentum, cfg.weight_decay);
      if (learnable) {
        // t takes the same step as the weights, without weight decay.
        sgd_step(out.t, *loss.grad_t, t_velocity, lr, cfg.momentum, 0.0);
      }
    }
    const double mean = epoch_loss / static_cast<double>(batches);
    if (!std::isfinite(mean)) {
      throw Error(ErrorCode::DivergedLoss, "epoch loss is non-finite");
    }
    out.report.loss_trajectory.push_back(mean);
    if (learnable) out.report.t_trajectory->push_back(out.t);
  }
  out.report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

struct EvalConfig {
  double test_fraction = 0.2;
  int k = 15;
  std::uint64_t split_seed = 0;
};

// Stratified split, contrastive training on the train side, kNN top-1 of the
// test side against the train side on frozen embeddings.
inline TrainResult run_experiment(const Dataset& data, const EncoderConfig& enc,
                                  const TrainConfig& train, const EvalConfig& eval) {
  validate(data);
  const Split split = split_dataset(data, eval.test_fraction, eval.split_seed);
  TrainResult result = train_contrastive(split.train, enc, train);
  const auto start = std::chrono::steady_clock::now();
  const Matrix train_emb = embed(enc, result.weights, split.train.features);
  const Matrix test_emb = embed(enc, result.weights, split.test.features);
  result.report.final_knn_acc =
      knn_top1(train_emb, split.train.labels, test_emb, split.test.labels, eval.k);
  result.report.wall_time_s +=
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace tfcl

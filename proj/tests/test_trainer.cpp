#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "tfcl/gradcheck.hpp"
#include "tfcl/trainer.hpp"

using namespace tfcl;

namespace {

Dataset small_data() { return generate_clusters({4, 40, 8, 1.0, 4.0, 0}); }

EncoderConfig small_encoder() { return EncoderConfig{{8, 16, 8}, Activation::Relu, 0}; }

TrainConfig small_train(TemperatureParam p, int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 32;
  c.loss = p;
  return c;
}

double head_mean(const std::vector<double>& v, std::size_t k) {
  return std::accumulate(v.begin(), v.begin() + static_cast<long>(k), 0.0) / static_cast<double>(k);
}

double tail_mean(const std::vector<double>& v, std::size_t k) {
  return std::accumulate(v.end() - static_cast<long>(k), v.end(), 0.0) / static_cast<double>(k);
}

}  // namespace

TEST(MlpForward, IdentitySingleLayer) {
  const EncoderConfig enc{{3, 3}, Activation::Relu, 0};
  MlpWeights w = init_mlp(enc);
  w.params.w[0] = Matrix::Identity(3, 3);
  w.params.b[0].setZero();
  const Matrix x = (Matrix(2, 3) << 1, -2, 3, 0.5, 0, -1).finished();
  EXPECT_EQ(mlp_forward(enc, w, x).first, x);
}

TEST(MlpForward, ZeroWeightsGiveZeroAndZeroNormRow) {
  const EncoderConfig enc{{3, 4, 2}, Activation::Relu, 0};
  MlpWeights w = init_mlp(enc);
  for (auto& m : w.params.w) m.setZero();
  const Matrix x = Matrix::Ones(5, 3);
  const Matrix y = mlp_forward(enc, w, x).first;
  EXPECT_EQ(y, Matrix::Zero(5, 2));
  EXPECT_TFCL_ERROR(l2_normalize(EmbeddingBatch(y)), ErrorCode::ZeroNormRow);
}

TEST(MlpForward, ShapeMismatch) {
  const EncoderConfig enc{{3, 4, 2}, Activation::Tanh, 0};
  const MlpWeights w = init_mlp(enc);
  EXPECT_TFCL_ERROR(mlp_forward(enc, w, Matrix::Ones(2, 4)), ErrorCode::ShapeMismatch);
  const EncoderConfig other{{3, 2}, Activation::Tanh, 0};
  EXPECT_TFCL_ERROR(mlp_forward(other, w, Matrix::Ones(2, 3)), ErrorCode::ShapeMismatch);
}

TEST(InitMlp, DeterministicAndBounded) {
  const EncoderConfig enc{{10, 30, 5}, Activation::Relu, 7};
  const MlpWeights a = init_mlp(enc);
  const MlpWeights b = init_mlp(enc);
  ASSERT_EQ(a.params.layers(), 2u);
  EXPECT_EQ(a.params.w[0], b.params.w[0]);
  EXPECT_LE(a.params.w[0].cwiseAbs().maxCoeff(), std::sqrt(6.0 / 40.0));
  EXPECT_LE(a.params.w[1].cwiseAbs().maxCoeff(), std::sqrt(6.0 / 35.0));
  EXPECT_EQ(a.params.b[1], Matrix::Zero(1, 5));
  EXPECT_NE(a.stamp, b.stamp);
  EXPECT_TFCL_ERROR(init_mlp(EncoderConfig{{4}, Activation::Relu, 0}), ErrorCode::InvalidParams);
}

TEST(MlpBackward, ZeroUpstreamGivesZero) {
  const EncoderConfig enc{{3, 5, 2}, Activation::Tanh, 1};
  const MlpWeights w = init_mlp(enc);
  auto [y, cache] = mlp_forward(enc, w, Matrix::Random(4, 3));
  const MlpParams g = mlp_backward(cache, w, Matrix::Zero(4, 2));
  for (std::size_t l = 0; l < g.layers(); ++l) {
    EXPECT_EQ(g.w[l].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g.b[l].cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(MlpBackward, LinearSingleDatumIsOuterProduct) {
  const EncoderConfig enc{{3, 2}, Activation::Relu, 2};
  const MlpWeights w = init_mlp(enc);
  const Matrix x = (Matrix(1, 3) << 1, -2, 0.5).finished();
  const Matrix g = (Matrix(1, 2) << 3, -1).finished();
  auto [y, cache] = mlp_forward(enc, w, x);
  const MlpParams grads = mlp_backward(cache, w, g);
  EXPECT_EQ(grads.w[0], Matrix(x.transpose() * g));
  EXPECT_EQ(grads.b[0], g);
}

TEST(MlpBackward, MatchesFiniteDifferences) {
  for (Activation act : {Activation::Relu, Activation::Tanh}) {
    const EncoderConfig enc{{4, 6, 3}, act, 3};
    MlpWeights w = init_mlp(enc);
    for (auto& b : w.params.b) b.setConstant(0.1);
    const Matrix x = Matrix::Random(5, 4);
    const Matrix upstream = Matrix::Random(5, 3);
    auto [y, cache] = mlp_forward(enc, w, x);
    const MlpParams g = mlp_backward(cache, w, upstream);
    auto objective = [&](const MlpWeights& ww) {
      return (mlp_forward(enc, ww, x).first.array() * upstream.array()).sum();
    };
    for (std::size_t l = 0; l < 2; ++l) {
      for (Eigen::Index k = 0; k < w.params.w[l].size(); ++k) {
        MlpWeights p = w, m = w;
        p.params.w[l].data()[k] += 1e-6;
        m.params.w[l].data()[k] -= 1e-6;
        const double fd = (objective(p) - objective(m)) / 2e-6;
        EXPECT_NEAR(g.w[l].data()[k], fd, 1e-7 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST(MlpBackward, StaleCacheRejected) {
  const EncoderConfig enc{{3, 2}, Activation::Relu, 2};
  MlpWeights w = init_mlp(enc);
  auto [y, cache] = mlp_forward(enc, w, Matrix::Ones(2, 3));
  MlpParams vel = zeros_like(w.params);
  sgd_step(w, zeros_like(w.params), vel, 0.1, 0.9, 0.0);
  EXPECT_TFCL_ERROR(mlp_backward(cache, w, Matrix::Ones(2, 2)), ErrorCode::StaleCache);
}

TEST(SgdStep, PlainStep) {
  Matrix w = (Matrix(1, 2) << 1.0, -2.0).finished();
  Matrix v = Matrix::Zero(1, 2);
  sgd_step(w, (Matrix(1, 2) << 0.5, 1.0).finished(), v, 0.1, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(w(0, 0), 0.95);
  EXPECT_DOUBLE_EQ(w(0, 1), -2.1);
}

TEST(SgdStep, MomentumUnrolledThreeSteps) {
  // Constant gradient g, no decay: displacements lr*g*(1), (1 + m), (1 + m + m^2).
  double w = 0.0, v = 0.0;
  const double lr = 0.1, g = 2.0, m = 0.9;
  sgd_step(w, g, v, lr, m, 0.0);
  EXPECT_DOUBLE_EQ(w, -lr * g);
  sgd_step(w, g, v, lr, m, 0.0);
  EXPECT_NEAR(w, -lr * g * (1.0 + 1.9), 1e-15);
  sgd_step(w, g, v, lr, m, 0.0);
  EXPECT_NEAR(w, -lr * g * (1.0 + 1.9 + 2.71), 1e-14);
}

TEST(SgdStep, WeightDecayOnly) {
  double w = 2.0, v = 0.0;
  sgd_step(w, 0.0, v, 0.5, 0.0, 0.1);
  EXPECT_DOUBLE_EQ(w, 1.9);
}

TEST(CosineLr, Examples) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 0.05), 0.05);
  EXPECT_NEAR(cosine_lr(50, 100, 0.05), 0.025, 1e-15);
  EXPECT_EQ(cosine_lr(100, 100, 0.05), 0.0);
  EXPECT_NEAR(cosine_lr(25, 100, 1.0), 0.5 * (1 + std::sqrt(0.5)), 1e-15);
  EXPECT_TFCL_ERROR(cosine_lr(101, 100, 0.05), ErrorCode::InvalidParams);
  EXPECT_TFCL_ERROR(cosine_lr(0, 0, 0.05), ErrorCode::InvalidParams);
}

TEST(TrainConfig, Rejections) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_TFCL_ERROR(c.validate(), ErrorCode::InvalidParams);
  c = TrainConfig{};
  c.batch_size = 1;
  EXPECT_TFCL_ERROR(c.validate(), ErrorCode::InvalidParams);
  c = TrainConfig{};
  c.loss = TemperatureParam::fixed(0.0);
  EXPECT_TFCL_ERROR(c.validate(), ErrorCode::NonPositiveTemperature);
  c = TrainConfig{};
  c.momentum = 1.0;
  EXPECT_TFCL_ERROR(c.validate(), ErrorCode::InvalidParams);
  EXPECT_TFCL_ERROR(train_contrastive(small_data(), small_encoder(),
                                      small_train(TemperatureParam::temperature_free(), 0)),
                    ErrorCode::InvalidParams);
  EXPECT_TFCL_ERROR(
      train_contrastive(small_data(), EncoderConfig{{5, 4}, Activation::Relu, 0},
                        small_train(TemperatureParam::temperature_free(), 1)),
      ErrorCode::ShapeMismatch);
}

TEST(TrainContrastive, TempFreeLossDecreases) {
  const TrainResult r = train_contrastive(small_data(), small_encoder(),
                                          small_train(TemperatureParam::temperature_free(), 100));
  ASSERT_EQ(r.report.loss_trajectory.size(), 100u);
  EXPECT_LT(r.report.loss_trajectory.back(), r.report.loss_trajectory.front());
  EXPECT_LT(tail_mean(r.report.loss_trajectory, 10), head_mean(r.report.loss_trajectory, 10));
  EXPECT_FALSE(r.report.t_trajectory.has_value());
}

TEST(TrainContrastive, Deterministic) {
  const auto cfg = small_train(TemperatureParam::fixed(0.5), 10);
  const TrainResult a = train_contrastive(small_data(), small_encoder(), cfg);
  const TrainResult b = train_contrastive(small_data(), small_encoder(), cfg);
  EXPECT_EQ(a.report.loss_trajectory, b.report.loss_trajectory);
  EXPECT_EQ(a.weights.params.w[1], b.weights.params.w[1]);
  auto other = cfg;
  other.seed = 1;
  const TrainResult c = train_contrastive(small_data(), small_encoder(), other);
  EXPECT_NE(a.report.loss_trajectory, c.report.loss_trajectory);
}

TEST(TrainContrastive, LearnableTemperatureMoves) {
  const TrainResult r = train_contrastive(small_data(), small_encoder(),
                                          small_train(TemperatureParam::learnable(0.0), 50));
  ASSERT_TRUE(r.report.t_trajectory.has_value());
  ASSERT_EQ(r.report.t_trajectory->size(), 50u);
  for (double t : *r.report.t_trajectory) EXPECT_TRUE(std::isfinite(t));
  EXPECT_EQ(r.t, r.report.t_trajectory->back());
  EXPECT_NE(r.t, 0.0);
  EXPECT_LT(tail_mean(r.report.loss_trajectory, 5), head_mean(r.report.loss_trajectory, 5));
}

TEST(TrainContrastive, SymmetricAndSumOptions) {
  auto cfg = small_train(TemperatureParam::temperature_free(), 20);
  cfg.symmetrize = true;
  cfg.reduction = Reduction::Sum;
  cfg.lr0 = 0.002;
  const TrainResult r = train_contrastive(small_data(), small_encoder(), cfg);
  EXPECT_LT(r.report.loss_trajectory.back(), r.report.loss_trajectory.front());
}

TEST(TrainContrastive, DivergenceIsReported) {
  auto cfg = small_train(TemperatureParam::fixed(0.05), 50);
  cfg.lr0 = 1e12;
  cfg.momentum = 0.0;
  EXPECT_TFCL_ERROR(train_contrastive(small_data(), small_encoder(), cfg), ErrorCode::DivergedLoss);
}

TEST(RunExperiment, ProducesAccuracy) {
  const TrainResult r = run_experiment(small_data(), small_encoder(),
                                       small_train(TemperatureParam::temperature_free(), 30),
                                       EvalConfig{0.2, 5, 0});
  EXPECT_GE(r.report.final_knn_acc, 0.0);
  EXPECT_LE(r.report.final_knn_acc, 1.0);
  EXPECT_GT(r.report.final_knn_acc, 0.5);
  EXPECT_GT(r.report.wall_time_s, 0.0);
}

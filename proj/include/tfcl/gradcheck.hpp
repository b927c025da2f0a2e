#pragma once

// Central finite-difference oracle for every analytical gradient in the
// library: grad_sim of the three losses, grad_t of the learnable variant, and
// weight gradients of the full loss(normalize(MLP(x))) composition.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <iomanip>
#include <locale>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tfcl/data.hpp"
#include "tfcl/error.hpp"
#include "tfcl/losses.hpp"
#include "tfcl/mlp.hpp"
#include "tfcl/numerics.hpp"

namespace tfcl {

using ScalarFn = std::function<double(std::span<const double>)>;

// g[k] = (f(x + h e_k) - f(x - h e_k)) / 2h
template <typename T = double, typename Fn>
std::vector<T> central_difference(const Fn& fn, std::span<const T> x, T h) {
  if (!(h > 0)) {
    throw Error(ErrorCode::InvalidParams, "finite-difference step must be positive");
  }
  std::vector<T> probe(x.begin(), x.end());
  std::vector<T> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const T orig = probe[k];
    probe[k] = orig + h;
    const T up = fn(std::span<const T>(probe));
    probe[k] = orig - h;
    const T down = fn(std::span<const T>(probe));
    probe[k] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error(ErrorCode::NonFiniteProbe,
                  "function is not finite at probe " + std::to_string(k));
    }
    g[k] = (up - down) / (2 * h);
  }
  return g;
}

inline std::vector<double> central_difference(const ScalarFn& fn, std::span<const double> x,
                                              double h) {
  return central_difference<double, ScalarFn>(fn, x, h);
}

inline constexpr double kRelErrorFloor = 1e-8;

// |a - b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor = kRelErrorFloor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  // (trial, coordinate) of the worst relative error.
  std::size_t worst_trial = 0;
  std::size_t worst_coordinate = 0;
  std::size_t coordinates_checked = 0;
  double tolerance = 0.0;
  bool passed = true;
};

// Folds one analytical/numerical gradient pair into the report.
inline void compare_into(GradCheckReport& report, std::span<const double> analytic,
                         std::span<const double> numeric, std::size_t trial,
                         double floor = kRelErrorFloor) {
  if (analytic.size() != numeric.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient lengths differ");
  }
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double rel = relative_error(analytic[k], numeric[k], floor);
    report.max_abs_error = std::max(report.max_abs_error, std::abs(analytic[k] - numeric[k]));
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_trial = trial;
      report.worst_coordinate = k;
    }
  }
  report.coordinates_checked += analytic.size();
  report.passed = report.max_rel_error <= report.tolerance;
}

enum class GradCheckTarget {
  NtXent,     // grad_sim at fixed tau
  Learnable,  // grad_sim and grad_t
  TempFree,   // grad_sim, entries bounded away from the clamp
  Embedding,  // cosine backprop to raw embeddings, through the chosen loss
  EndToEnd,   // MLP weights through normalize and the chosen loss
};

struct GradCheckSpec {
  GradCheckTarget target = GradCheckTarget::NtXent;
  // Loss used by the Embedding and EndToEnd targets.
  TemperatureParam loss = TemperatureParam::fixed(0.25);
  int n = 8;
  int d = 4;
  // Encoder widths for EndToEnd; widths.front() is the raw input width.
  std::vector<int> widths{8, 6, 4};
  Activation activation = Activation::Tanh;
  double entry_bound = 0.95;
  int trials = 100;
  double tolerance = 1e-5;
  double h = 1e-6;
  double rel_floor = kRelErrorFloor;
  std::uint64_t seed = 0;
};

// Plain-loop forward evaluation in extended precision, sharing no code with
// the kernels under test. Central differences of these functions are the
// numerical side of every check.
namespace reference {

using Real = long double;
using Vec = std::vector<Real>;

// Scaled variants: z = c * scale. Temp-free: exp(z) = (1 + x) / (1 - x) with
// x the clamped cosine, so no transcendental is needed for the weights.
struct LogitMap {
  TemperatureKind kind;
  Real scale = 1;
  Real eps = kDefaultClampEps;

  LogitMap(const TemperatureParam& p, Real clamp = kDefaultClampEps) : kind(p.kind), eps(clamp) {
    if (kind == TemperatureKind::FixedTau) scale = 1 / static_cast<Real>(p.tau);
    if (kind == TemperatureKind::LearnableT) scale = std::exp(static_cast<Real>(p.t));
  }

  bool ratio_form() const { return kind == TemperatureKind::TemperatureFree; }

  Real ratio(Real c) const {
    const Real x = std::min(std::max(c, -1 + eps), 1 - eps);
    return (1 + x) / (1 - x);
  }

  Real logit(Real c) const { return ratio_form() ? std::log(ratio(c)) : c * scale; }
};

// Sum over rows of -z_ii + log sum_j exp(z_ij), z = logit map of s (n x n).
inline Real contrastive_loss(const Vec& s, std::size_t n, const TemperatureParam& p,
                             Real eps = kDefaultClampEps) {
  const LogitMap map(p, eps);
  Real total = 0;
  Vec z(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (map.ratio_form()) {
      Real acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += map.ratio(s[i * n + j]);
      total += std::log(acc / map.ratio(s[i * n + i]));
      continue;
    }
    Real hi = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      z[j] = s[i * n + j] * map.scale;
      hi = std::max(hi, z[j]);
    }
    Real acc = 0;
    for (Real v : z) acc += std::exp(v - hi);
    total += hi + std::log(acc) - z[i];
  }
  return total;
}

// contrastive_loss around a base matrix. Each row keeps its shifted weights
// exp(z_ij - hi_i) and their sum; rows with no changed entry reuse the cached
// row loss, changed entries update the sum, and a weight above 1 (a new row
// maximum) triggers a full row pass.
class LossProbe {
 public:
  LossProbe(const Vec& s, std::size_t n, const TemperatureParam& p)
      : n_(n), map_(p), s_(s), w_(n * n), hi_(n), acc_(n), row_(n) {
    for (std::size_t i = 0; i < n; ++i) {
      hi_[i] = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < n; ++j) hi_[i] = std::max(hi_[i], map_.logit(s[i * n + j]));
      acc_[i] = 0;
      for (std::size_t j = 0; j < n; ++j) {
        w_[i * n + j] = weight(s[i * n + j], i);
        acc_[i] += w_[i * n + j];
      }
      row_[i] = hi_[i] + std::log(acc_[i]) - map_.logit(s[i * n + i]);
    }
  }

  Real operator()(const Vec& s) const {
    Real total = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      Real acc = acc_[i];
      bool changed = false;
      bool overflow = false;
      for (std::size_t j = 0; j < n_; ++j) {
        const std::size_t k = i * n_ + j;
        if (s[k] == s_[k]) continue;
        changed = true;
        const Real w = weight(s[k], i);
        if (w > 1) {
          overflow = true;
          break;
        }
        acc += w - w_[k];
      }
      if (!changed) {
        total += row_[i];
      } else if (overflow) {
        total += full_row(s, i);
      } else {
        total += hi_[i] + std::log(acc) - map_.logit(s[i * n_ + i]);
      }
    }
    return total;
  }

 private:
  Real weight(Real c, std::size_t i) const {
    return map_.ratio_form() ? map_.ratio(c) / std::exp(hi_[i]) : std::exp(c * map_.scale - hi_[i]);
  }

  Real full_row(const Vec& s, std::size_t i) const {
    Real hi = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < n_; ++j) hi = std::max(hi, map_.logit(s[i * n_ + j]));
    Real acc = 0;
    for (std::size_t j = 0; j < n_; ++j) acc += std::exp(map_.logit(s[i * n_ + j]) - hi);
    return hi + std::log(acc) - map_.logit(s[i * n_ + i]);
  }

  std::size_t n_;
  LogitMap map_;
  Vec s_;
  Vec w_;
  Vec hi_;
  Vec acc_;
  Vec row_;
};

// Learnable-temperature loss as a function of t alone.
inline Real learnable_loss_in_t(const Vec& s, std::size_t n, Real t) {
  const Real scale = std::exp(t);
  Real total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Real hi = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < n; ++j) hi = std::max(hi, s[i * n + j] * scale);
    Real acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += std::exp(s[i * n + j] * scale - hi);
    total += hi + std::log(acc) - s[i * n + i] * scale;
  }
  return total;
}

namespace detail {
template <typename M>
Real row_norm(const M& m, std::size_t r, std::size_t d) {
  Real acc = 0;
  for (std::size_t k = 0; k < d; ++k) acc += m[r * d + k] * m[r * d + k];
  return std::sqrt(acc);
}

template <typename A, typename B>
Real row_dot(const A& a, std::size_t i, const B& v, std::size_t j, std::size_t d) {
  Real dot = 0;
  for (std::size_t k = 0; k < d; ++k) dot += a[i * d + k] * v[j * d + k];
  return dot;
}
}  // namespace detail

// Cosine similarities of the rows of a (n x d) against the rows of v.
inline Vec cosine(const Vec& a, const Vec& v, std::size_t n, std::size_t d) {
  Vec na(n), nv(n);
  for (std::size_t r = 0; r < n; ++r) {
    na[r] = detail::row_norm(a, r, d);
    nv[r] = detail::row_norm(v, r, d);
  }
  Vec s(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) s[i * n + j] = detail::row_dot(a, i, v, j, d) / (na[i] * nv[j]);
  }
  return s;
}

// Cosine matrix of fixed (anchors, views) with incremental re-evaluation:
// only rows (anchors) or columns (views) whose inputs differ from the base
// point are recomputed.
class CosineProbe {
 public:
  CosineProbe(Vec a, Vec v, std::size_t n, std::size_t d)
      : a_(std::move(a)), v_(std::move(v)), n_(n), d_(d), s_(cosine(a_, v_, n, d)), na_(n), nv_(n) {
    for (std::size_t r = 0; r < n; ++r) {
      na_[r] = detail::row_norm(a_, r, d);
      nv_[r] = detail::row_norm(v_, r, d);
    }
  }

  Vec with_anchors(std::span<const Real> x) const {
    Vec s = s_;
    for (std::size_t i = 0; i < n_; ++i) {
      if (!row_differs(x, a_, i)) continue;
      const Real norm = detail::row_norm(x, i, d_);
      for (std::size_t j = 0; j < n_; ++j) {
        s[i * n_ + j] = detail::row_dot(x, i, v_, j, d_) / (norm * nv_[j]);
      }
    }
    return s;
  }

  Vec with_views(std::span<const Real> x) const {
    Vec s = s_;
    for (std::size_t j = 0; j < n_; ++j) {
      if (!row_differs(x, v_, j)) continue;
      const Real norm = detail::row_norm(x, j, d_);
      for (std::size_t i = 0; i < n_; ++i) {
        s[i * n_ + j] = detail::row_dot(a_, i, x, j, d_) / (na_[i] * norm);
      }
    }
    return s;
  }

 private:
  bool row_differs(std::span<const Real> x, const Vec& base, std::size_t r) const {
    for (std::size_t k = 0; k < d_; ++k) {
      if (x[r * d_ + k] != base[r * d_ + k]) return true;
    }
    return false;
  }

  Vec a_;
  Vec v_;
  std::size_t n_;
  std::size_t d_;
  Vec s_;
  Vec na_;
  Vec nv_;
};

// MLP forward with parameters laid out layer by layer as W (in x out, row
// major) followed by b (out).
inline Vec mlp(const std::vector<int>& widths, Activation act, std::span<const Real> params,
               const Vec& x, std::size_t rows) {
  Vec cur = x;
  std::size_t at = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto in = static_cast<std::size_t>(widths[l]);
    const auto out = static_cast<std::size_t>(widths[l + 1]);
    const Real* w = params.data() + at;
    const Real* b = w + in * out;
    at += in * out + out;
    Vec next(rows * out);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < out; ++o) {
        Real acc = b[o];
        for (std::size_t k = 0; k < in; ++k) acc += cur[r * in + k] * w[k * out + o];
        const bool hidden = l + 2 < widths.size();
        if (hidden) acc = act == Activation::Relu ? std::max(acc, Real(0)) : std::tanh(acc);
        next[r * out + o] = acc;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

// mlp() around base parameters. The first layer holding a changed parameter
// recomputes only the output columns whose weights or bias changed; later
// layers are recomputed in full.
class MlpProbe {
 public:
  MlpProbe(std::vector<int> widths, Activation act, const Vec& params, Vec x, std::size_t rows)
      : widths_(std::move(widths)), act_(act), p_(params), x_(std::move(x)), rows_(rows) {
    std::size_t at = 0;
    const Vec* cur = &x_;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      offset_.push_back(at);
      at += in(l) * out(l) + out(l);
      outs_.push_back(layer(l, p_, *cur));
      cur = &outs_.back();
    }
  }

  Vec operator()(std::span<const Real> p) const {
    for (std::size_t l = 0; l < offset_.size(); ++l) {
      std::vector<std::size_t> cols;
      const std::size_t w = offset_[l];
      const std::size_t b = w + in(l) * out(l);
      for (std::size_t o = 0; o < out(l); ++o) {
        bool differs = p[b + o] != p_[b + o];
        for (std::size_t k = 0; k < in(l) && !differs; ++k) {
          differs = p[w + k * out(l) + o] != p_[w + k * out(l) + o];
        }
        if (differs) cols.push_back(o);
      }
      if (cols.empty()) continue;
      const Vec& input = l == 0 ? x_ : outs_[l - 1];
      Vec cur = outs_[l];
      for (std::size_t o : cols) {
        for (std::size_t r = 0; r < rows_; ++r) cur[r * out(l) + o] = unit(l, p, input, r, o);
      }
      for (std::size_t m = l + 1; m < offset_.size(); ++m) cur = layer(m, p, cur);
      return cur;
    }
    return outs_.back();
  }

 private:
  std::size_t in(std::size_t l) const { return static_cast<std::size_t>(widths_[l]); }
  std::size_t out(std::size_t l) const { return static_cast<std::size_t>(widths_[l + 1]); }

  template <typename P>
  Real unit(std::size_t l, const P& p, const Vec& input, std::size_t r, std::size_t o) const {
    const std::size_t w = offset_[l];
    Real acc = p[w + in(l) * out(l) + o];
    for (std::size_t k = 0; k < in(l); ++k) acc += input[r * in(l) + k] * p[w + k * out(l) + o];
    if (l + 2 < widths_.size()) acc = act_ == Activation::Relu ? std::max(acc, Real(0)) : std::tanh(acc);
    return acc;
  }

  template <typename P>
  Vec layer(std::size_t l, const P& p, const Vec& input) const {
    Vec next(rows_ * out(l));
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t o = 0; o < out(l); ++o) next[r * out(l) + o] = unit(l, p, input, r, o);
    }
    return next;
  }

  std::vector<int> widths_;
  Activation act_;
  Vec p_;
  Vec x_;
  std::size_t rows_;
  std::vector<std::size_t> offset_;
  std::vector<Vec> outs_;
};

inline Vec from(std::span<const double> x) { return Vec(x.begin(), x.end()); }

}  // namespace reference

namespace detail {

inline Matrix random_similarity(int n, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix s(n, n);
  for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = dist(rng);
  return s;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
  return m;
}

inline std::span<const double> flat(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

inline std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> out;
  for (std::size_t l = 0; l < p.layers(); ++l) {
    out.insert(out.end(), p.w[l].data(), p.w[l].data() + p.w[l].size());
    out.insert(out.end(), p.b[l].data(), p.b[l].data() + p.b[l].size());
  }
  return out;
}

inline std::vector<double> narrow(const std::vector<long double>& v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace detail

// Random trials of one analytical gradient against central differences of the
// extended-precision reference; the report keeps the worst coordinate over
// all trials.
inline GradCheckReport check_loss_gradients(const GradCheckSpec& spec) {
  using reference::Real;
  using reference::Vec;
  if (spec.trials < 1) {
    throw Error(ErrorCode::InvalidParams, "trials must be >= 1");
  }
  if (spec.n < 1 || spec.d < 1) {
    throw Error(ErrorCode::InvalidParams, "n and d must be >= 1");
  }
  GradCheckReport report;
  report.tolerance = spec.tolerance;
  Rng rng(spec.seed);
  const LossOptions opts{};
  const auto n = static_cast<std::size_t>(spec.n);
  const Real h = spec.h;

  for (int trial = 0; trial < spec.trials; ++trial) {
    const auto tr = static_cast<std::size_t>(trial);
    switch (spec.target) {
      case GradCheckTarget::NtXent:
      case GradCheckTarget::TempFree:
      case GradCheckTarget::Learnable: {
        TemperatureParam param;
        if (spec.target == GradCheckTarget::NtXent) {
          param = spec.loss.kind == TemperatureKind::FixedTau ? spec.loss
                                                              : TemperatureParam::fixed(0.25);
        } else if (spec.target == GradCheckTarget::TempFree) {
          param = TemperatureParam::temperature_free();
        } else {
          std::uniform_real_distribution<double> tdist(-1.0, 1.0);
          param = TemperatureParam::learnable(tdist(rng));
        }
        const Matrix s = detail::random_similarity(spec.n, spec.entry_bound, rng);
        const LossResult res = compute_loss(SimilarityMatrix(s), param, opts);
        const Vec s0 = reference::from(detail::flat(s));
        const reference::LossProbe loss_at(s0, n, param);
        const auto fn = [&](std::span<const Real> x) { return loss_at(Vec(x.begin(), x.end())); };
        compare_into(report, detail::flat(res.grad_sim),
                     detail::narrow(central_difference<Real>(fn, s0, h)), tr, spec.rel_floor);
        if (spec.target == GradCheckTarget::Learnable) {
          const auto fn_t = [&](std::span<const Real> x) {
            return reference::learnable_loss_in_t(s0, n, x[0]);
          };
          const Real t0[] = {static_cast<Real>(param.t)};
          const double analytic[] = {*res.grad_t};
          compare_into(report, analytic,
                       detail::narrow(central_difference<Real>(fn_t, t0, h)), tr, spec.rel_floor);
        }
        break;
      }
      case GradCheckTarget::Embedding: {
        const auto d = static_cast<std::size_t>(spec.d);
        // Rows of expected unit norm, so the step is h relative to the row.
        const double scale = 1.0 / std::sqrt(static_cast<double>(spec.d));
        const Matrix a = scale * detail::random_matrix(spec.n, spec.d, rng);
        const Matrix v = scale * detail::random_matrix(spec.n, spec.d, rng);
        const LossResult res = compute_loss(
            cosine_similarity_matrix(EmbeddingBatch(a), EmbeddingBatch(v)), spec.loss, opts);
        const EmbeddingGrads g =
            backprop_to_embeddings(EmbeddingBatch(a), EmbeddingBatch(v), res.grad_sim);
        const Vec a0 = reference::from(detail::flat(a));
        const Vec v0 = reference::from(detail::flat(v));
        const reference::CosineProbe probe(a0, v0, n, d);
        const reference::LossProbe loss_at(reference::cosine(a0, v0, n, d), n, spec.loss);
        const auto fa = [&](std::span<const Real> x) { return loss_at(probe.with_anchors(x)); };
        const auto fv = [&](std::span<const Real> x) { return loss_at(probe.with_views(x)); };
        compare_into(report, detail::flat(g.anchors),
                     detail::narrow(central_difference<Real>(fa, a0, h)), tr, spec.rel_floor);
        compare_into(report, detail::flat(g.views),
                     detail::narrow(central_difference<Real>(fv, v0, h)), tr, spec.rel_floor);
        break;
      }
      case GradCheckTarget::EndToEnd: {
        const EncoderConfig enc{spec.widths, spec.activation, rng()};
        MlpWeights weights = init_mlp(enc);
        // Nonzero biases keep relu units and output rows away from exact zeros.
        std::uniform_real_distribution<double> bias(-0.1, 0.1);
        for (Matrix& b : weights.params.b) {
          for (Eigen::Index k = 0; k < b.size(); ++k) b.data()[k] = bias(rng);
        }
        const auto d_in = spec.widths.front();
        const Matrix xa = detail::random_matrix(spec.n, d_in, rng);
        const Matrix xb = detail::random_matrix(spec.n, d_in, rng);

        auto [ya, ca] = mlp_forward(enc, weights, xa);
        auto [yb, cb] = mlp_forward(enc, weights, xb);
        const EmbeddingBatch ea(ya);
        const EmbeddingBatch eb(yb);
        const LossResult res = compute_loss(cosine_similarity_matrix(ea, eb), spec.loss, opts);
        const EmbeddingGrads eg = backprop_to_embeddings(ea, eb, res.grad_sim);
        MlpParams grads = mlp_backward(ca, weights, eg.anchors);
        accumulate(grads, mlp_backward(cb, weights, eg.views));

        const Vec xa0 = reference::from(detail::flat(xa));
        const Vec xb0 = reference::from(detail::flat(xb));
        const auto d_out = static_cast<std::size_t>(spec.widths.back());
        const Vec p0 = reference::from(detail::flatten(weights.params));
        const reference::MlpProbe probe_a(spec.widths, spec.activation, p0, xa0, n);
        const reference::MlpProbe probe_b(spec.widths, spec.activation, p0, xb0, n);
        const auto fn = [&](std::span<const Real> p) {
          return reference::contrastive_loss(reference::cosine(probe_a(p), probe_b(p), n, d_out),
                                             n, spec.loss);
        };
        compare_into(report, detail::flatten(grads),
                     detail::narrow(central_difference<Real>(fn, p0, h)), tr, spec.rel_floor);
        break;
      }
    }
  }
  return report;
}

inline std::string describe(const GradCheckReport& r) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::scientific << std::setprecision(3) << "max_rel_error=" << r.max_rel_error
     << " max_abs_error=" << r.max_abs_error << " worst=(trial " << r.worst_trial << ", coord "
     << r.worst_coordinate << ") checked=" << r.coordinates_checked << " tol=" << r.tolerance
     << (r.passed ? " PASS" : " FAIL");
  return os.str();
}

}  // namespace tfcl

#pragma once

// Closed-form analysis of one anchor row with similarities [C, -C, ..., -C]
// (one positive, N - 1 negatives). C is half the gap between the positive and
// each negative; C -> 1 is the optimum.
//
//   fixed tau      L = log(1 + (N-1) exp(-2C/tau))
//                  |dL/dC| = (N-1)(2/tau) / ((N-1) + exp(2C/tau))
//   learnable t    L = log(1 + (N-1) exp(-2C e^t))
//                  |dL/dt| = (N-1) 2C e^t / ((N-1) + exp(2C e^t))
//   temp-free      L = -log((1+C)^2 / ((1+C)^2 + (N-1)(1-C)^2))
//                  |dL/dC| = 4(N-1)(1-C) / ((1+C)(N(1-C)^2 + 4C))

#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "tfcl/error.hpp"
#include "tfcl/losses.hpp"

namespace tfcl {

struct ScenarioPoint {
  double c = 0.5;
  int n = 2;
  TemperatureParam variant = TemperatureParam::temperature_free();
};

inline void validate(const ScenarioPoint& p) {
  if (!(p.c >= 0.0 && p.c <= 1.0)) {
    throw Error(ErrorCode::InvalidScenario, "C must lie in [0, 1]");
  }
  if (p.n < 2) {
    throw Error(ErrorCode::InvalidScenario, "N must be at least 2");
  }
  if (p.variant.kind == TemperatureKind::FixedTau && !(p.variant.tau > 0.0)) {
    throw Error(ErrorCode::InvalidScenario, "tau must be positive");
  }
  if (p.variant.kind == TemperatureKind::LearnableT && !(std::abs(p.variant.t) <= 700.0)) {
    throw Error(ErrorCode::InvalidScenario, "|t| must not exceed 700");
  }
}

// Logit multiplier applied to cosine similarities by the two scaled variants.
inline double logit_scale(const TemperatureParam& v) {
  return v.kind == TemperatureKind::FixedTau ? 1.0 / v.tau : std::exp(v.t);
}

inline double scenario_loss(const ScenarioPoint& p) {
  validate(p);
  const double negatives = p.n - 1.0;
  if (p.variant.kind == TemperatureKind::TemperatureFree) {
    const double ratio = (1.0 - p.c) / (1.0 + p.c);
    return std::log1p(negatives * ratio * ratio);
  }
  return std::log1p(negatives * std::exp(-2.0 * p.c * logit_scale(p.variant)));
}

// |dL/dC| for the fixed-tau and temp-free variants; |dL/dt| for learnable t.
inline double scenario_grad_scale(const ScenarioPoint& p) {
  validate(p);
  const double negatives = p.n - 1.0;
  const double c = p.c;
  switch (p.variant.kind) {
    case TemperatureKind::FixedTau: {
      const double inv_tau = 1.0 / p.variant.tau;
      return negatives * 2.0 * inv_tau / (negatives + std::exp(2.0 * c * inv_tau));
    }
    case TemperatureKind::LearnableT: {
      const double scale = std::exp(p.variant.t);
      return negatives * 2.0 * c * scale / (negatives + std::exp(2.0 * c * scale));
    }
    case TemperatureKind::TemperatureFree: {
      const double one_minus = 1.0 - c;
      return 4.0 * negatives * one_minus /
             ((1.0 + c) * (p.n * one_minus * one_minus + 4.0 * c));
    }
  }
  return 0.0;
}

// Similarity matrix whose every row is a cyclic [C, -C, ..., -C] with C on
// the diagonal, so each row's batch loss equals scenario_loss.
inline SimilarityMatrix scenario_similarity(double c, int n) {
  Matrix s = Matrix::Constant(n, n, -c);
  s.diagonal().setConstant(c);
  return SimilarityMatrix(std::move(s));
}

enum class Quantity { GradScale, Loss };
enum class SweepAxis { C, Tau };

struct GridSpec {
  double lo = 1e-4;
  double hi = 1.0 - 1e-4;
  int points = 512;
};

struct CurveData {
  std::vector<double> grid;
  std::vector<double> values;
  TemperatureParam variant;
  int n = 2;
  Quantity quantity = Quantity::GradScale;
  SweepAxis axis = SweepAxis::C;
  // Fixed C of a temperature sweep (axis == Tau).
  double fixed_c = 0.0;
};

inline std::vector<double> uniform_grid(const GridSpec& spec) {
  if (spec.points < 2 || !(spec.lo < spec.hi)) {
    throw Error(ErrorCode::InvalidGrid, "grid needs at least 2 points and lo < hi");
  }
  std::vector<double> grid(static_cast<std::size_t>(spec.points));
  const double step = (spec.hi - spec.lo) / (spec.points - 1);
  for (int k = 0; k < spec.points; ++k) {
    grid[static_cast<std::size_t>(k)] = spec.lo + step * k;
  }
  grid.back() = spec.hi;
  return grid;
}

inline CurveData sample_curve(const TemperatureParam& variant, int n, const GridSpec& spec = {},
                              Quantity quantity = Quantity::GradScale) {
  if (!(spec.lo > 0.0 && spec.hi < 1.0)) {
    throw Error(ErrorCode::InvalidGrid, "C grid must lie inside (0, 1)");
  }
  CurveData curve{uniform_grid(spec), {}, variant, n, quantity, SweepAxis::C, 0.0};
  curve.values.reserve(curve.grid.size());
  for (double c : curve.grid) {
    const ScenarioPoint p{c, n, variant};
    curve.values.push_back(quantity == Quantity::GradScale ? scenario_grad_scale(p)
                                                           : scenario_loss(p));
  }
  return curve;
}

// Fixed-tau gradient scale at fixed C as a function of tau.
inline CurveData sample_temperature_curve(double c, int n, const GridSpec& tau_spec,
                                          Quantity quantity = Quantity::GradScale) {
  if (!(tau_spec.lo > 0.0)) {
    throw Error(ErrorCode::InvalidGrid, "temperature grid must be positive");
  }
  CurveData curve{uniform_grid(tau_spec), {}, TemperatureParam::fixed(1.0), n, quantity,
                  SweepAxis::Tau, c};
  curve.values.reserve(curve.grid.size());
  for (double tau : curve.grid) {
    const ScenarioPoint p{c, n, TemperatureParam::fixed(tau)};
    curve.values.push_back(quantity == Quantity::GradScale ? scenario_grad_scale(p)
                                                           : scenario_loss(p));
  }
  return curve;
}

struct Interval {
  double lo;
  double hi;
};

// Maximal runs of grid points whose value is below `threshold`, reported as
// [first grid point, last grid point] of each run.
inline std::vector<Interval> find_vanishing_region(const CurveData& curve,
                                                   double threshold = 0.01) {
  std::vector<Interval> out;
  std::size_t k = 0;
  while (k < curve.values.size()) {
    if (curve.values[k] < threshold) {
      const std::size_t start = k;
      while (k + 1 < curve.values.size() && curve.values[k + 1] < threshold) ++k;
      out.push_back({curve.grid[start], curve.grid[k]});
    }
    ++k;
  }
  return out;
}

inline std::string scenario_variant_name(TemperatureKind kind) {
  switch (kind) {
    case TemperatureKind::FixedTau: return "div-temp";
    case TemperatureKind::LearnableT: return "learnable";
    case TemperatureKind::TemperatureFree: return "temp-free";
  }
  return "unknown";
}

inline constexpr const char* kCurveCsvHeader = "variant,tau_or_t,N,C,value";

// Rows `variant,tau_or_t,N,C,value` in grid order. tau_or_t is empty for the
// temperature-free variant.
inline void write_curve_rows(std::ostream& os, const CurveData& curve) {
  const std::string name = scenario_variant_name(curve.variant.kind);
  for (std::size_t k = 0; k < curve.grid.size(); ++k) {
    std::string param;
    double c = curve.grid[k];
    if (curve.axis == SweepAxis::Tau) {
      param = format_double(curve.grid[k]);
      c = curve.fixed_c;
    } else if (curve.variant.kind == TemperatureKind::FixedTau) {
      param = format_double(curve.variant.tau);
    } else if (curve.variant.kind == TemperatureKind::LearnableT) {
      param = format_double(curve.variant.t);
    }
    os << name << ',' << param << ',' << curve.n << ',' << format_double(c) << ','
       << format_double(curve.values[k]) << '\n';
  }
}

inline void write_curves_csv(std::ostream& os, const std::vector<CurveData>& curves) {
  os << kCurveCsvHeader << '\n';
  for (const auto& curve : curves) write_curve_rows(os, curve);
}

}  // namespace tfcl

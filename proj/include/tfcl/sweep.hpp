#pragma once

// Grid of (loss variant, tau, seed) train+eval runs on one dataset, with
// per-group aggregation and CSV output.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "tfcl/config.hpp"
#include "tfcl/data.hpp"
#include "tfcl/losses.hpp"
#include "tfcl/numerics.hpp"
#include "tfcl/trainer.hpp"

namespace tfcl {

inline const std::vector<double>& default_tau_grid() {
  static const std::vector<double> grid{0.07, 0.1, 0.25, 0.3, 0.5, 1.0};
  return grid;
}

struct SweepSpec {
  std::vector<double> taus = default_tau_grid();
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  bool include_temp_free = false;
  bool include_learnable = false;
};

struct SweepRow {
  std::string variant;
  std::optional<double> tau;  // fixed-tau rows only
  std::uint64_t seed = 0;
  double knn_acc = 0.0;
  RunReport report;
};

namespace detail {
inline auto sweep_key(const SweepRow& r) {
  return std::make_tuple(r.variant, r.tau.has_value(), r.tau.value_or(0.0), r.seed);
}
}  // namespace detail

// Every cell uses `base` with the loss and seed replaced. Rows come back
// sorted by (variant, tau, seed).
inline std::vector<SweepRow> run_sweep(const Dataset& data, const ExperimentConfig& base,
                                       const SweepSpec& spec) {
  std::vector<TemperatureParam> params;
  for (double tau : spec.taus) params.push_back(TemperatureParam::fixed(tau));
  if (spec.include_temp_free) params.push_back(TemperatureParam::temperature_free());
  if (spec.include_learnable) params.push_back(TemperatureParam::learnable(base.train.loss.t));

  std::vector<SweepRow> rows;
  for (const TemperatureParam& p : params) {
    for (std::uint64_t seed : spec.seeds) {
      ExperimentConfig cfg = base;
      cfg.train.loss = p;
      cfg.set_seed(seed);
      cfg.validate();
      TrainResult r = run_experiment(data, cfg.encoder, cfg.train, cfg.eval);
      SweepRow row;
      row.variant = to_string(p.kind);
      if (p.kind == TemperatureKind::FixedTau) row.tau = p.tau;
      row.seed = seed;
      row.knn_acc = r.report.final_knn_acc;
      row.report = std::move(r.report);
      rows.push_back(std::move(row));
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return detail::sweep_key(a) < detail::sweep_key(b);
  });
  return rows;
}

struct GroupSummary {
  std::string variant;
  std::optional<double> tau;
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single run
};

// One summary per (variant, tau) group of sorted rows.
inline std::vector<GroupSummary> summarize(const std::vector<SweepRow>& rows) {
  std::vector<GroupSummary> out;
  std::size_t k = 0;
  while (k < rows.size()) {
    std::size_t end = k;
    while (end < rows.size() && rows[end].variant == rows[k].variant &&
           rows[end].tau == rows[k].tau) {
      ++end;
    }
    GroupSummary g{rows[k].variant, rows[k].tau, end - k, 0.0, 0.0};
    for (std::size_t i = k; i < end; ++i) g.mean += rows[i].knn_acc;
    g.mean /= static_cast<double>(g.count);
    if (g.count > 1) {
      double ss = 0.0;
      for (std::size_t i = k; i < end; ++i) ss += (rows[i].knn_acc - g.mean) * (rows[i].knn_acc - g.mean);
      g.stddev = std::sqrt(ss / static_cast<double>(g.count - 1));
    }
    out.push_back(std::move(g));
    k = end;
  }
  return out;
}

inline constexpr const char* kSweepCsvHeader = "variant,tau,seed,knn_acc";

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << kSweepCsvHeader << '\n';
  for (const SweepRow& r : rows) {
    os << r.variant << ',' << (r.tau ? format_double(*r.tau) : "") << ',' << r.seed << ','
       << format_double(r.knn_acc) << '\n';
  }
}

inline void write_summary(std::ostream& os, const std::vector<GroupSummary>& groups) {
  for (const GroupSummary& g : groups) {
    os << g.variant;
    if (g.tau) os << " tau=" << format_double(*g.tau);
    os << " mean=" << format_double(g.mean) << " std=" << format_double(g.stddev)
       << " runs=" << g.count << '\n';
  }
}

}  // namespace tfcl

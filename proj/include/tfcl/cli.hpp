#pragma once

// Command-line front end: curves, gradcheck, train, sweep.
// Exit codes: 0 success, 1 numeric or check failure, 2 usage or config error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tfcl/config.hpp"
#include "tfcl/error.hpp"
#include "tfcl/gradcheck.hpp"
#include "tfcl/scenario.hpp"
#include "tfcl/sweep.hpp"
#include "tfcl/trainer.hpp"

namespace tfcl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace cli {

struct CurvesArgs {
  std::string variant = "div-temp";
  std::vector<double> taus;
  std::vector<double> ts;
  std::vector<int> ns;
  int points = GridSpec{}.points;
  std::string quantity = "grad";
  std::string out;
  int figure = 0;
};

struct GradcheckArgs {
  std::string loss = "temp-free";
  int n = 8;
  int d = 4;
  int trials = 100;
  double tol = 1e-5;
  double h = 1e-6;
  double tau = 0.25;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string config;
  std::optional<std::string> loss;
  std::optional<double> tau;
  std::optional<double> t;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> set;
  std::string report;
  std::string weights;
};

struct SweepArgs {
  std::string config;
  std::vector<double> taus = default_tau_grid();
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  bool include_temp_free = false;
  bool include_learnable = false;
  std::optional<int> epochs;
  std::vector<std::string> set;
  std::string out;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writes to `path`, or to `fallback` when the path is empty.
template <typename Writer>
void emit(const std::string& path, std::ostream& fallback, Writer&& write) {
  if (path.empty()) {
    write(fallback);
    return;
  }
  std::ofstream f(path);
  if (!f) throw UsageError("cannot open " + path + " for writing");
  write(f);
}

inline std::vector<CurveData> curves_for(const CurvesArgs& a) {
  const Quantity q = a.quantity == "loss" ? Quantity::Loss : Quantity::GradScale;
  const GridSpec grid{GridSpec{}.lo, GridSpec{}.hi, a.points};
  std::vector<CurveData> out;
  switch (a.figure) {
    case 2:
      for (double tau : {0.1, 0.25, 0.5, 1.0}) {
        out.push_back(sample_curve(TemperatureParam::fixed(tau), 2, grid, q));
      }
      return out;
    case 3:
      for (double c : {0.25, 0.5, 0.75, 1.0}) {
        out.push_back(sample_temperature_curve(c, 2, GridSpec{0.01, 1.0, a.points}, q));
      }
      return out;
    case 4:
      for (int n : {2, 4, 8, 16}) {
        out.push_back(sample_curve(TemperatureParam::fixed(0.25), n, grid, q));
      }
      return out;
    case 5:
      for (int n : {2, 4, 8, 16}) {
        out.push_back(sample_curve(TemperatureParam::temperature_free(), n, grid, q));
      }
      return out;
    default: break;
  }
  const std::vector<int> ns = a.ns.empty() ? std::vector<int>{2} : a.ns;
  std::vector<TemperatureParam> params;
  if (a.variant == "div-temp") {
    for (double tau : a.taus.empty() ? std::vector<double>{1.0} : a.taus) {
      params.push_back(TemperatureParam::fixed(tau));
    }
  } else if (a.variant == "learnable") {
    for (double t : a.ts.empty() ? std::vector<double>{0.0} : a.ts) {
      params.push_back(TemperatureParam::learnable(t));
    }
  } else {
    params.push_back(TemperatureParam::temperature_free());
  }
  for (const TemperatureParam& p : params) {
    for (int n : ns) out.push_back(sample_curve(p, n, grid, q));
  }
  return out;
}

inline int run_curves(const CurvesArgs& a, std::ostream& out) {
  const std::vector<CurveData> curves = curves_for(a);
  emit(a.out, out, [&](std::ostream& os) { write_curves_csv(os, curves); });
  return kExitOk;
}

inline int run_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  std::vector<std::pair<std::string, GradCheckSpec>> checks;
  GradCheckSpec base;
  base.n = a.n;
  base.d = a.d;
  base.trials = a.trials;
  base.tolerance = a.tol;
  base.h = a.h;
  base.seed = a.seed;
  const std::vector<std::pair<std::string, TemperatureParam>> losses{
      {"ntxent", TemperatureParam::fixed(a.tau)},
      {"learnable", TemperatureParam::learnable(0.0)},
      {"temp-free", TemperatureParam::temperature_free()},
  };
  if (a.loss == "end-to-end") {
    for (const auto& [name, param] : losses) {
      GradCheckSpec s = base;
      s.target = GradCheckTarget::EndToEnd;
      s.loss = param;
      checks.emplace_back("end-to-end/" + name, s);
    }
  } else {
    GradCheckSpec s = base;
    if (a.loss == "ntxent") {
      s.target = GradCheckTarget::NtXent;
      s.loss = losses[0].second;
    } else if (a.loss == "learnable") {
      s.target = GradCheckTarget::Learnable;
      s.loss = losses[1].second;
    } else {
      s.target = GradCheckTarget::TempFree;
      s.loss = losses[2].second;
    }
    checks.emplace_back(a.loss + "/similarity", s);
    s.target = GradCheckTarget::Embedding;
    checks.emplace_back(a.loss + "/embedding", s);
  }
  bool ok = true;
  for (const auto& [label, spec] : checks) {
    const GradCheckReport r = check_loss_gradients(spec);
    out << label << " n=" << spec.n << " d=" << spec.d << " trials=" << spec.trials << ' '
        << describe(r) << '\n';
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitFailure;
}

inline void apply_sets(ExperimentConfig& cfg, const std::vector<std::string>& sets) {
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, std::string_view(kv).substr(0, eq), std::string_view(kv).substr(eq + 1));
  }
}

inline nlohmann::ordered_json weights_json(const EncoderConfig& enc, const MlpWeights& w) {
  nlohmann::ordered_json j;
  j["widths"] = enc.widths;
  j["activation"] = to_string(enc.activation);
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < w.params.layers(); ++l) {
    const Matrix& m = w.params.w[l];
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      rows[static_cast<std::size_t>(r)].assign(m.row(r).data(), m.row(r).data() + m.cols());
    }
    const Matrix& b = w.params.b[l];
    layers.push_back({{"w", rows}, {"b", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  j["layers"] = std::move(layers);
  return j;
}

inline ExperimentConfig base_config(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_config(path);
}

inline int run_train(const TrainArgs& a, std::ostream& out) {
  ExperimentConfig cfg = base_config(a.config);
  apply_sets(cfg, a.set);
  if (a.loss) cfg.train.loss.kind = parse_loss_kind(*a.loss);
  if (a.tau) cfg.train.loss.tau = *a.tau;
  if (a.t) cfg.train.loss.t = *a.t;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.seed) cfg.set_seed(*a.seed);
  cfg.validate();
  const Dataset data = load_dataset(cfg);
  const TrainResult r = run_experiment(data, cfg.encoder, cfg.train, cfg.eval);
  emit(a.report, out, [&](std::ostream& os) { os << report_json(r.report, cfg).dump(2) << '\n'; });
  if (!a.weights.empty()) {
    std::ostringstream sink;
    emit(a.weights, sink,
         [&](std::ostream& os) { os << weights_json(cfg.encoder, r.weights).dump() << '\n'; });
  }
  return kExitOk;
}

inline int run_sweep_cmd(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = base_config(a.config);
  apply_sets(cfg, a.set);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  cfg.validate();
  SweepSpec spec;
  spec.taus = a.taus;
  spec.seeds = a.seeds;
  spec.include_temp_free = a.include_temp_free;
  spec.include_learnable = a.include_learnable;
  for (double tau : spec.taus) TemperatureParam::fixed(tau).validate();
  const Dataset data = load_dataset(cfg);
  const std::vector<SweepRow> rows = run_sweep(data, cfg, spec);
  emit(a.out, out, [&](std::ostream& os) { write_sweep_csv(os, rows); });
  write_summary(err, summarize(rows));
  return kExitOk;
}

// Errors raised before any numeric work are usage/config errors.
inline bool is_config_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::ParseError:
    case ErrorCode::InconsistentWidth:
    case ErrorCode::InvalidParams:
    case ErrorCode::NonPositiveTemperature:
    case ErrorCode::TOverflow:
    case ErrorCode::InvalidScenario:
    case ErrorCode::InvalidGrid:
    case ErrorCode::ClassTooSmall:
    case ErrorCode::EmptySplit:
    case ErrorCode::ShapeMismatch:
      return true;
    default:
      return false;
  }
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive loss laboratory: closed-form curves, gradient checks, training."};
  app.require_subcommand(1);

  cli::CurvesArgs ca;
  auto* curves = app.add_subcommand("curves", "Emit gradient-scale or loss curves as CSV");
  curves->add_option("--variant", ca.variant)
      ->check(CLI::IsMember({"div-temp", "learnable", "temp-free"}));
  curves->add_option("--tau", ca.taus, "Temperature (repeatable)")
      ->check(CLI::PositiveNumber)
      ->allow_extra_args(false);
  curves->add_option("--t", ca.ts, "Learnable log-scale t (repeatable)")
      ->check(CLI::Range(-700.0, 700.0))
      ->allow_extra_args(false);
  curves->add_option("--n", ca.ns, "Pair count N (repeatable)")
      ->check(CLI::Range(2, 1 << 30))
      ->allow_extra_args(false);
  curves->add_option("--points", ca.points, "Grid points")->check(CLI::Range(2, 100000000));
  curves->add_option("--quantity", ca.quantity)->check(CLI::IsMember({"grad", "loss"}));
  curves->add_option("--figure", ca.figure, "Preset parameter set")
      ->check(CLI::IsMember({2, 3, 4, 5}));
  curves->add_option("--out", ca.out, "Output path (default stdout)");

  cli::GradcheckArgs ga;
  auto* grad = app.add_subcommand("gradcheck", "Compare analytical gradients with central differences");
  grad->add_option("--loss", ga.loss)
      ->check(CLI::IsMember({"ntxent", "learnable", "temp-free", "end-to-end"}));
  grad->add_option("--n", ga.n, "Batch size")->check(CLI::Range(1, 4096));
  grad->add_option("--d", ga.d, "Embedding / input width")->check(CLI::Range(1, 4096));
  grad->add_option("--trials", ga.trials)->check(CLI::Range(1, 1 << 30));
  grad->add_option("--tol", ga.tol, "Relative-error tolerance")->check(CLI::PositiveNumber);
  grad->add_option("--step", ga.h, "Finite-difference step")->check(CLI::PositiveNumber);
  grad->add_option("--tau", ga.tau, "Temperature for ntxent")->check(CLI::PositiveNumber);
  grad->add_option("--seed", ga.seed);

  cli::TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train one encoder and report kNN accuracy as JSON");
  train->add_option("--config", ta.config, "key = value config file")->check(CLI::ExistingFile);
  train->add_option("--loss", ta.loss)->check(CLI::IsMember({"ntxent", "learnable", "temp-free"}));
  train->add_option("--tau", ta.tau);
  train->add_option("--t", ta.t);
  train->add_option("--epochs", ta.epochs);
  train->add_option("--seed", ta.seed);
  train->add_option("--set", ta.set, "Config override key=value (repeatable)")
      ->allow_extra_args(false);
  train->add_option("--report", ta.report, "JSON report path (default stdout)");
  train->add_option("--weights", ta.weights, "Write trained weights as JSON");

  cli::SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "Train+eval over a temperature grid and seeds");
  sweep->add_option("--config", sa.config)->check(CLI::ExistingFile);
  sweep->add_option("--taus", sa.taus, "Comma-separated temperatures")->delimiter(',');
  sweep->add_option("--seeds", sa.seeds, "Comma-separated seeds")->delimiter(',');
  sweep->add_flag("--include-temp-free", sa.include_temp_free);
  sweep->add_flag("--include-learnable", sa.include_learnable);
  sweep->add_option("--epochs", sa.epochs);
  sweep->add_option("--set", sa.set, "Config override key=value (repeatable)")
      ->allow_extra_args(false);
  sweep->add_option("--out", sa.out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*curves) return cli::run_curves(ca, out);
    if (*grad) return cli::run_gradcheck(ga, out);
    if (*train) return cli::run_train(ta, out);
    if (*sweep) return cli::run_sweep_cmd(sa, out, err);
  } catch (const cli::UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return cli::is_config_error(e.code()) ? kExitUsage : kExitFailure;
  }
  return kExitUsage;
}

}  // namespace tfcl

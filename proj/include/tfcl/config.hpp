#pragma once

// Experiment configuration as `key = value` lines and the JSON run report.
//
//   # comment
//   data.source = synthetic        (or csv, with data.path)
//   encoder.widths = 32,64,32
//   train.loss = temp-free         (ntxent | learnable | temp-free)
//
// Every key has a default; unknown keys and malformed values are rejected
// with the offending line number.

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "tfcl/data.hpp"
#include "tfcl/error.hpp"
#include "tfcl/losses.hpp"
#include "tfcl/mlp.hpp"
#include "tfcl/numerics.hpp"
#include "tfcl/trainer.hpp"

namespace tfcl {

enum class DataSource { Synthetic, Csv };

struct ExperimentConfig {
  DataSource source = DataSource::Synthetic;
  std::string data_path;
  ClusterSpec clusters{};
  EncoderConfig encoder{};
  TrainConfig train{};
  EvalConfig eval{};

  void validate() const {
    if (source == DataSource::Csv && data_path.empty()) {
      throw Error(ErrorCode::InvalidParams, "data.source = csv needs data.path");
    }
    encoder.validate();
    train.validate();
    if (!(eval.test_fraction > 0.0 && eval.test_fraction < 1.0)) {
      throw Error(ErrorCode::InvalidParams, "eval.test_fraction must lie in (0, 1)");
    }
    if (eval.k < 1) throw Error(ErrorCode::InvalidParams, "eval.k must be >= 1");
  }

  // Applies the per-run seed to training and weight initialization; the
  // dataset and the split stay fixed.
  void set_seed(std::uint64_t seed) {
    train.seed = seed;
    encoder.init_seed = seed;
  }
};

inline TemperatureKind parse_loss_kind(std::string_view name) {
  if (name == "ntxent" || name == "div-temp") return TemperatureKind::FixedTau;
  if (name == "learnable") return TemperatureKind::LearnableT;
  if (name == "temp-free") return TemperatureKind::TemperatureFree;
  throw Error(ErrorCode::InvalidParams, "unknown loss '" + std::string(name) + "'");
}

namespace detail {

inline std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

inline bool parse_u64(std::string_view s, std::uint64_t& out) {
  s = trim(s);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty();
}

inline bool parse_bool(std::string_view s, bool& out) {
  s = trim(s);
  if (s == "true" || s == "1") {
    out = true;
    return true;
  }
  if (s == "false" || s == "0") {
    out = false;
    return true;
  }
  return false;
}

class ConfigSetter {
 public:
  ConfigSetter(ExperimentConfig& cfg, std::size_t line) : cfg_(cfg), line_(line) {}

  void set(std::string_view key, std::string_view value) {
    ExperimentConfig& c = cfg_;
    TrainConfig& t = c.train;
    if (key == "data.source") {
      if (value == "synthetic") {
        c.source = DataSource::Synthetic;
      } else if (value == "csv") {
        c.source = DataSource::Csv;
      } else {
        fail(key);
      }
    } else if (key == "data.path") {
      c.data_path = std::string(value);
    } else if (key == "data.class_count") {
      as_int(key, value, c.clusters.class_count);
    } else if (key == "data.per_class") {
      as_int(key, value, c.clusters.per_class);
    } else if (key == "data.d_in") {
      as_int(key, value, c.clusters.d_in);
    } else if (key == "data.spread") {
      as_double(key, value, c.clusters.spread);
    } else if (key == "data.separation") {
      as_double(key, value, c.clusters.separation);
    } else if (key == "data.seed") {
      as_u64(key, value, c.clusters.seed);
    } else if (key == "encoder.widths") {
      c.encoder.widths.clear();
      for (std::string_view f : split_commas(value)) {
        int w = 0;
        if (!parse_int(f, w)) fail(key);
        c.encoder.widths.push_back(w);
      }
    } else if (key == "encoder.activation") {
      if (value == "relu") {
        c.encoder.activation = Activation::Relu;
      } else if (value == "tanh") {
        c.encoder.activation = Activation::Tanh;
      } else {
        fail(key);
      }
    } else if (key == "encoder.init_seed") {
      as_u64(key, value, c.encoder.init_seed);
    } else if (key == "train.epochs") {
      as_int(key, value, t.epochs);
    } else if (key == "train.batch_size") {
      as_int(key, value, t.batch_size);
    } else if (key == "train.lr0") {
      as_double(key, value, t.lr0);
    } else if (key == "train.momentum") {
      as_double(key, value, t.momentum);
    } else if (key == "train.weight_decay") {
      as_double(key, value, t.weight_decay);
    } else if (key == "train.loss") {
      try {
        t.loss.kind = parse_loss_kind(value);
      } catch (const Error&) {
        fail(key);
      }
    } else if (key == "train.tau") {
      as_double(key, value, t.loss.tau);
    } else if (key == "train.t") {
      as_double(key, value, t.loss.t);
    } else if (key == "train.clamp_eps") {
      as_double(key, value, t.clamp_eps);
    } else if (key == "train.seed") {
      as_u64(key, value, t.seed);
    } else if (key == "train.symmetrize") {
      if (!parse_bool(value, t.symmetrize)) fail(key);
    } else if (key == "train.reduction") {
      if (value == "mean") {
        t.reduction = Reduction::Mean;
      } else if (value == "sum") {
        t.reduction = Reduction::Sum;
      } else {
        fail(key);
      }
    } else if (key == "aug.noise_sigma") {
      as_double(key, value, t.aug.noise_sigma);
    } else if (key == "aug.jitter_lo") {
      as_double(key, value, t.aug.jitter_lo);
    } else if (key == "aug.jitter_hi") {
      as_double(key, value, t.aug.jitter_hi);
    } else if (key == "aug.mask_prob") {
      as_double(key, value, t.aug.mask_prob);
    } else if (key == "eval.test_fraction") {
      as_double(key, value, c.eval.test_fraction);
    } else if (key == "eval.k") {
      as_int(key, value, c.eval.k);
    } else if (key == "eval.split_seed") {
      as_u64(key, value, c.eval.split_seed);
    } else {
      throw Error(ErrorCode::ParseError,
                  "line " + std::to_string(line_) + ": unknown key '" + std::string(key) + "'",
                  line_);
    }
  }

 private:
  [[noreturn]] void fail(std::string_view key) const {
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line_) + ": bad value for '" + std::string(key) + "'",
                line_);
  }
  void as_int(std::string_view key, std::string_view v, int& out) const {
    if (!parse_int(v, out)) fail(key);
  }
  void as_double(std::string_view key, std::string_view v, double& out) const {
    if (!parse_double(v, out)) fail(key);
  }
  void as_u64(std::string_view key, std::string_view v, std::uint64_t& out) const {
    if (!parse_u64(v, out)) fail(key);
  }

  ExperimentConfig& cfg_;
  std::size_t line_;
};

}  // namespace detail

// Applies one `key = value` assignment; `line` is reported in errors.
inline void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value,
                          std::size_t line = Error::kNoIndex) {
  detail::ConfigSetter(cfg, line).set(detail::trim(key), detail::trim(value));
}

// Starts from the defaults and applies each line in order.
inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::ParseError,
                  "line " + std::to_string(line_no) + ": expected key = value", line_no);
    }
    apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1), line_no);
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path, 0);
  return parse_config(in);
}

// Ordered (key, value) pairs covering every setting; parse_config of their
// `key = value` rendering reproduces the config exactly.
inline std::vector<std::pair<std::string, std::string>> config_entries(
    const ExperimentConfig& c) {
  const TrainConfig& t = c.train;
  const auto f = format_double;
  return {
      {"data.source", c.source == DataSource::Csv ? "csv" : "synthetic"},
      {"data.path", c.data_path},
      {"data.class_count", std::to_string(c.clusters.class_count)},
      {"data.per_class", std::to_string(c.clusters.per_class)},
      {"data.d_in", std::to_string(c.clusters.d_in)},
      {"data.spread", f(c.clusters.spread)},
      {"data.separation", f(c.clusters.separation)},
      {"data.seed", std::to_string(c.clusters.seed)},
      {"encoder.widths", detail::join_ints(c.encoder.widths)},
      {"encoder.activation", to_string(c.encoder.activation)},
      {"encoder.init_seed", std::to_string(c.encoder.init_seed)},
      {"train.epochs", std::to_string(t.epochs)},
      {"train.batch_size", std::to_string(t.batch_size)},
      {"train.lr0", f(t.lr0)},
      {"train.momentum", f(t.momentum)},
      {"train.weight_decay", f(t.weight_decay)},
      {"train.loss", to_string(t.loss.kind)},
      {"train.tau", f(t.loss.tau)},
      {"train.t", f(t.loss.t)},
      {"train.clamp_eps", f(t.clamp_eps)},
      {"train.seed", std::to_string(t.seed)},
      {"train.symmetrize", t.symmetrize ? "true" : "false"},
      {"train.reduction", t.reduction == Reduction::Mean ? "mean" : "sum"},
      {"aug.noise_sigma", f(t.aug.noise_sigma)},
      {"aug.jitter_lo", f(t.aug.jitter_lo)},
      {"aug.jitter_hi", f(t.aug.jitter_hi)},
      {"aug.mask_prob", f(t.aug.mask_prob)},
      {"eval.test_fraction", f(c.eval.test_fraction)},
      {"eval.k", std::to_string(c.eval.k)},
      {"eval.split_seed", std::to_string(c.eval.split_seed)},
  };
}

inline void write_config(std::ostream& os, const ExperimentConfig& c) {
  for (const auto& [k, v] : config_entries(c)) os << k << " = " << v << '\n';
}

inline Dataset load_dataset(const ExperimentConfig& c) {
  if (c.source == DataSource::Csv) return load_features_csv(c.data_path);
  return generate_clusters(c.clusters);
}

inline constexpr int kReportSchemaVersion = 1;

inline nlohmann::ordered_json report_json(const RunReport& r, const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["loss"] = to_string(c.train.loss.kind);
  j["final_knn_acc"] = r.final_knn_acc;
  j["loss_trajectory"] = r.loss_trajectory;
  if (r.t_trajectory) {
    j["learnable_t_trajectory"] = *r.t_trajectory;
  } else {
    j["learnable_t_trajectory"] = nullptr;
  }
  nlohmann::ordered_json echo = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config_entries(c)) echo[k] = v;
  j["config_echo"] = std::move(echo);
  j["wall_time_s"] = r.wall_time_s;
  return j;
}

}  // namespace tfcl

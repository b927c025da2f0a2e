#pragma once

// Seeded synthetic cluster data, two-view augmentation and CSV feature
// ingestion. Every random draw goes through an explicit Rng passed in by the
// caller.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tfcl/error.hpp"
#include "tfcl/numerics.hpp"

namespace tfcl {

using Rng = std::mt19937_64;

struct Dataset {
  Matrix features;
  // Used for evaluation only; never reaches a loss.
  std::vector<int> labels;
  int class_count = 0;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

inline void validate(const Dataset& ds) {
  if (ds.class_count < 2 || ds.size() < ds.class_count) {
    throw Error(ErrorCode::InvalidParams, "dataset needs >= 2 classes and >= 1 row per class");
  }
  if (static_cast<Eigen::Index>(ds.labels.size()) != ds.size()) {
    throw Error(ErrorCode::ShapeMismatch, "label count differs from row count");
  }
  for (int y : ds.labels) {
    if (y < 0 || y >= ds.class_count) {
      throw Error(ErrorCode::InvalidParams, "label outside [0, class_count)");
    }
  }
  if (!ds.features.allFinite()) {
    throw Error(ErrorCode::InvalidParams, "dataset has non-finite features");
  }
}

struct ClusterSpec {
  int class_count = 10;
  int per_class = 200;
  int d_in = 32;
  double spread = 1.0;
  double separation = 4.0;
  std::uint64_t seed = 0;
};

// Class centers uniform on the sphere of radius `separation`; points are
// center + N(0, spread^2 I). Rows are grouped by class.
inline Dataset generate_clusters(const ClusterSpec& spec) {
  if (spec.class_count < 1 || spec.per_class < 1 || spec.d_in < 1 || !(spec.spread > 0.0) ||
      !(spec.separation > 0.0)) {
    throw Error(ErrorCode::InvalidParams, "cluster counts must be >= 1, spread and separation > 0");
  }
  Rng rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix centers(spec.class_count, spec.d_in);
  for (int c = 0; c < spec.class_count; ++c) {
    double norm = 0.0;
    do {
      for (int k = 0; k < spec.d_in; ++k) centers(c, k) = gauss(rng);
      norm = centers.row(c).norm();
    } while (norm < 1e-12);
    centers.row(c) *= spec.separation / norm;
  }

  Dataset ds;
  ds.class_count = spec.class_count;
  ds.features.resize(static_cast<Eigen::Index>(spec.class_count) * spec.per_class, spec.d_in);
  ds.labels.reserve(static_cast<std::size_t>(ds.features.rows()));
  Eigen::Index row = 0;
  for (int c = 0; c < spec.class_count; ++c) {
    for (int m = 0; m < spec.per_class; ++m, ++row) {
      for (int k = 0; k < spec.d_in; ++k) {
        ds.features(row, k) = centers(c, k) + spec.spread * gauss(rng);
      }
      ds.labels.push_back(c);
    }
  }
  return ds;
}

struct AugmentationConfig {
  double noise_sigma = 0.0;
  double jitter_lo = 1.0;
  double jitter_hi = 1.0;
  double mask_prob = 0.0;

  void validate() const {
    if (!(noise_sigma >= 0.0)) {
      throw Error(ErrorCode::InvalidParams, "noise_sigma must be >= 0");
    }
    if (!(jitter_lo > 0.0 && jitter_lo <= 1.0 && jitter_hi >= 1.0)) {
      throw Error(ErrorCode::InvalidParams, "scale jitter needs 0 < lo <= 1 <= hi");
    }
    if (!(mask_prob >= 0.0 && mask_prob < 1.0)) {
      throw Error(ErrorCode::InvalidParams, "mask_prob must lie in [0, 1)");
    }
  }
};

struct ViewPair {
  Matrix a;
  Matrix b;
};

namespace detail {

// Noise, then a per-row scale jitter, then coordinate masking.
inline void augment_row(Eigen::Ref<Eigen::RowVectorXd> out, const AugmentationConfig& cfg,
                        Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (cfg.noise_sigma > 0.0) {
    for (Eigen::Index k = 0; k < out.size(); ++k) out(k) += cfg.noise_sigma * gauss(rng);
  }
  if (cfg.jitter_hi > cfg.jitter_lo) {
    out *= cfg.jitter_lo + (cfg.jitter_hi - cfg.jitter_lo) * unit(rng);
  }
  if (cfg.mask_prob > 0.0) {
    for (Eigen::Index k = 0; k < out.size(); ++k) {
      if (unit(rng) < cfg.mask_prob) out(k) = 0.0;
    }
  }
}

}  // namespace detail

// Two independently augmented copies of every input row; row i of both views
// derives from row i of the input.
inline ViewPair make_views(const Matrix& rows, const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  ViewPair views{rows, rows};
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    detail::augment_row(views.a.row(i), cfg, rng);
    detail::augment_row(views.b.row(i), cfg, rng);
  }
  return views;
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty() &&
         std::isfinite(out);
}

inline bool parse_int(std::string_view s, int& out) {
  s = trim(s);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty();
}

}  // namespace detail

// Rows of D_in floats followed by an integer label; an optional single header
// line is skipped when its fields are not all numeric.
inline Dataset read_features_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = detail::trim(line);
    if (text.empty()) continue;
    const auto fields = detail::split_commas(text);
    std::vector<double> values;
    int label = 0;
    bool ok = fields.size() >= 2;
    for (std::size_t k = 0; ok && k + 1 < fields.size(); ++k) {
      double v = 0.0;
      ok = detail::parse_double(fields[k], v);
      values.push_back(v);
    }
    ok = ok && detail::parse_int(fields.back(), label) && label >= 0;
    if (!ok) {
      if (first) {
        first = false;
        continue;
      }
      throw Error(ErrorCode::ParseError, "malformed row at line " + std::to_string(line_no),
                  line_no);
    }
    first = false;
    if (width == 0) {
      width = values.size();
    } else if (values.size() != width) {
      throw Error(ErrorCode::InconsistentWidth,
                  "line " + std::to_string(line_no) + " has " + std::to_string(values.size()) +
                      " features, expected " + std::to_string(width),
                  line_no);
    }
    rows.push_back(std::move(values));
    labels.push_back(label);
  }
  if (rows.empty()) {
    throw Error(ErrorCode::ParseError, "no data rows", line_no == 0 ? 1 : line_no);
  }
  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  int max_label = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < width; ++k) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
    max_label = std::max(max_label, labels[i]);
  }
  ds.labels = std::move(labels);
  ds.class_count = max_label + 1;
  return ds;
}

inline Dataset load_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::ParseError, "cannot open " + path, 0);
  }
  return read_features_csv(in);
}

inline void write_features_csv(std::ostream& os, const Dataset& ds) {
  char buf[64];
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index k = 0; k < ds.dim(); ++k) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), ds.features(i, k));
      os.write(buf, res.ptr - buf);
      os << ',';
    }
    os << ds.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

}  // namespace tfcl

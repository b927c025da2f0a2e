#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "tfcl/data.hpp"
#include "tfcl/error.hpp"
#include "tfcl/numerics.hpp"

namespace tfcl {

struct Split {
  Dataset train;
  Dataset test;
};

namespace detail {

inline Dataset take_rows(const Dataset& ds, const std::vector<Eigen::Index>& idx) {
  Dataset out;
  out.class_count = ds.class_count;
  out.features.resize(static_cast<Eigen::Index>(idx.size()), ds.dim());
  out.labels.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = ds.features.row(idx[r]);
    out.labels.push_back(ds.labels[static_cast<std::size_t>(idx[r])]);
  }
  return out;
}

}  // namespace detail

// Stratified split: each class sends round(count * test_fraction) rows to the
// test side, clamped so both sides keep at least one. Rows keep their
// original relative order.
inline Split split_dataset(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidParams, "test_fraction must lie in (0, 1)");
  }
  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(ds.class_count));
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
  }
  Rng rng(seed);
  std::vector<Eigen::Index> train_idx;
  std::vector<Eigen::Index> test_idx;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.size() < 2) {
      throw Error(ErrorCode::ClassTooSmall,
                  "class " + std::to_string(c) + " has fewer than 2 samples", c);
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto count = static_cast<long>(members.size());
    long n_test = std::lround(static_cast<double>(count) * test_fraction);
    n_test = std::clamp(n_test, 1L, count - 1);
    test_idx.insert(test_idx.end(), members.begin(), members.begin() + n_test);
    train_idx.insert(train_idx.end(), members.begin() + n_test, members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {detail::take_rows(ds, train_idx), detail::take_rows(ds, test_idx)};
}

// Label predicted for one query from its k nearest training rows under the
// cosine distance 1 - <q, x>. Neighbours are ranked by (distance, label), so
// the result does not depend on the order of the training rows. Votes tie-
// break on the smaller summed distance, then the smaller class index.
inline int knn_predict(const Matrix& train_emb, std::span<const int> train_labels,
                       const Eigen::Ref<const Eigen::RowVectorXd>& query, int k,
                       int class_count) {
  const Eigen::Index m = train_emb.rows();
  std::vector<std::pair<double, int>> cand(static_cast<std::size_t>(m));
  const Vector dots = train_emb * query.transpose();
  for (Eigen::Index r = 0; r < m; ++r) {
    cand[static_cast<std::size_t>(r)] = {1.0 - dots(r), train_labels[static_cast<std::size_t>(r)]};
  }
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end());

  std::vector<int> votes(static_cast<std::size_t>(class_count), 0);
  std::vector<double> dist_sum(static_cast<std::size_t>(class_count), 0.0);
  for (int r = 0; r < k; ++r) {
    const auto& [dist, label] = cand[static_cast<std::size_t>(r)];
    ++votes[static_cast<std::size_t>(label)];
    dist_sum[static_cast<std::size_t>(label)] += dist;
  }
  int best = -1;
  for (int c = 0; c < class_count; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (votes[ci] == 0) continue;
    if (best < 0) {
      best = c;
      continue;
    }
    const auto bi = static_cast<std::size_t>(best);
    if (votes[ci] > votes[bi] || (votes[ci] == votes[bi] && dist_sum[ci] < dist_sum[bi])) {
      best = c;
    }
  }
  return best;
}

// Fraction of test rows whose kNN majority label matches. Embeddings are
// expected to be l2-normalized already.
inline double knn_top1(const Matrix& train_emb, std::span<const int> train_labels,
                       const Matrix& test_emb, std::span<const int> test_labels, int k) {
  if (train_emb.rows() == 0 || test_emb.rows() == 0) {
    throw Error(ErrorCode::EmptySplit, "kNN needs non-empty train and test sets");
  }
  if (train_emb.cols() != test_emb.cols() ||
      static_cast<Eigen::Index>(train_labels.size()) != train_emb.rows() ||
      static_cast<Eigen::Index>(test_labels.size()) != test_emb.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "kNN embeddings and labels disagree in shape");
  }
  if (k < 1 || k > train_emb.rows()) {
    throw Error(ErrorCode::InvalidParams, "k must lie in [1, train size]");
  }
  int class_count = 0;
  for (int y : train_labels) class_count = std::max(class_count, y + 1);
  for (int y : test_labels) class_count = std::max(class_count, y + 1);

  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < test_emb.rows(); ++i) {
    const int pred = knn_predict(train_emb, train_labels, test_emb.row(i), k, class_count);
    if (pred == test_labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_emb.rows());
}

}  // namespace tfcl

#pragma once

// CART regression trees and the two ensembles built on them.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "tdf/error.hpp"
#include "tdf/linalg.hpp"
#include "tdf/parallel.hpp"
#include "tdf/random.hpp"

namespace tdf {

struct TreeConfig {
  int max_depth = -1;    // -1: unlimited
  int min_leaf = 1;
  int max_features = 0;  // 0: all columns
};

class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;
  };

  /// Fits on the rows listed in `rows` (duplicates allowed, e.g. a bootstrap
  /// sample). `importance` accumulates the SSE decrease of every split.
  void fit(const Matrix& X, std::span<const double> y, std::vector<int> rows, const TreeConfig& cfg, Rng& rng,
           std::vector<double>* importance = nullptr) {
    nodes_.clear();
    if (rows.empty()) throw ValidationError("tree: no training rows");
    X_ = &X;
    y_ = y;
    cfg_ = cfg;
    rng_ = &rng;
    importance_ = importance;
    build(rows, 0);
    X_ = nullptr;
  }

  double predict(const double* row, Eigen::Index stride) const {
    int i = 0;
    while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes_[static_cast<std::size_t>(i)];
      i = row[n.feature * stride] <= n.threshold ? n.left : n.right;
    }
    return nodes_[static_cast<std::size_t>(i)].value;
  }

  double predict(const Matrix& X, Eigen::Index r) const { return predict(&X(r, 0), X.rows()); }

  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& nodes() { return nodes_; }

 private:
  int build(std::vector<int>& rows, int depth) {
    const auto idx = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    double sum = 0.0, sq = 0.0;
    for (int r : rows) {
      sum += y_[static_cast<std::size_t>(r)];
      sq += y_[static_cast<std::size_t>(r)] * y_[static_cast<std::size_t>(r)];
    }
    const auto n = static_cast<double>(rows.size());
    nodes_[static_cast<std::size_t>(idx)].value = sum / n;
    const double sse = std::max(0.0, sq - sum * sum / n);
    const int min_leaf = std::max(1, cfg_.min_leaf);
    if ((cfg_.max_depth >= 0 && depth >= cfg_.max_depth) || static_cast<int>(rows.size()) < 2 * min_leaf ||
        sse <= 1e-12 * std::max(1.0, sq))
      return idx;

    const auto p = static_cast<int>(X_->cols());
    std::vector<int> feats(static_cast<std::size_t>(p));
    std::iota(feats.begin(), feats.end(), 0);
    const int k = cfg_.max_features > 0 ? std::min(cfg_.max_features, p) : p;
    if (k < p) {
      for (int i = 0; i < k; ++i) {
        const auto j = i + static_cast<int>(rng_->below(static_cast<std::uint64_t>(p - i)));
        std::swap(feats[static_cast<std::size_t>(i)], feats[static_cast<std::size_t>(j)]);
      }
      feats.resize(static_cast<std::size_t>(k));
    }

    double best_gain = 0.0, best_thr = 0.0;
    int best_feat = -1;
    std::vector<int> sorted = rows;
    for (int f : feats) {
      auto xv = [&](int r) { return (*X_)(r, f); };
      std::sort(sorted.begin(), sorted.end(), [&](int a, int b) { return xv(a) < xv(b) || (xv(a) == xv(b) && a < b); });
      double ls = 0.0, lq = 0.0;
      const std::size_t m = sorted.size();
      for (std::size_t i = 0; i + 1 < m; ++i) {
        const double v = y_[static_cast<std::size_t>(sorted[i])];
        ls += v;
        lq += v * v;
        const auto nl = static_cast<int>(i + 1), nr = static_cast<int>(m - i - 1);
        if (nl < min_leaf || nr < min_leaf) continue;
        const double x0 = xv(sorted[i]), x1 = xv(sorted[i + 1]);
        if (!(x0 < x1)) continue;
        const double rs = sum - ls, rq = sq - lq;
        const double child = (lq - ls * ls / nl) + (rq - rs * rs / nr);
        const double gain = sse - child;
        if (gain > best_gain + 1e-12 * std::max(1.0, sse)) {
          best_gain = gain;
          best_feat = f;
          best_thr = 0.5 * (x0 + x1);
          if (!(best_thr < x1)) best_thr = x0;  // guard against rounding onto the right value
        }
      }
    }
    if (best_feat < 0) return idx;

    std::vector<int> left, right;
    for (int r : rows) ((*X_)(r, best_feat) <= best_thr ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    if (importance_) (*importance_)[static_cast<std::size_t>(best_feat)] += best_gain;
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    auto& node = nodes_[static_cast<std::size_t>(idx)];
    node.feature = best_feat;
    node.threshold = best_thr;
    node.left = l;
    node.right = r;
    return idx;
  }

  std::vector<Node> nodes_;
  const Matrix* X_ = nullptr;
  std::span<const double> y_;
  TreeConfig cfg_;
  Rng* rng_ = nullptr;
  std::vector<double>* importance_ = nullptr;
};

namespace detail {

// Row order sorted lexicographically by (x row, y); training on rows in this
// order makes ensembles independent of how the caller ordered the data.
inline std::vector<int> canonical_rows(const Matrix& X, std::span<const double> y) {
  std::vector<int> rows(static_cast<std::size_t>(X.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  std::stable_sort(rows.begin(), rows.end(), [&](int a, int b) {
    for (Eigen::Index c = 0; c < X.cols(); ++c)
      if (X(a, c) != X(b, c)) return X(a, c) < X(b, c);
    return y[static_cast<std::size_t>(a)] < y[static_cast<std::size_t>(b)];
  });
  return rows;
}

}  // namespace detail

struct ForestConfig {
  int n_trees = 100;
  int max_depth = -1;
  int min_leaf = 2;
  int max_features = 0;  // 0: ceil(p / 3)
  bool bootstrap = true;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct RandomForest {
  std::vector<RegressionTree> trees;
  std::vector<double> importances;  // normalized SSE decrease per column
  Eigen::Index n_features = 0;

  double predict_row(const Matrix& X, Eigen::Index r) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(X, r);
    return s / static_cast<double>(trees.size());
  }
};

inline RandomForest fit_forest(const Matrix& Xin, std::span<const double> yin, const ForestConfig& cfg) {
  if (Xin.rows() != static_cast<Eigen::Index>(yin.size())) throw ValidationError("forest: X and y row mismatch");
  if (cfg.n_trees < 1) throw ValidationError("forest: n_trees must be >= 1");
  const int min_leaf = std::max(1, cfg.min_leaf);
  if (Xin.rows() < 2 * min_leaf) throw ValidationError("forest: fewer rows than the minimum split size");
  const auto order = detail::canonical_rows(Xin, yin);
  Matrix X(Xin.rows(), Xin.cols());
  std::vector<double> y(yin.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = Xin.row(order[i]);
    y[i] = yin[static_cast<std::size_t>(order[i])];
  }
  const auto p = static_cast<int>(X.cols());
  TreeConfig tc;
  tc.max_depth = cfg.max_depth;
  tc.min_leaf = min_leaf;
  tc.max_features = cfg.max_features > 0 ? cfg.max_features : std::max(1, (p + 2) / 3);

  RandomForest rf;
  rf.n_features = X.cols();
  rf.trees.resize(static_cast<std::size_t>(cfg.n_trees));
  std::vector<std::vector<double>> imp(static_cast<std::size_t>(cfg.n_trees), std::vector<double>(static_cast<std::size_t>(p), 0.0));
  const Rng master(cfg.seed, 0x7265e5);
  parallel_for(rf.trees.size(), cfg.threads, [&](std::size_t t) {
    Rng rng = master.split(t);
    std::vector<int> rows(static_cast<std::size_t>(X.rows()));
    if (cfg.bootstrap) {
      for (auto& r : rows) r = static_cast<int>(rng.below(static_cast<std::uint64_t>(X.rows())));
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    rf.trees[t].fit(X, y, std::move(rows), tc, rng, &imp[t]);
  });
  rf.importances.assign(static_cast<std::size_t>(p), 0.0);
  for (const auto& v : imp)
    for (int j = 0; j < p; ++j) rf.importances[static_cast<std::size_t>(j)] += v[static_cast<std::size_t>(j)] / cfg.n_trees;
  const double total = std::accumulate(rf.importances.begin(), rf.importances.end(), 0.0);
  if (total > 0.0)
    for (auto& v : rf.importances) v /= total;
  return rf;
}

struct BoostingConfig {
  int n_rounds = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_leaf = 1;
};

struct GradientBoosting {
  double base = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;

  double predict_row(const Matrix& X, Eigen::Index r) const {
    double s = base;
    for (const auto& t : trees) s += learning_rate * t.predict(X, r);
    return s;
  }
};

/// Least-squares gradient boosting: each round fits a depth-limited tree to
/// the current residuals.
inline GradientBoosting fit_boosting(const Matrix& Xin, std::span<const double> yin, const BoostingConfig& cfg) {
  if (Xin.rows() != static_cast<Eigen::Index>(yin.size())) throw ValidationError("boosting: X and y row mismatch");
  if (cfg.n_rounds < 0) throw ValidationError("boosting: n_rounds must be >= 0");
  const auto order = detail::canonical_rows(Xin, yin);
  Matrix X(Xin.rows(), Xin.cols());
  std::vector<double> y(yin.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = Xin.row(order[i]);
    y[i] = yin[static_cast<std::size_t>(order[i])];
  }
  GradientBoosting gb;
  gb.learning_rate = cfg.learning_rate;
  gb.base = mean(y);
  std::vector<double> F(y.size(), gb.base), resid(y.size());
  std::vector<int> all(y.size());
  std::iota(all.begin(), all.end(), 0);
  TreeConfig tc;
  tc.max_depth = cfg.max_depth;
  tc.min_leaf = cfg.min_leaf;
  Rng unused(0);
  for (int round = 0; round < cfg.n_rounds; ++round) {
    for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - F[i];
    RegressionTree t;
    t.fit(X, resid, all, tc, unused);
    for (std::size_t i = 0; i < y.size(); ++i) F[i] += cfg.learning_rate * t.predict(X, static_cast<Eigen::Index>(i));
    gb.trees.push_back(std::move(t));
  }
  return gb;
}

}  // namespace tdf

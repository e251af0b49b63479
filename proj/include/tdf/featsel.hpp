#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "tdf/data.hpp"
#include "tdf/error.hpp"
#include "tdf/linalg.hpp"
#include "tdf/tree.hpp"

namespace tdf {

enum class Technique { Variance, ZeroPct, Impurity, Spearman };

inline std::string to_string(Technique t) {
  switch (t) {
    case Technique::Variance: return "variance";
    case Technique::ZeroPct: return "zero_pct";
    case Technique::Impurity: return "impurity";
    case Technique::Spearman: return "spearman";
  }
  return "?";
}

struct FeatureRanking {
  Technique technique = Technique::Variance;
  std::map<std::string, double> scores;
  std::vector<std::string> ranked;  // descending score, ties by name
  std::set<std::string> flagged;    // removed by the technique's own threshold
};

enum class SelectionMode { StrictIntersection, MajorityFallback };

inline std::string to_string(SelectionMode m) {
  return m == SelectionMode::StrictIntersection ? "strict_intersection" : "majority_fallback";
}

struct SelectionResult {
  std::vector<std::string> kept;  // sorted by name
  std::array<FeatureRanking, 4> per_technique;
  std::array<double, 4> cutoffs{};  // upper-quartile score cutoff per technique
  std::array<std::set<std::string>, 4> top_quartile;
  SelectionMode mode = SelectionMode::StrictIntersection;
};

struct FeatselConfig {
  double variance_threshold = 0.01;
  double max_zero_fraction = 0.95;
  ForestConfig forest{100, 10, 2, 0, true, 1, 1};
};

namespace detail {

inline FeatureRanking make_ranking(Technique t, const std::vector<std::string>& names, const std::vector<double>& s) {
  FeatureRanking r;
  r.technique = t;
  for (std::size_t j = 0; j < names.size(); ++j) r.scores[names[j]] = s[j];
  r.ranked = names;
  std::sort(r.ranked.begin(), r.ranked.end(), [&](const std::string& a, const std::string& b) {
    const double sa = r.scores.at(a), sb = r.scores.at(b);
    return sa != sb ? sa > sb : a < b;
  });
  return r;
}

inline void check_names(const Matrix& X, const std::vector<std::string>& names) {
  if (static_cast<Eigen::Index>(names.size()) != X.cols()) throw ValidationError("featsel: names do not match columns");
  if (X.cols() == 0) throw ValidationError("featsel: no exogenous columns");
  if (!X.allFinite()) throw ValidationError("featsel: non-finite values (interpolate first)");
}

// Average ranks (1-based) with ties sharing the mean rank.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace detail

/// Sample variance of each column after min-max scaling to [0, 1].
inline FeatureRanking variance_filter(const Matrix& X, const std::vector<std::string>& names, double threshold) {
  if (threshold < 0.0) throw ValidationError("variance threshold must be >= 0");
  detail::check_names(X, names);
  std::vector<double> s(names.size(), 0.0);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double lo = X.col(j).minCoeff(), hi = X.col(j).maxCoeff();
    if (!(hi > lo) || X.rows() < 2) continue;
    std::vector<double> scaled(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) scaled[static_cast<std::size_t>(i)] = (X(i, j) - lo) / (hi - lo);
    s[static_cast<std::size_t>(j)] = variance(scaled, 1);
  }
  auto r = detail::make_ranking(Technique::Variance, names, s);
  for (std::size_t j = 0; j < names.size(); ++j)
    if (s[j] < threshold) r.flagged.insert(names[j]);
  return r;
}

/// Score 1 - zero fraction; flags columns whose zero fraction exceeds the cutoff.
inline FeatureRanking zero_percentage_filter(const Matrix& X, const std::vector<std::string>& names,
                                             double max_zero_fraction) {
  if (max_zero_fraction < 0.0 || max_zero_fraction > 1.0) throw ValidationError("max_zero_fraction must be in [0,1]");
  detail::check_names(X, names);
  if (X.rows() == 0) throw ValidationError("zero_percentage_filter: empty panel");
  std::vector<double> s(names.size());
  std::vector<double> zero_frac(names.size());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const auto zeros = (X.col(j).array() == 0.0).count();
    zero_frac[static_cast<std::size_t>(j)] = static_cast<double>(zeros) / static_cast<double>(X.rows());
    s[static_cast<std::size_t>(j)] = 1.0 - zero_frac[static_cast<std::size_t>(j)];
  }
  auto r = detail::make_ranking(Technique::ZeroPct, names, s);
  for (std::size_t j = 0; j < names.size(); ++j)
    if (zero_frac[j] > max_zero_fraction) r.flagged.insert(names[j]);
  return r;
}

/// Random-forest SSE-decrease importances, normalized to sum to 1.
inline FeatureRanking impurity_importance(const Matrix& X, std::span<const double> y,
                                          const std::vector<std::string>& names, const ForestConfig& cfg) {
  detail::check_names(X, names);
  if (X.rows() < 10) throw ValidationError("impurity_importance: at least 10 rows required");
  const auto rf = fit_forest(X, y, cfg);
  return detail::make_ranking(Technique::Impurity, names, rf.importances);
}

/// Pearson correlation of average ranks; 0 when either side is constant.
inline double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("spearman: length mismatch");
  if (x.size() < 3) throw ValidationError("spearman: at least 3 observations required");
  const auto rx = detail::average_ranks(x), ry = detail::average_ranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline FeatureRanking spearman_scores(const Matrix& X, std::span<const double> y,
                                      const std::vector<std::string>& names) {
  detail::check_names(X, names);
  std::vector<double> s(names.size());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    std::vector<double> col(X.col(j).data(), X.col(j).data() + X.rows());
    s[static_cast<std::size_t>(j)] = std::abs(spearman_rho(col, y));
  }
  return detail::make_ranking(Technique::Spearman, names, s);
}

/// Consensus of the four rankings: columns in every technique's upper
/// quartile (score >= Q3 among columns no filter flagged); falls back to
/// columns in at least three of the four when the intersection is empty.
inline SelectionResult iqr_consensus(const std::array<FeatureRanking, 4>& rankings) {
  SelectionResult res;
  res.per_technique = rankings;
  std::set<std::string> all;
  for (const auto& [k, v] : rankings[0].scores) all.insert(k);
  for (const auto& r : rankings) {
    std::set<std::string> keys;
    for (const auto& [k, v] : r.scores) keys.insert(k);
    if (keys != all) throw ValidationError("iqr_consensus: rankings cover different column sets");
  }
  std::set<std::string> flagged;
  for (const auto& r : rankings) flagged.insert(r.flagged.begin(), r.flagged.end());
  std::vector<std::string> eligible;
  for (const auto& c : all)
    if (!flagged.count(c)) eligible.push_back(c);
  if (eligible.empty())
    throw EmptyResultError("feature selection: every column was removed by the variance/zero filters; relax the thresholds");

  std::map<std::string, int> votes;
  for (std::size_t t = 0; t < rankings.size(); ++t) {
    std::vector<double> s;
    for (const auto& c : eligible) s.push_back(rankings[t].scores.at(c));
    const double q3 = quantile(s, 0.75);
    res.cutoffs[t] = q3;
    for (const auto& c : eligible)
      if (rankings[t].scores.at(c) >= q3) {
        res.top_quartile[t].insert(c);
        ++votes[c];
      }
  }
  for (const auto& [c, v] : votes)
    if (v == 4) res.kept.push_back(c);
  if (res.kept.empty()) {
    res.mode = SelectionMode::MajorityFallback;
    for (const auto& [c, v] : votes)
      if (v >= 3) res.kept.push_back(c);
  }
  if (res.kept.empty())
    throw EmptyResultError("feature selection: no column is in the upper quartile of three or more rankings; "
                           "relax the variance/zero thresholds");
  return res;
}

/// Runs the four techniques on one or more panels and forms the consensus.
/// Scores are computed per panel on the common columns and averaged.
inline SelectionResult select_features(const std::vector<ProjectPanel>& panels, const FeatselConfig& cfg) {
  if (panels.empty()) throw ValidationError("select_features: no panels");
  std::vector<std::string> common = panels.front().column_names;
  for (const auto& p : panels) {
    std::vector<std::string> next;
    for (const auto& c : common)
      if (p.column_index(c)) next.push_back(c);
    common = std::move(next);
  }
  if (common.empty()) throw EmptyResultError("select_features: panels share no exogenous columns");

  std::array<std::vector<double>, 4> sums;
  for (auto& s : sums) s.assign(common.size(), 0.0);
  std::array<std::set<std::string>, 4> flags;
  for (const auto& panel : panels) {
    const auto sub = panel.select_columns(common);
    std::array<FeatureRanking, 4> r{variance_filter(sub.exog, common, cfg.variance_threshold),
                                    zero_percentage_filter(sub.exog, common, cfg.max_zero_fraction),
                                    impurity_importance(sub.exog, sub.y, common, cfg.forest),
                                    spearman_scores(sub.exog, sub.y, common)};
    for (std::size_t t = 0; t < 4; ++t) {
      for (std::size_t j = 0; j < common.size(); ++j) sums[t][j] += r[t].scores.at(common[j]);
      if (panels.size() == 1) flags[t] = r[t].flagged;
    }
  }
  const auto np = static_cast<double>(panels.size());
  std::array<FeatureRanking, 4> merged;
  const std::array<Technique, 4> techs{Technique::Variance, Technique::ZeroPct, Technique::Impurity,
                                       Technique::Spearman};
  for (std::size_t t = 0; t < 4; ++t) {
    for (auto& v : sums[t]) v /= np;
    merged[t] = detail::make_ranking(techs[t], common, sums[t]);
  }
  if (panels.size() == 1) {
    for (std::size_t t = 0; t < 4; ++t) merged[t].flagged = flags[t];
  } else {
    // Filters apply to the averaged scores.
    for (std::size_t j = 0; j < common.size(); ++j) {
      if (sums[0][j] < cfg.variance_threshold) merged[0].flagged.insert(common[j]);
      if (1.0 - sums[1][j] > cfg.max_zero_fraction) merged[1].flagged.insert(common[j]);
    }
  }
  return iqr_consensus(merged);
}

inline nlohmann::json to_json(const SelectionResult& r) {
  nlohmann::json j;
  j["kept"] = r.kept;
  j["mode"] = to_string(r.mode);
  nlohmann::json techs = nlohmann::json::object();
  for (std::size_t t = 0; t < 4; ++t) {
    const auto& fr = r.per_technique[t];
    nlohmann::json tj;
    tj["scores"] = fr.scores;
    tj["ranked"] = fr.ranked;
    tj["flagged"] = std::vector<std::string>(fr.flagged.begin(), fr.flagged.end());
    tj["quartile_cutoff"] = r.cutoffs[t];
    tj["top_quartile"] = std::vector<std::string>(r.top_quartile[t].begin(), r.top_quartile[t].end());
    techs[to_string(fr.technique)] = tj;
  }
  j["techniques"] = techs;
  return j;
}

}  // namespace tdf

#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"
#include "tdf/featsel.hpp"

using namespace tdf;

namespace {

Matrix column(const std::vector<double>& v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

FeatureRanking ranking(Technique t, const std::map<std::string, double>& scores) {
  std::vector<std::string> names;
  std::vector<double> s;
  for (const auto& [k, v] : scores) {
    names.push_back(k);
    s.push_back(v);
  }
  return detail::make_ranking(t, names, s);
}

ForestConfig small_forest() {
  ForestConfig f;
  f.n_trees = 50;
  f.max_depth = 10;
  f.min_leaf = 2;
  f.seed = 3;
  return f;
}

}  // namespace

TEST(VarianceFilter, Examples) {
  const std::size_t n = 20;
  Matrix X(static_cast<Eigen::Index>(n), 4);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    X(r, 0) = 7.0;                               // constant
    X(r, 1) = static_cast<double>(i % 2);        // [0, 1] repeated
    X(r, 2) = i % 4 == 0 ? 5.0 : 1.0;            // two-valued, one in four high
    X(r, 3) = i < 2 ? 10.0 : 0.0;                // two-valued, rarely high
  }
  const std::vector<std::string> names{"const", "alt", "quarter", "rare"};
  const auto r = variance_filter(X, names, 0.01);
  EXPECT_EQ(r.scores.at("const"), 0.0);
  EXPECT_TRUE(r.flagged.count("const"));
  EXPECT_GT(r.scores.at("alt"), r.scores.at("quarter"));
  EXPECT_GT(r.scores.at("quarter"), r.scores.at("rare"));
  EXPECT_NEAR(r.scores.at("alt"), 0.25 * n / (n - 1.0), 1e-12);
  EXPECT_EQ(r.ranked.front(), "alt");
  EXPECT_TRUE(variance_filter(X, names, 0.0).flagged.empty());
  EXPECT_THROW(variance_filter(X, names, -0.1), ValidationError);
}

TEST(VarianceFilter, ScaleAndShiftInvariant) {
  Rng rng(2);
  Matrix X(30, 1);
  for (Eigen::Index i = 0; i < 30; ++i) X(i, 0) = rng.normal();
  const double a = variance_filter(X, {"x"}, 0.0).scores.at("x");
  const Matrix Y = (X.array() * 37.0 + 1000.0).matrix();
  EXPECT_NEAR(variance_filter(Y, {"x"}, 0.0).scores.at("x"), a, 1e-12);
}

TEST(ZeroPercentageFilter, Examples) {
  Matrix X = Matrix::Ones(100, 3);
  for (Eigen::Index i = 0; i < 96; ++i) X(i, 0) = 0.0;
  X.col(2).setZero();
  const auto r = zero_percentage_filter(X, {"mostly_zero", "full", "empty"}, 0.95);
  EXPECT_TRUE(r.flagged.count("mostly_zero"));
  EXPECT_NEAR(r.scores.at("mostly_zero"), 0.04, 1e-12);
  EXPECT_EQ(r.scores.at("full"), 1.0);
  EXPECT_FALSE(r.flagged.count("full"));
  EXPECT_EQ(r.scores.at("empty"), 0.0);
  EXPECT_TRUE(r.flagged.count("empty"));
  EXPECT_TRUE(zero_percentage_filter(X, {"a", "b", "c"}, 0.999).flagged.count("c"));
  EXPECT_FALSE(zero_percentage_filter(X, {"a", "b", "c"}, 1.0).flagged.count("c"));
  EXPECT_THROW(zero_percentage_filter(X, {"a", "b", "c"}, 1.5), ValidationError);
}

TEST(Spearman, Examples) {
  EXPECT_DOUBLE_EQ(spearman_rho(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}), 1.0);
  EXPECT_DOUBLE_EQ(spearman_rho(std::vector<double>{1, 2, 3}, std::vector<double>{6, 4, 2}), -1.0);
  const auto r = spearman_scores(column({1, 2, 3}), std::vector<double>{6, 4, 2}, {"x"});
  EXPECT_DOUBLE_EQ(r.scores.at("x"), 1.0);
  EXPECT_EQ(spearman_rho(std::vector<double>{5, 5, 5, 5}, std::vector<double>{1, 2, 3, 4}), 0.0);
  EXPECT_THROW(spearman_rho(std::vector<double>{1, 2}, std::vector<double>{1, 2}), ValidationError);
  EXPECT_THROW(spearman_rho(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), ValidationError);
}

TEST(Spearman, TiedDataMatchesRankOracle) {
  Rng rng(4);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t n = 3 + rng.below(40);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.below(5));  // heavy ties
      y[i] = static_cast<double>(rng.below(7));
    }
    const double o = oracle::spearman(x, y);
    EXPECT_NEAR(spearman_rho(x, y), o, 1e-12);
  }
}

TEST(Spearman, InvariantUnderMonotoneMaps) {
  Rng rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 5 + rng.below(50);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.normal();
      y[i] = x[i] + rng.normal(0.0, 2.0);
    }
    const double a = std::abs(spearman_rho(x, y));
    const double slope = 0.1 + rng.uniform();
    std::vector<double> fx(n), gy(n);
    for (std::size_t i = 0; i < n; ++i) {
      fx[i] = std::exp(slope * x[i]) + 3.0;  // increasing
      gy[i] = -std::pow(y[i], 3) - y[i];     // decreasing
    }
    EXPECT_NEAR(std::abs(spearman_rho(fx, gy)), a, 1e-12);
  }
}

TEST(ImpurityImportance, InformativeBeatsNoise) {
  int wins = 0;
  for (int s = 0; s < 100; ++s) {
    Rng rng(600 + s);
    Matrix X(80, 2);
    std::vector<double> y;
    for (Eigen::Index i = 0; i < 80; ++i) {
      X(i, 0) = rng.normal();
      X(i, 1) = rng.normal();
      y.push_back(10.0 * X(i, 0) + rng.normal());
    }
    auto f = small_forest();
    f.seed = static_cast<std::uint64_t>(s);
    const auto r = impurity_importance(X, y, {"x1", "x2"}, f);
    wins += r.scores.at("x1") > r.scores.at("x2") ? 1 : 0;
  }
  EXPECT_GE(wins, 95);
}

TEST(ImpurityImportance, NormalisationAndDegenerateColumns) {
  Rng rng(7);
  Matrix X(50, 4);
  std::vector<double> y;
  for (Eigen::Index i = 0; i < 50; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = 3.0;
    X(i, 2) = rng.normal();
    X(i, 3) = rng.uniform();
    y.push_back(X(i, 0) - X(i, 2) + rng.normal(0.0, 0.3));
  }
  const auto r = impurity_importance(X, y, {"a", "const", "c", "d"}, small_forest());
  double sum = 0.0;
  for (const auto& [k, v] : r.scores) {
    EXPECT_GE(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_EQ(r.scores.at("const"), 0.0);

  const auto single = impurity_importance(X.leftCols(1), y, {"only"}, small_forest());
  EXPECT_NEAR(single.scores.at("only"), 1.0, 1e-12);
  EXPECT_THROW(impurity_importance(X.topRows(9), std::vector<double>(y.begin(), y.begin() + 9), {"a", "b", "c", "d"},
                                   small_forest()),
               ValidationError);
}

TEST(ImpurityImportance, Deterministic) {
  Rng rng(8);
  Matrix X(40, 3);
  std::vector<double> y;
  for (Eigen::Index i = 0; i < 40; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) X(i, j) = rng.normal();
    y.push_back(X(i, 0) + X(i, 1) * X(i, 2));
  }
  const auto a = impurity_importance(X, y, {"a", "b", "c"}, small_forest());
  const auto b = impurity_importance(X, y, {"a", "b", "c"}, small_forest());
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_EQ(a.ranked, b.ranked);
}

TEST(Ranking, TiesBrokenByName) {
  const auto r = ranking(Technique::Spearman, {{"zeta", 0.5}, {"alpha", 0.5}, {"mid", 0.9}, {"beta", 0.5}});
  EXPECT_EQ(r.ranked, (std::vector<std::string>{"mid", "alpha", "beta", "zeta"}));
}

TEST(IqrConsensus, StrictIntersection) {
  // A and B top every ranking; the other six vary.
  std::array<FeatureRanking, 4> rs;
  const std::array<Technique, 4> ts{Technique::Variance, Technique::ZeroPct, Technique::Impurity, Technique::Spearman};
  for (std::size_t t = 0; t < 4; ++t) {
    std::map<std::string, double> s{{"A", 10.0 + t}, {"B", 9.0 + t}};
    for (int c = 0; c < 6; ++c) s["C" + std::to_string(c)] = static_cast<double>((c + t) % 6);
    rs[t] = ranking(ts[t], s);
  }
  const auto res = iqr_consensus(rs);
  EXPECT_EQ(res.kept, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(res.mode, SelectionMode::StrictIntersection);
  for (std::size_t t = 0; t < 4; ++t)
    for (const auto& k : res.kept) EXPECT_TRUE(res.top_quartile[t].count(k));
}

TEST(IqrConsensus, MajorityFallback) {
  // Each ranking puts a different column on top; X sits in the upper
  // quartile of the first three only. Fillers get distinct low scores.
  const std::array<Technique, 4> ts{Technique::Variance, Technique::ZeroPct, Technique::Impurity, Technique::Spearman};
  const std::array<std::string, 7> others{"P", "Q", "R", "S", "T", "U", "V"};
  std::array<FeatureRanking, 4> rs;
  for (std::size_t t = 0; t < 4; ++t) {
    std::map<std::string, double> s{{"X", t < 3 ? 5.0 : 0.0}};
    double filler = 0.1;
    for (std::size_t c = 0; c < others.size(); ++c) {
      if (c == t) {
        s[others[c]] = 9.0;
      } else {
        s[others[c]] = filler;
        filler += 0.1;
      }
    }
    rs[t] = ranking(ts[t], s);
  }
  const auto res = iqr_consensus(rs);
  EXPECT_EQ(res.mode, SelectionMode::MajorityFallback);
  EXPECT_EQ(res.kept, std::vector<std::string>{"X"});
}

TEST(IqrConsensus, EmptyAndMismatchedInputs) {
  const std::array<Technique, 4> ts{Technique::Variance, Technique::ZeroPct, Technique::Impurity, Technique::Spearman};
  std::array<FeatureRanking, 4> rs;
  for (std::size_t t = 0; t < 4; ++t) {
    std::map<std::string, double> s;
    for (int c = 0; c < 8; ++c) s["c" + std::to_string(c)] = c == static_cast<int>(2 * t) ? 5.0 : 0.0;
    rs[t] = ranking(ts[t], s);
  }
  // Seven of eight scores are 0, so Q3 = 0 and every tied column is upper quartile.
  EXPECT_EQ(iqr_consensus(rs).kept.size(), 8u);

  auto flagged = rs;
  for (auto& r : flagged)
    for (const auto& [k, v] : r.scores) r.flagged.insert(k);
  EXPECT_THROW(iqr_consensus(flagged), EmptyResultError);

  // Distinct scores: top quartile of 8 is two columns, disjoint across rankings.
  std::array<FeatureRanking, 4> disjoint;
  for (std::size_t t = 0; t < 4; ++t) {
    std::map<std::string, double> s;
    for (int c = 0; c < 8; ++c) s["c" + std::to_string(c)] = static_cast<double>((c + 2 * static_cast<int>(t)) % 8);
    disjoint[t] = ranking(ts[t], s);
  }
  EXPECT_THROW(iqr_consensus(disjoint), EmptyResultError);

  auto bad = rs;
  bad[2].scores["extra"] = 1.0;
  EXPECT_THROW(iqr_consensus(bad), ValidationError);
}

TEST(SelectFeatures, PanelPipelineAndJson) {
  std::vector<ProjectPanel> panels;
  sim::PanelSpec spec;
  spec.n = 120;
  for (int i = 0; i < 3; ++i) panels.push_back(sim::armax_panel(900 + i, spec, "p" + std::to_string(i)));
  FeatselConfig cfg;
  cfg.forest.n_trees = 30;
  const auto a = select_features(panels, cfg);
  const auto b = select_features(panels, cfg);
  EXPECT_EQ(a.kept, b.kept);
  EXPECT_FALSE(a.kept.empty());
  EXPECT_TRUE(std::is_sorted(a.kept.begin(), a.kept.end()));
  const auto j = to_json(a);
  EXPECT_EQ(j.at("kept").get<std::vector<std::string>>(), a.kept);
  for (const char* t : {"variance", "zero_pct", "impurity", "spearman"}) {
    ASSERT_TRUE(j.at("techniques").contains(t));
    EXPECT_TRUE(j["techniques"][t].contains("quartile_cutoff"));
    EXPECT_EQ(j["techniques"][t]["ranked"].size(), 15u);
  }
  EXPECT_THROW(select_features({}, cfg), ValidationError);
}

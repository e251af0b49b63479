#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "tdf/csv.hpp"
#include "tdf/error.hpp"
#include "tdf/linalg.hpp"
#include "tdf/random.hpp"
#include "tdf/tree.hpp"

namespace tdf {

enum class RegressorKind { Mlr, Ridge, Lasso, Sgd, SvrRbf, Gbt, Rf };

inline std::string to_string(RegressorKind k) {
  switch (k) {
    case RegressorKind::Mlr: return "mlr";
    case RegressorKind::Ridge: return "ridge";
    case RegressorKind::Lasso: return "lasso";
    case RegressorKind::Sgd: return "sgd";
    case RegressorKind::SvrRbf: return "svr_rbf";
    case RegressorKind::Gbt: return "gbt";
    case RegressorKind::Rf: return "rf";
  }
  return "?";
}

inline std::optional<RegressorKind> parse_regressor_kind(const std::string& s) {
  for (auto k : {RegressorKind::Mlr, RegressorKind::Ridge, RegressorKind::Lasso, RegressorKind::Sgd,
                 RegressorKind::SvrRbf, RegressorKind::Gbt, RegressorKind::Rf})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

/// Hyperparameter overrides keyed as `<kind>.<name>`, e.g. `rf.n_trees`.
struct Hyper {
  std::map<std::string, double> values;

  static const std::map<std::string, double>& defaults() {
    static const std::map<std::string, double> d{
        {"ridge.lambda", 1.0},      {"lasso.lambda", 0.1},    {"lasso.tol", 1e-7},
        {"lasso.max_iter", 10000},  {"sgd.eta0", 0.01},       {"sgd.power_t", 0.25},
        {"sgd.epochs", 1000},       {"sgd.alpha", 1e-4},      {"svr.C", 1.0},
        {"svr.epsilon", 0.1},       {"svr.gamma", 0.0},       {"svr.tol", 1e-3},
        {"svr.max_iter", 200000},   {"gbt.n_rounds", 100},    {"gbt.max_depth", 3},
        {"gbt.learning_rate", 0.1}, {"gbt.min_leaf", 1},      {"rf.n_trees", 100},
        {"rf.max_depth", -1},       {"rf.min_leaf", 2},       {"rf.max_features", 0},
        {"seed", 1},                {"threads", 1}};
    return d;
  }

  double get(const std::string& key) const {
    if (auto it = values.find(key); it != values.end()) return it->second;
    return defaults().at(key);
  }

  void set(const std::string& key, double v) {
    if (!defaults().count(key)) throw ValidationError("unknown hyperparameter '" + key + "'");
    values[key] = v;
  }

  /// Effective values of every known key (defaults merged with overrides).
  std::map<std::string, double> effective() const {
    auto out = defaults();
    for (const auto& [k, v] : values) out[k] = v;
    return out;
  }
};

/// Parses `key=value` lines; blank lines and `#` comments are ignored. Keys
/// outside the regressor namespace are returned separately in `other`.
inline Hyper parse_hyper(std::istream& in, std::map<std::string, std::string>* other = nullptr) {
  Hyper h;
  std::string line;
  long row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    line = csv::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", row);
    const std::string key = csv::trim(line.substr(0, eq)), val = csv::trim(line.substr(eq + 1));
    if (Hyper::defaults().count(key)) {
      try {
        std::size_t used = 0;
        const double v = std::stod(val, &used);
        if (used != val.size()) throw std::invalid_argument(val);
        h.set(key, v);
      } catch (const std::logic_error&) {
        throw ParseError("value for '" + key + "' is not a number", row);
      }
    } else if (other) {
      (*other)[key] = val;
    } else {
      throw ParseError("unknown key '" + key + "'", row);
    }
  }
  return h;
}

inline Hyper load_hyper(const std::string& path, std::map<std::string, std::string>* other = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Input, "cannot open config file " + path);
  return parse_hyper(in, other);
}

/// Column-wise z-scores with population std; zero-spread columns keep scale 1.
struct Standardizer {
  Vector mean, scale;

  static Standardizer fit(const Matrix& X) {
    Standardizer s;
    const auto n = static_cast<double>(X.rows());
    s.mean = X.colwise().mean().transpose();
    s.scale.resize(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const double var = (X.col(j).array() - s.mean(j)).square().sum() / n;
      const double sd = std::sqrt(var);
      s.scale(j) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(j))) ? sd : 1.0;
    }
    return s;
  }

  Matrix apply(const Matrix& X) const {
    return (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }
};

struct Regressor {
  RegressorKind kind = RegressorKind::Mlr;
  Eigen::Index n_features = 0;
  Standardizer xs;
  double y_mean = 0.0, y_scale = 1.0;

  // Linear kinds, expressed on the ORIGINAL scale: y = intercept + X coef.
  Vector coef;
  double intercept = 0.0;

  // svr_rbf, in standardized units.
  Matrix support;
  Vector dual;
  double bias = 0.0, gamma = 1.0;

  RandomForest forest;
  GradientBoosting boosting;
};

namespace detail {

inline void check_training(const Matrix& X, std::span<const double> y) {
  if (X.rows() != static_cast<Eigen::Index>(y.size())) throw ValidationError("regressor: X and y row counts differ");
  if (X.rows() < 10) throw ValidationError("regressor: at least 10 training rows required");
  if (!X.allFinite() || !all_finite(y)) throw ValidationError("regressor: non-finite input");
}

// Maps standardized-scale linear coefficients back to the original scale.
inline void unstandardize_linear(Regressor& r, const Vector& beta_std, double icpt_std) {
  r.coef = (beta_std.array() / r.xs.scale.array()).matrix() * r.y_scale;
  r.intercept = r.y_mean + r.y_scale * icpt_std - r.coef.dot(r.xs.mean);
}

inline double soft_threshold(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

inline double rbf(const Matrix& A, Eigen::Index i, const Matrix& B, Eigen::Index j, double gamma) {
  return std::exp(-gamma * (A.row(i) - B.row(j)).squaredNorm());
}

inline void fit_svr(Regressor& r, const Matrix& Z, const Vector& yz, const Hyper& h) {
  const Eigen::Index n = Z.rows();
  const double C = h.get("svr.C"), eps = h.get("svr.epsilon"), tol = h.get("svr.tol");
  if (!(C > 0.0) || eps < 0.0) throw ValidationError("svr: C must be > 0 and epsilon >= 0");
  double gamma = h.get("svr.gamma");
  if (!(gamma > 0.0)) {
    const double mu = Z.mean();
    const double var = (Z.array() - mu).square().mean();
    gamma = var > 0.0 ? 1.0 / (static_cast<double>(Z.cols()) * var) : 1.0;
  }
  Matrix K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) K(i, j) = K(j, i) = rbf(Z, i, Z, j, gamma);

  // Dual in beta = alpha - alpha*: min 1/2 b'Kb - y'b + eps |b|_1,
  // sum(b) = 0, -C <= b <= C. Pairwise updates on the maximal violating pair.
  Vector beta = Vector::Zero(n), g = -yz;  // g = K beta - y
  const auto max_iter = static_cast<long>(h.get("svr.max_iter"));
  auto up = [&](Eigen::Index i) { return g(i) + eps * (beta(i) >= 0.0 ? 1.0 : -1.0); };
  auto dn = [&](Eigen::Index i) { return g(i) - eps * (beta(i) <= 0.0 ? 1.0 : -1.0); };
  for (long it = 0; it < max_iter; ++it) {
    Eigen::Index i = -1, j = -1;
    double umin = std::numeric_limits<double>::infinity(), dmax = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (beta(k) < C - 1e-12 && up(k) < umin) umin = up(k), i = k;
      if (beta(k) > -C + 1e-12 && dn(k) > dmax) dmax = dn(k), j = k;
    }
    if (i < 0 || j < 0 || i == j || dmax - umin < tol) break;
    // Objective along beta_i += t, beta_j -= t is a convex piecewise
    // quadratic; minimise it exactly over the feasible interval.
    const double eta = K(i, i) + K(j, j) - 2.0 * K(i, j);
    const double lin = g(i) - g(j);
    const double lo = std::max(-C - beta(i), beta(j) - C), hi = std::min(C - beta(i), beta(j) + C);
    auto phi = [&](double t) {
      return 0.5 * eta * t * t + lin * t + eps * (std::abs(beta(i) + t) + std::abs(beta(j) - t));
    };
    std::vector<double> knots{lo, hi};
    for (double k : {-beta(i), beta(j)})
      if (k > lo && k < hi) knots.push_back(k);
    std::sort(knots.begin(), knots.end());
    double best_t = 0.0, best_v = phi(0.0);
    for (std::size_t s = 0; s < knots.size(); ++s) {
      if (phi(knots[s]) < best_v) best_v = phi(knots[s]), best_t = knots[s];
      if (s + 1 < knots.size() && eta > 1e-12) {
        const double mid = 0.5 * (knots[s] + knots[s + 1]);
        const double si = (beta(i) + mid) >= 0 ? 1.0 : -1.0, sj = (beta(j) - mid) >= 0 ? 1.0 : -1.0;
        const double t = std::clamp(-(lin + eps * (si - sj)) / eta, knots[s], knots[s + 1]);
        if (phi(t) < best_v) best_v = phi(t), best_t = t;
      }
    }
    if (best_t == 0.0) break;
    beta(i) += best_t;
    beta(j) -= best_t;
    g += best_t * (K.col(i) - K.col(j));
  }
  // Bias from free support vectors, else the midpoint of the KKT interval.
  double bsum = 0.0;
  int nfree = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (beta(k) > 1e-12 && beta(k) < C - 1e-12) bsum += -(g(k) + eps), ++nfree;
    else if (beta(k) < -1e-12 && beta(k) > -C + 1e-12) bsum += -(g(k) - eps), ++nfree;
  }
  double bias = 0.0;
  if (nfree > 0) {
    bias = bsum / nfree;
  } else {
    double umin = std::numeric_limits<double>::infinity(), dmax = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (beta(k) < C - 1e-12) umin = std::min(umin, up(k));
      if (beta(k) > -C + 1e-12) dmax = std::max(dmax, dn(k));
    }
    bias = std::isfinite(umin) && std::isfinite(dmax) ? -(umin + dmax) / 2.0 : 0.0;
  }
  std::vector<Eigen::Index> sv;
  for (Eigen::Index k = 0; k < n; ++k)
    if (beta(k) != 0.0) sv.push_back(k);
  r.support.resize(static_cast<Eigen::Index>(sv.size()), Z.cols());
  r.dual.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t s = 0; s < sv.size(); ++s) {
    r.support.row(static_cast<Eigen::Index>(s)) = Z.row(sv[s]);
    r.dual(static_cast<Eigen::Index>(s)) = beta(sv[s]);
  }
  r.bias = bias;
  r.gamma = gamma;
}

}  // namespace detail

inline Regressor fit_regressor(RegressorKind kind, const Matrix& X, std::span<const double> y, const Hyper& h = {}) {
  detail::check_training(X, y);
  Regressor r;
  r.kind = kind;
  r.n_features = X.cols();
  const Eigen::Index n = X.rows(), p = X.cols();
  const Vector yv = as_vector(y);
  const auto seed = static_cast<std::uint64_t>(h.get("seed"));

  switch (kind) {
    case RegressorKind::Mlr: {
      if (n <= p) throw ValidationError("mlr: needs more rows than columns");
      r.xs = Standardizer::fit(X);
      r.y_mean = 0.0;
      Matrix D(n, p + 1);
      D << Vector::Ones(n), r.xs.apply(X);
      Eigen::ColPivHouseholderQR<Matrix> qr(D);
      qr.setThreshold(1e-10);
      if (qr.rank() < p + 1)
        throw NumericalError("mlr: singular design matrix (collinear or constant columns); use ridge instead");
      const Vector b = qr.solve(yv);
      detail::unstandardize_linear(r, b.tail(p), b(0));
      break;
    }
    case RegressorKind::Ridge: {
      const double lambda = h.get("ridge.lambda");
      if (lambda < 0.0) throw ValidationError("ridge: lambda must be >= 0");
      r.xs = Standardizer::fit(X);
      const Matrix Z = r.xs.apply(X);
      r.y_mean = yv.mean();
      const Vector yc = yv.array() - r.y_mean;
      const Matrix A = Z.transpose() * Z + lambda * Matrix::Identity(p, p);
      const Vector b = A.completeOrthogonalDecomposition().solve(Z.transpose() * yc);
      detail::unstandardize_linear(r, b, 0.0);
      break;
    }
    case RegressorKind::Lasso: {
      const double lambda = h.get("lasso.lambda"), tol = h.get("lasso.tol");
      if (lambda < 0.0) throw ValidationError("lasso: lambda must be >= 0");
      r.xs = Standardizer::fit(X);
      const Matrix Z = r.xs.apply(X);
      r.y_mean = yv.mean();
      Vector resid = yv.array() - r.y_mean;
      Vector b = Vector::Zero(p);
      const Vector norms = Z.colwise().squaredNorm().transpose() / static_cast<double>(n);
      const auto max_iter = static_cast<long>(h.get("lasso.max_iter"));
      for (long it = 0; it < max_iter; ++it) {
        double max_step = 0.0, max_b = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
          if (norms(j) <= 0.0) continue;
          const double old = b(j);
          const double rho = Z.col(j).dot(resid) / static_cast<double>(n) + norms(j) * old;
          b(j) = detail::soft_threshold(rho, lambda) / norms(j);
          if (b(j) != old) resid -= (b(j) - old) * Z.col(j);
          max_step = std::max(max_step, std::abs(b(j) - old));
          max_b = std::max(max_b, std::abs(b(j)));
        }
        if (max_step <= tol * std::max(1.0, max_b)) break;
      }
      detail::unstandardize_linear(r, b, 0.0);
      break;
    }
    case RegressorKind::Sgd: {
      r.xs = Standardizer::fit(X);
      const Matrix Z = r.xs.apply(X);
      r.y_mean = yv.mean();
      const double ysd = std::sqrt((yv.array() - r.y_mean).square().mean());
      r.y_scale = ysd > 0.0 ? ysd : 1.0;
      const Vector yz = (yv.array() - r.y_mean) / r.y_scale;
      const double eta0 = h.get("sgd.eta0"), power = h.get("sgd.power_t"), alpha = h.get("sgd.alpha");
      const auto epochs = static_cast<int>(h.get("sgd.epochs"));
      Vector b = Vector::Zero(p);
      double icpt = 0.0;
      Rng rng(seed, 0x5d9);
      std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      double t = 1.0;
      for (int e = 0; e < epochs; ++e) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        for (Eigen::Index row : order) {
          const double eta = eta0 / std::pow(t, power);
          const double err = icpt + Z.row(row).dot(b) - yz(row);
          b = b * (1.0 - eta * alpha) - eta * err * Z.row(row).transpose();
          icpt -= eta * err;
          t += 1.0;
        }
      }
      detail::unstandardize_linear(r, b, icpt);
      break;
    }
    case RegressorKind::SvrRbf: {
      r.xs = Standardizer::fit(X);
      const Matrix Z = r.xs.apply(X);
      r.y_mean = yv.mean();
      const double ysd = std::sqrt((yv.array() - r.y_mean).square().mean());
      r.y_scale = ysd > 0.0 ? ysd : 1.0;
      const Vector yz = (yv.array() - r.y_mean) / r.y_scale;
      detail::fit_svr(r, Z, yz, h);
      break;
    }
    case RegressorKind::Gbt: {
      BoostingConfig bc;
      bc.n_rounds = static_cast<int>(h.get("gbt.n_rounds"));
      bc.max_depth = static_cast<int>(h.get("gbt.max_depth"));
      bc.learning_rate = h.get("gbt.learning_rate");
      bc.min_leaf = static_cast<int>(h.get("gbt.min_leaf"));
      r.boosting = fit_boosting(X, y, bc);
      break;
    }
    case RegressorKind::Rf: {
      ForestConfig fc;
      fc.n_trees = static_cast<int>(h.get("rf.n_trees"));
      fc.max_depth = static_cast<int>(h.get("rf.max_depth"));
      fc.min_leaf = static_cast<int>(h.get("rf.min_leaf"));
      fc.max_features = static_cast<int>(h.get("rf.max_features"));
      fc.seed = seed;
      fc.threads = static_cast<int>(h.get("threads"));
      r.forest = fit_forest(X, y, fc);
      break;
    }
  }
  return r;
}

inline std::vector<double> predict(const Regressor& r, const Matrix& X) {
  if (X.cols() != r.n_features)
    throw ValidationError("predict: expected " + std::to_string(r.n_features) + " columns, got " +
                          std::to_string(X.cols()));
  std::vector<double> out(static_cast<std::size_t>(X.rows()));
  switch (r.kind) {
    case RegressorKind::Mlr:
    case RegressorKind::Ridge:
    case RegressorKind::Lasso:
    case RegressorKind::Sgd: {
      const Vector v = (X * r.coef).array() + r.intercept;
      out = to_std(v);
      break;
    }
    case RegressorKind::SvrRbf: {
      const Matrix Z = r.xs.apply(X);
      for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        double s = r.bias;
        for (Eigen::Index k = 0; k < r.support.rows(); ++k) s += r.dual(k) * detail::rbf(r.support, k, Z, i, r.gamma);
        out[static_cast<std::size_t>(i)] = r.y_mean + r.y_scale * s;
      }
      break;
    }
    case RegressorKind::Gbt:
      for (Eigen::Index i = 0; i < X.rows(); ++i) out[static_cast<std::size_t>(i)] = r.boosting.predict_row(X, i);
      break;
    case RegressorKind::Rf:
      for (Eigen::Index i = 0; i < X.rows(); ++i) out[static_cast<std::size_t>(i)] = r.forest.predict_row(X, i);
      break;
  }
  return out;
}

}  // namespace tdf

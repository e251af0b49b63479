#pragma once

// Seasonal ARIMA with exogenous regressors, in the direct ARMAX form
//
//   Phi(B^m) phi(B) w_t = c + beta' z_t + theta(B) Theta(B^m) e_t,
//
// where w and z are y and the exogenous columns after (1-B)^d (1-B^m)^D.
// Coefficients are estimated by conditional sum of squares; the intercept
// and beta are profiled out by least squares for every candidate of the
// (transformed) ARMA coefficients, so the numerical search only runs over
// p + q + P + Q dimensions.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "json.hpp"

#include "tdf/differencing.hpp"
#include "tdf/error.hpp"
#include "tdf/linalg.hpp"
#include "tdf/optimize.hpp"
#include "tdf/random.hpp"
#include "tdf/stattests.hpp"

namespace tdf {

struct SarimaxOrder {
  int p = 0, d = 0, q = 0;
  int P = 0, D = 0, Q = 0;
  int m = 1;

  int ar_span() const { return p + P * m; }
  int ma_span() const { return q + Q * m; }
  int diff_span() const { return d + D * m; }
  int arma_count() const { return p + q + P + Q; }
  bool seasonal() const { return m > 1 && (P + D + Q) > 0; }

  void validate() const {
    if (p < 0 || d < 0 || q < 0 || P < 0 || D < 0 || Q < 0) throw ValidationError("model orders must be non-negative");
    if (d > 2) throw ValidationError("d must be <= 2");
    if (D > 1) throw ValidationError("D must be <= 1");
    if (m < 1) throw ValidationError("seasonal period m must be >= 1");
    if (m == 1 && (P != 0 || D != 0 || Q != 0)) throw ValidationError("seasonal orders require m >= 2");
  }

  std::string to_string() const {
    std::string s = "(" + std::to_string(p) + "," + std::to_string(d) + "," + std::to_string(q) + ")";
    if (m > 1)
      s += "(" + std::to_string(P) + "," + std::to_string(D) + "," + std::to_string(Q) + "," + std::to_string(m) + ")";
    return s;
  }

  auto operator<=>(const SarimaxOrder&) const = default;
};

struct FitOptions {
  bool intercept = true;
  int restarts = 3;
  std::uint64_t seed = 20240521;
  optim::Options optimizer{};
  std::vector<std::string> exog_names;  // used in error messages and exports
};

struct FittedSarimax {
  SarimaxOrder order;
  bool has_intercept = true;
  double intercept = 0.0;  // phi_0
  std::vector<double> beta;
  std::vector<double> ar, ma, sar, sma;
  std::vector<std::string> exog_names;
  double sigma2 = 0.0;
  double loglik = 0.0;
  int k = 0;
  double aic = 0.0, bic = 0.0;
  std::vector<double> residuals;  // conditional residuals, one per scored period
  bool converged = false;
  int n_effective = 0;  // n - d - D*m
  int n_obs = 0;

  // Terminal state needed to continue the recursion.
  std::vector<double> y_tail;      // last d + D*m undifferenced values
  Matrix exog_tail;                // last d + D*m exogenous rows
  std::vector<double> w_tail;      // last p + P*m differenced values
  std::vector<double> resid_tail;  // last q + Q*m residuals

  std::size_t exog_count() const { return beta.size(); }
};

struct ResidualDiagnostics {
  std::vector<double> standardized_residuals;
  std::vector<double> histogram_edges;
  std::vector<int> histogram_counts;
  std::vector<std::pair<double, double>> qq_points;  // (theoretical, sample)
  AcfResult acf_values;
  TestResult ljung_box;
};

struct ForecastBands {
  std::vector<double> mean, lower, upper, stderr_;
};

// ---------------------------------------------------------------------------
// Polynomial helpers
// ---------------------------------------------------------------------------

/// Maps unconstrained reals onto the coefficients a_1..a_p of a stationary
/// polynomial 1 - a_1 z - ... - a_p z^p (tanh partial autocorrelations fed
/// through the Durbin-Levinson recursion).
inline std::vector<double> constrain_stationary(std::span<const double> u) {
  const std::size_t p = u.size();
  std::vector<double> a(p, 0.0), prev(p, 0.0);
  for (std::size_t k = 0; k < p; ++k) {
    const double r = std::tanh(u[k]);
    for (std::size_t j = 0; j < k; ++j) a[j] = prev[j] - r * prev[k - 1 - j];
    a[k] = r;
    std::copy(a.begin(), a.begin() + static_cast<long>(k) + 1, prev.begin());
  }
  return a;
}

/// Inverse of `constrain_stationary`; nullopt when the polynomial is not
/// stationary.
inline std::optional<std::vector<double>> unconstrain_stationary(std::span<const double> a_in) {
  const std::size_t p = a_in.size();
  std::vector<double> a(a_in.begin(), a_in.end()), u(p, 0.0);
  for (std::size_t k = p; k-- > 0;) {
    const double r = a[k];
    if (!(std::abs(r) < 1.0)) return std::nullopt;
    u[k] = std::atanh(r);
    std::vector<double> prev(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) prev[j] = (a[j] + r * a[k - 1 - j]) / (1.0 - r * r);
    std::copy(prev.begin(), prev.end(), a.begin());
  }
  return u;
}

inline bool is_stationary(std::span<const double> a) { return unconstrain_stationary(a).has_value(); }

/// Smallest root modulus of 1 - a_1 z - ... - a_p z^p (infinity for p = 0),
/// from the eigenvalues of the companion matrix.
inline double min_root_modulus(std::span<const double> a) {
  auto p = static_cast<Eigen::Index>(a.size());
  while (p > 0 && a[static_cast<std::size_t>(p - 1)] == 0.0) --p;
  if (p == 0) return std::numeric_limits<double>::infinity();
  Matrix C = Matrix::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) C(0, j) = a[static_cast<std::size_t>(j)];
  for (Eigen::Index i = 1; i < p; ++i) C(i, i - 1) = 1.0;
  const double mx = Eigen::EigenSolver<Matrix>(C, false).eigenvalues().cwiseAbs().maxCoeff();
  return mx > 0.0 ? 1.0 / mx : std::numeric_limits<double>::infinity();
}

namespace detail {

// Coefficients of the lag polynomial 1 + sign * sum c_i B^i, returned as the
// vector (c_0 = 1, c_1, ...).
inline std::vector<double> lag_poly(std::span<const double> coef, double sign, int stride) {
  std::vector<double> out(coef.size() * static_cast<std::size_t>(stride) + 1, 0.0);
  out[0] = 1.0;
  for (std::size_t i = 0; i < coef.size(); ++i) out[(i + 1) * static_cast<std::size_t>(stride)] = sign * coef[i];
  return out;
}

inline std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

}  // namespace detail

/// a_1..a_L with phi(B) Phi(B^m) = 1 - sum a_j B^j.
inline std::vector<double> expand_ar(std::span<const double> ar, std::span<const double> sar, int m) {
  const auto poly = detail::poly_mul(detail::lag_poly(ar, -1.0, 1), detail::lag_poly(sar, -1.0, m));
  std::vector<double> out(poly.size() - 1);
  for (std::size_t j = 1; j < poly.size(); ++j) out[j - 1] = -poly[j];
  return out;
}

/// b_1..b_M with theta(B) Theta(B^m) = 1 + sum b_k B^k.
inline std::vector<double> expand_ma(std::span<const double> ma, std::span<const double> sma, int m) {
  const auto poly = detail::poly_mul(detail::lag_poly(ma, 1.0, 1), detail::lag_poly(sma, 1.0, m));
  return {poly.begin() + 1, poly.end()};
}

/// (aic, bic) = (2k - 2 loglik, k ln(n) - 2 loglik).
inline std::pair<double, double> information_criteria(double loglik, int k, int n) {
  if (n < 1) throw ValidationError("information criteria need n >= 1");
  if (k < 0) throw ValidationError("parameter count must be non-negative");
  return {2.0 * k - 2.0 * loglik, k * std::log(static_cast<double>(n)) - 2.0 * loglik};
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

namespace detail {

struct ArmaCoeffs {
  std::vector<double> ar, ma, sar, sma;
};

inline ArmaCoeffs decode(const SarimaxOrder& o, const Vector& u) {
  ArmaCoeffs c;
  const double* ptr = u.data();
  auto take = [&](int n) {
    std::span<const double> s(ptr, static_cast<std::size_t>(n));
    ptr += n;
    return constrain_stationary(s);
  };
  c.ar = take(o.p);
  c.ma = take(o.q);
  for (auto& v : c.ma) v = -v;
  c.sar = take(o.P);
  c.sma = take(o.Q);
  for (auto& v : c.sma) v = -v;
  return c;
}

inline std::optional<Vector> encode(const SarimaxOrder& o, const ArmaCoeffs& c) {
  Vector u(o.arma_count());
  Eigen::Index pos = 0;
  auto put = [&](std::vector<double> a, bool negate) {
    if (negate)
      for (auto& v : a) v = -v;
    auto uu = unconstrain_stationary(a);
    if (!uu) return false;
    for (double v : *uu) u(pos++) = v;
    return true;
  };
  if (!put(c.ar, false) || !put(c.ma, true) || !put(c.sar, false) || !put(c.sma, true)) return std::nullopt;
  return u;
}

// Problem data after differencing; rows t = L..N-1 are scored.
struct CssProblem {
  SarimaxOrder order;
  Vector w;        // differenced y, length N
  Matrix Z;        // differenced exog, N x k
  bool intercept;  // include a constant column
  Eigen::Index L;  // ar span
  Eigen::Index nlin() const { return (intercept ? 1 : 0) + Z.cols(); }
  Eigen::Index ncond() const { return w.size() - L; }
};

struct CssSolution {
  double ssr = std::numeric_limits<double>::infinity();
  Vector lin;       // [intercept?, beta...]
  Vector residuals; // length ncond
};

// Builds [v | 1 | Z] for the scored rows, where v = AR-filtered w, then runs
// the inverse MA filter over all columns in place.
inline Matrix filtered_block(const CssProblem& pr, std::span<const double> a, std::span<const double> b) {
  const Eigen::Index n = pr.ncond(), L = pr.L;
  Matrix M(n, 1 + pr.nlin());
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index t = r + L;
    double v = pr.w(t);
    for (std::size_t j = 0; j < a.size(); ++j) v -= a[j] * pr.w(t - 1 - static_cast<Eigen::Index>(j));
    M(r, 0) = v;
  }
  Eigen::Index col = 1;
  if (pr.intercept) M.col(col++).setOnes();
  if (pr.Z.cols() > 0) M.rightCols(pr.Z.cols()) = pr.Z.bottomRows(n);
  if (!b.empty()) {
    const auto mq = static_cast<Eigen::Index>(b.size());
    for (Eigen::Index r = 1; r < n; ++r) {
      const Eigen::Index lim = std::min(mq, r);
      for (Eigen::Index k = 1; k <= lim; ++k) M.row(r) -= b[static_cast<std::size_t>(k - 1)] * M.row(r - k);
    }
  }
  return M;
}

inline CssSolution css_solve(const CssProblem& pr, const ArmaCoeffs& c, bool min_norm) {
  const auto a = expand_ar(c.ar, c.sar, pr.order.m);
  const auto b = expand_ma(c.ma, c.sma, pr.order.m);
  const Matrix M = filtered_block(pr, a, b);
  CssSolution s;
  const Eigen::Index k = pr.nlin();
  if (k == 0) {
    s.lin = Vector(0);
    s.residuals = M.col(0);
  } else {
    const auto X = M.rightCols(k);
    if (min_norm)
      s.lin = X.completeOrthogonalDecomposition().solve(M.col(0));
    else
      s.lin = X.colPivHouseholderQr().solve(M.col(0));
    s.residuals = M.col(0) - X * s.lin;
  }
  s.ssr = s.residuals.squaredNorm();
  return s;
}

// Least-squares regression of w_t on [1?, z_t, w lags at `lags`] over the
// scored rows; used for the pure-AR closed form and for starting values.
inline OlsFit lagged_regression(const CssProblem& pr, const std::vector<int>& lags, Eigen::Index start,
                                const Vector* extra = nullptr, const std::vector<int>& extra_lags = {}) {
  const Eigen::Index n = pr.w.size() - start;
  const Eigen::Index cols = pr.nlin() + static_cast<Eigen::Index>(lags.size() + extra_lags.size());
  Matrix X(n, cols);
  Vector y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index t = r + start;
    y(r) = pr.w(t);
    Eigen::Index c = 0;
    if (pr.intercept) X(r, c++) = 1.0;
    for (Eigen::Index j = 0; j < pr.Z.cols(); ++j) X(r, c++) = pr.Z(t, j);
    for (int l : lags) X(r, c++) = pr.w(t - l);
    for (int l : extra_lags) X(r, c++) = (*extra)(t - l);
  }
  return ols(X, y);
}

}  // namespace detail

/// Fits the model by conditional least squares. `exog` may be empty (0 columns).
inline FittedSarimax fit(std::span<const double> y, const Matrix& exog, const SarimaxOrder& order,
                         const FitOptions& opt = {}) {
  order.validate();
  const auto n = static_cast<long>(y.size());
  const Eigen::Index ncols = exog.cols();
  if (!all_finite(y)) throw ValidationError("fit: non-finite values in y");
  if (ncols > 0 && exog.rows() != n) throw ValidationError("fit: exog row count does not match y");
  if (ncols > 0 && !exog.allFinite()) throw ValidationError("fit: non-finite values in exog");
  if (n < 24) throw ValidationError("fit: at least 24 observations required, got " + std::to_string(n));
  const long needed = order.diff_span() + order.p + order.q + order.P * order.m + order.Q * order.m + ncols + 5;
  if (n <= needed)
    throw ValidationError("fit: " + std::to_string(n) + " observations are insufficient for order " +
                          order.to_string() + " with " + std::to_string(ncols) + " exogenous columns");

  auto col_name = [&](Eigen::Index j) {
    return static_cast<std::size_t>(j) < opt.exog_names.size() ? opt.exog_names[static_cast<std::size_t>(j)]
                                                               : "x" + std::to_string(j + 1);
  };

  detail::CssProblem pr;
  pr.order = order;
  pr.intercept = opt.intercept;
  pr.L = order.ar_span();
  const auto wv = difference(y, order.d, order.D, order.m);
  pr.w = as_vector(wv);
  const Eigen::Index N = pr.w.size();
  pr.Z.resize(N, ncols);
  for (Eigen::Index j = 0; j < ncols; ++j) {
    std::vector<double> col(exog.col(j).data(), exog.col(j).data() + n);
    const auto dz = difference(col, order.d, order.D, order.m);
    pr.Z.col(j) = as_vector(dz);
    const double lo = pr.Z.col(j).minCoeff(), hi = pr.Z.col(j).maxCoeff();
    if (hi - lo <= 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi))))
      throw ValidationError("fit: exogenous column '" + col_name(j) + "' is constant after differencing");
  }
  if (pr.ncond() <= pr.nlin() + 1) throw ValidationError("fit: too few observations after differencing");

  FittedSarimax out;
  out.order = order;
  out.has_intercept = opt.intercept;
  out.n_obs = static_cast<int>(n);
  out.n_effective = static_cast<int>(N);
  for (Eigen::Index j = 0; j < ncols; ++j) out.exog_names.push_back(col_name(j));

  detail::ArmaCoeffs best;
  bool converged = false;
  const bool linear_ar = order.ma_span() == 0 && (order.p == 0 || order.P == 0);

  std::optional<detail::ArmaCoeffs> closed_form;
  if (linear_ar) {
    std::vector<int> lags;
    for (int i = 1; i <= order.p; ++i) lags.push_back(i);
    for (int i = 1; i <= order.P; ++i) lags.push_back(i * order.m);
    if (lags.empty()) {
      closed_form = detail::ArmaCoeffs{};
    } else {
      const auto f = detail::lagged_regression(pr, lags, pr.L);
      if (f.rank == f.coef.size()) {
        detail::ArmaCoeffs c;
        std::vector<double> phi(f.coef.data() + pr.nlin(), f.coef.data() + f.coef.size());
        if (is_stationary(phi)) {
          (order.p > 0 ? c.ar : c.sar) = phi;
          closed_form = c;
        }
      }
    }
  }

  if (closed_form) {
    best = *closed_form;
    converged = true;
  } else {
    // Hannan-Rissanen style starting values: long autoregression for
    // innovations, then one regression on lagged w and lagged innovations.
    detail::ArmaCoeffs start;
    start.ar.assign(static_cast<std::size_t>(order.p), 0.0);
    start.ma.assign(static_cast<std::size_t>(order.q), 0.0);
    start.sar.assign(static_cast<std::size_t>(order.P), 0.0);
    start.sma.assign(static_cast<std::size_t>(order.Q), 0.0);
    const int h = std::max(order.ar_span(), order.ma_span()) + 2;
    const Eigen::Index s2 = h + std::max(order.ar_span(), order.ma_span());
    if (N - s2 > pr.nlin() + order.arma_count() + 10) {
      std::vector<int> long_lags;
      for (int i = 1; i <= h; ++i) long_lags.push_back(i);
      const auto lf = detail::lagged_regression(pr, long_lags, h);
      Vector innov = Vector::Zero(N);
      innov.tail(lf.residuals.size()) = lf.residuals;
      std::vector<int> lags, elags;
      for (int i = 1; i <= order.p; ++i) lags.push_back(i);
      for (int i = 1; i <= order.P; ++i) lags.push_back(i * order.m);
      for (int i = 1; i <= order.q; ++i) elags.push_back(i);
      for (int i = 1; i <= order.Q; ++i) elags.push_back(i * order.m);
      const auto hr = detail::lagged_regression(pr, lags, s2, &innov, elags);
      if (hr.coef.allFinite()) {
        Eigen::Index c = pr.nlin();
        for (auto& v : start.ar) v = hr.coef(c++);
        for (auto& v : start.sar) v = hr.coef(c++);
        for (auto& v : start.ma) v = hr.coef(c++);
        for (auto& v : start.sma) v = hr.coef(c++);
      }
    }
    Vector u0 = Vector::Zero(order.arma_count());
    if (auto enc = detail::encode(order, start)) {
      u0 = *enc;
    } else {
      // Inadmissible preliminary estimates: fall back to small defaults.
      detail::ArmaCoeffs small = start;
      for (auto* v : {&small.ar, &small.sar}) std::fill(v->begin(), v->end(), 0.1);
      for (auto* v : {&small.ma, &small.sma}) std::fill(v->begin(), v->end(), 0.1);
      u0 = detail::encode(order, small).value_or(Vector::Zero(order.arma_count()));
    }
    u0 = u0.cwiseMax(-std::atanh(0.9)).cwiseMin(std::atanh(0.9));

    optim::Options oo = opt.optimizer;
    oo.lower = std::max(oo.lower, -5.0);
    oo.upper = std::min(oo.upper, 5.0);
    auto objective = [&](const Vector& u) {
      const auto s = detail::css_solve(pr, detail::decode(order, u), false);
      return s.ssr > 0.0 ? std::log(s.ssr) : -1e300;
    };
    Rng rng(opt.seed, static_cast<std::uint64_t>(order.p * 1000 + order.q * 100 + order.P * 10 + order.Q));
    optim::Result best_run;
    for (int run = 0; run <= std::max(0, opt.restarts); ++run) {
      Vector start_u = u0;
      if (run > 0)
        for (Eigen::Index i = 0; i < start_u.size(); ++i) start_u(i) += rng.normal(0.0, 0.5);
      auto res = optim::bfgs(objective, start_u, oo);
      if (!res.converged) {
        auto nm = optim::nelder_mead(objective, res.x, oo);
        if (nm.value <= res.value) {
          nm.converged = nm.converged || res.converged;
          res = nm;
        }
      }
      if (run == 0 || res.value < best_run.value - 1e-12 ||
          (std::abs(res.value - best_run.value) <= 1e-12 && res.converged && !best_run.converged))
        best_run = res;
    }
    best = detail::decode(order, best_run.x);
    converged = best_run.converged && std::isfinite(best_run.value);
  }

  const auto sol = detail::css_solve(pr, best, true);
  const double ncond = static_cast<double>(pr.ncond());
  out.ar = best.ar;
  out.ma = best.ma;
  out.sar = best.sar;
  out.sma = best.sma;
  Eigen::Index c = 0;
  out.intercept = opt.intercept ? sol.lin(c++) : 0.0;
  for (Eigen::Index j = 0; j < ncols; ++j) out.beta.push_back(sol.lin(c++));
  out.residuals = to_std(sol.residuals);
  out.sigma2 = sol.ssr / ncond;
  if (!(out.sigma2 > 0.0) || !std::isfinite(out.sigma2)) {
    // Perfect fit: keep a tiny positive variance so the likelihood is finite.
    out.sigma2 = std::max(out.sigma2, 1e-300);
  }
  // Gaussian log-likelihood at the CSS estimate, scaled to the n - d - D*m
  // differenced observations so candidates with different AR spans compare.
  out.loglik = -0.5 * static_cast<double>(N) * (std::log(2.0 * std::numbers::pi * out.sigma2) + 1.0);
  out.k = static_cast<int>(pr.nlin()) + order.arma_count() + 1;
  std::tie(out.aic, out.bic) = information_criteria(out.loglik, out.k, out.n_effective);
  out.converged = converged && std::isfinite(out.loglik);

  const int ds = order.diff_span();
  out.y_tail.assign(y.end() - ds, y.end());
  out.exog_tail = exog.bottomRows(ncols > 0 ? ds : 0);
  if (ncols == 0) out.exog_tail.resize(0, 0);
  out.w_tail.assign(wv.end() - order.ar_span(), wv.end());
  out.resid_tail.assign(static_cast<std::size_t>(order.ma_span()), 0.0);
  const auto nres = static_cast<long>(out.residuals.size());
  for (long i = 0; i < std::min<long>(order.ma_span(), nres); ++i)
    out.resid_tail[static_cast<std::size_t>(order.ma_span() - 1 - i)] = out.residuals[static_cast<std::size_t>(nres - 1 - i)];
  return out;
}

inline FittedSarimax fit(std::span<const double> y, const SarimaxOrder& order, const FitOptions& opt = {}) {
  return fit(y, Matrix(0, 0), order, opt);
}

// ---------------------------------------------------------------------------
// Forecasting
// ---------------------------------------------------------------------------

namespace detail {

inline Matrix differenced_future_exog(const FittedSarimax& f, int h, const Matrix* future_exog) {
  const auto k = static_cast<Eigen::Index>(f.exog_count());
  if (k == 0) {
    if (future_exog && future_exog->size() > 0) throw ValidationError("forecast: model has no exogenous columns");
    return Matrix(h, 0);
  }
  if (!future_exog) throw ValidationError("forecast: model needs " + std::to_string(k) + " future exogenous columns");
  if (future_exog->rows() != h || future_exog->cols() != k)
    throw ValidationError("forecast: future exog must be " + std::to_string(h) + " x " + std::to_string(k));
  if (!future_exog->allFinite()) throw ValidationError("forecast: non-finite future exog");
  const Eigen::Index ds = f.order.diff_span();
  Matrix Z(h, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    std::vector<double> col;
    for (Eigen::Index i = 0; i < ds; ++i) col.push_back(f.exog_tail(i, j));
    for (Eigen::Index i = 0; i < h; ++i) col.push_back((*future_exog)(i, j));
    const auto dz = difference(col, f.order.d, f.order.D, f.order.m);
    for (Eigen::Index i = 0; i < h; ++i) Z(i, j) = dz[static_cast<std::size_t>(i)];
  }
  return Z;
}

}  // namespace detail

/// Point forecasts for steps 1..h on the original scale. Future innovations
/// are set to zero.
inline std::vector<double> forecast(const FittedSarimax& f, int h, const Matrix* future_exog = nullptr) {
  if (h < 1) throw ValidationError("forecast horizon must be >= 1");
  const Matrix Z = detail::differenced_future_exog(f, h, future_exog);
  const auto a = expand_ar(f.ar, f.sar, f.order.m);
  const auto b = expand_ma(f.ma, f.sma, f.order.m);
  std::vector<double> w(f.w_tail), e(f.resid_tail);
  std::vector<double> wf;
  for (int s = 0; s < h; ++s) {
    double v = f.intercept;
    for (std::size_t j = 0; j < f.beta.size(); ++j) v += f.beta[j] * Z(s, static_cast<Eigen::Index>(j));
    for (std::size_t j = 0; j < a.size(); ++j) v += a[j] * w[w.size() - 1 - j];
    for (std::size_t k = 0; k < b.size(); ++k) v += b[k] * e[e.size() - 1 - k];
    w.push_back(v);
    e.push_back(0.0);
    wf.push_back(v);
  }
  return integrate(wf, f.y_tail, f.order.d, f.order.D, f.order.m);
}

inline std::vector<double> forecast(const FittedSarimax& f, int h, const Matrix& future_exog) {
  return forecast(f, h, &future_exog);
}

/// Point forecasts with +-1.96 sigma_h Gaussian bands; sigma_h comes from the
/// psi weights of the integrated model.
inline ForecastBands forecast_with_bands(const FittedSarimax& f, int h, const Matrix* future_exog = nullptr) {
  ForecastBands out;
  out.mean = forecast(f, h, future_exog);
  auto ar_full = detail::poly_mul(
      [&] {
        const auto a = expand_ar(f.ar, f.sar, f.order.m);
        std::vector<double> p{1.0};
        for (double v : a) p.push_back(-v);
        return p;
      }(),
      differencing_polynomial(f.order.d, f.order.D, f.order.m));
  const auto b = expand_ma(f.ma, f.sma, f.order.m);
  std::vector<double> psi(static_cast<std::size_t>(h), 0.0);
  psi[0] = 1.0;
  for (int j = 1; j < h; ++j) {
    double v = static_cast<std::size_t>(j) <= b.size() ? b[static_cast<std::size_t>(j - 1)] : 0.0;
    for (int i = 1; i <= j && static_cast<std::size_t>(i) < ar_full.size(); ++i)
      v -= ar_full[static_cast<std::size_t>(i)] * psi[static_cast<std::size_t>(j - i)];
    psi[static_cast<std::size_t>(j)] = v;
  }
  double acc = 0.0;
  for (int s = 0; s < h; ++s) {
    acc += psi[static_cast<std::size_t>(s)] * psi[static_cast<std::size_t>(s)];
    const double se = std::sqrt(f.sigma2 * acc);
    out.stderr_.push_back(se);
    out.lower.push_back(out.mean[static_cast<std::size_t>(s)] - 1.96 * se);
    out.upper.push_back(out.mean[static_cast<std::size_t>(s)] + 1.96 * se);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Residual diagnostics
// ---------------------------------------------------------------------------

inline ResidualDiagnostics diagnostics(const FittedSarimax& f) {
  const auto& r = f.residuals;
  const auto n = static_cast<long>(r.size());
  if (n < 20) throw ValidationError("diagnostics need at least 20 residuals");
  const double mu = mean(r);
  const double sd = std::sqrt(variance(r, 0));
  if (!(sd > 0.0) || detail::is_constant(r)) throw ValidationError("diagnostics: residuals have zero variance");
  ResidualDiagnostics d;
  d.standardized_residuals.reserve(r.size());
  for (double v : r) d.standardized_residuals.push_back((v - mu) / sd);
  // Re-centre to remove rounding drift.
  const double m2 = mean(d.standardized_residuals);
  for (auto& v : d.standardized_residuals) v -= m2;

  std::vector<double> sorted = d.standardized_residuals;
  std::sort(sorted.begin(), sorted.end());
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  const double lo = sorted.front(), hi = sorted.back();
  int bins = 1;
  if (iqr > 0.0) {
    const double width = 2.0 * iqr / std::cbrt(static_cast<double>(n));
    bins = std::max(1, static_cast<int>(std::ceil((hi - lo) / width)));
  } else {
    bins = static_cast<int>(std::ceil(std::log2(static_cast<double>(n)))) + 1;  // Sturges
  }
  const double step = (hi - lo) / bins;
  for (int i = 0; i <= bins; ++i) d.histogram_edges.push_back(lo + step * i);
  d.histogram_edges.back() = hi;
  d.histogram_counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : sorted) {
    int b = step > 0 ? static_cast<int>((v - lo) / step) : 0;
    b = std::clamp(b, 0, bins - 1);
    ++d.histogram_counts[static_cast<std::size_t>(b)];
  }
  for (long i = 0; i < n; ++i) {
    const double prob = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    d.qq_points.emplace_back(normal_quantile(prob), sorted[static_cast<std::size_t>(i)]);
  }
  const int lb_lags = static_cast<int>(std::min<long>(10, n / 5));
  d.acf_values = acf(d.standardized_residuals, std::min<int>(20, static_cast<int>(n - 1)));
  d.ljung_box = ljung_box(d.standardized_residuals, lb_lags);
  return d;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const FittedSarimax& f) {
  nlohmann::json j;
  const auto& o = f.order;
  j["order"] = {{"p", o.p}, {"d", o.d}, {"q", o.q}, {"P", o.P}, {"D", o.D}, {"Q", o.Q}, {"m", o.m}};
  j["has_intercept"] = f.has_intercept;
  j["intercept"] = f.intercept;
  j["exog_names"] = f.exog_names;
  j["beta"] = f.beta;
  j["ar"] = f.ar;
  j["ma"] = f.ma;
  j["sar"] = f.sar;
  j["sma"] = f.sma;
  j["sigma2"] = f.sigma2;
  j["loglik"] = f.loglik;
  j["k"] = f.k;
  j["aic"] = f.aic;
  j["bic"] = f.bic;
  j["converged"] = f.converged;
  j["n_obs"] = f.n_obs;
  j["n_effective"] = f.n_effective;
  nlohmann::json st;
  st["y_tail"] = f.y_tail;
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < f.exog_tail.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(f.exog_tail.cols()));
    for (Eigen::Index c = 0; c < f.exog_tail.cols(); ++c) row[static_cast<std::size_t>(c)] = f.exog_tail(i, c);
    rows.push_back(std::move(row));
  }
  st["exog_tail"] = rows;
  st["w_tail"] = f.w_tail;
  st["resid_tail"] = f.resid_tail;
  j["state"] = st;
  return j;
}

inline FittedSarimax sarimax_from_json(const nlohmann::json& j) {
  try {
    FittedSarimax f;
    const auto& o = j.at("order");
    f.order = {o.at("p"), o.at("d"), o.at("q"), o.at("P"), o.at("D"), o.at("Q"), o.at("m")};
    f.order.validate();
    f.has_intercept = j.at("has_intercept");
    f.intercept = j.at("intercept");
    f.exog_names = j.at("exog_names").get<std::vector<std::string>>();
    f.beta = j.at("beta").get<std::vector<double>>();
    f.ar = j.at("ar").get<std::vector<double>>();
    f.ma = j.at("ma").get<std::vector<double>>();
    f.sar = j.at("sar").get<std::vector<double>>();
    f.sma = j.at("sma").get<std::vector<double>>();
    f.sigma2 = j.at("sigma2");
    f.loglik = j.at("loglik");
    f.k = j.at("k");
    f.aic = j.at("aic");
    f.bic = j.at("bic");
    f.converged = j.at("converged");
    f.n_obs = j.value("n_obs", 0);
    f.n_effective = j.value("n_effective", 0);
    const auto& st = j.at("state");
    f.y_tail = st.at("y_tail").get<std::vector<double>>();
    const auto rows = st.at("exog_tail").get<std::vector<std::vector<double>>>();
    f.exog_tail.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(f.beta.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != f.beta.size()) throw SchemaError("model JSON: exog_tail width mismatch");
      for (std::size_t c = 0; c < rows[i].size(); ++c)
        f.exog_tail(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
    f.w_tail = st.at("w_tail").get<std::vector<double>>();
    f.resid_tail = st.at("resid_tail").get<std::vector<double>>();
    if (static_cast<int>(f.ar.size()) != f.order.p || static_cast<int>(f.ma.size()) != f.order.q ||
        static_cast<int>(f.sar.size()) != f.order.P || static_cast<int>(f.sma.size()) != f.order.Q ||
        static_cast<int>(f.y_tail.size()) != f.order.diff_span() ||
        static_cast<int>(f.w_tail.size()) != f.order.ar_span() ||
        static_cast<int>(f.resid_tail.size()) != f.order.ma_span())
      throw SchemaError("model JSON: coefficient or state sizes do not match the order");
    if (!f.beta.empty() && f.exog_tail.rows() != f.order.diff_span())
      throw SchemaError("model JSON: exog_tail must have d + D*m rows");
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model JSON: ") + e.what());
  }
}

}  // namespace tdf

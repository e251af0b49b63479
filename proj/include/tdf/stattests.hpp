#pragma once

// Unit-root and seasonal-stability tests, correlograms, classical seasonal
// decomposition and portmanteau statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "tdf/differencing.hpp"
#include "tdf/error.hpp"
#include "tdf/linalg.hpp"

namespace tdf {

struct TestResult {
  double statistic = 0.0;
  std::optional<double> p_value;
  bool reject = false;
  double level = 0.05;
  std::optional<double> critical_value;  // at `level`, when tabulated
  int lags = 0;
};

enum class AdfRegression { Constant, ConstantTrend };

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double chi_squared_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(dof), x));
}

namespace detail {

inline bool is_constant(std::span<const double> x) {
  if (x.empty()) return true;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *hi - *lo <= 1e-12 * std::max(1.0, std::abs(*hi));
}

// MacKinnon (1994) response-surface coefficients for one integrated series
// (as distributed with statsmodels' adfvalues). p = Phi(sum_i c_i tau^i),
// using the small-p polynomial below tau_star and the large-p one above.
struct MacKinnonSurface {
  double tau_max, tau_min, tau_star;
  std::array<double, 3> small_p;
  std::array<double, 4> large_p;
};

inline const MacKinnonSurface& mackinnon_surface(AdfRegression reg) {
  static const MacKinnonSurface constant{
      2.74, -18.83, -1.61, {2.1659, 1.4412, 0.038269}, {1.7339, 0.93202, -0.12745, -0.010368}};
  static const MacKinnonSurface trend{
      0.7, -16.18, -2.89, {3.2512, 1.6047, 0.049588}, {2.5261, 0.61654, -0.37956, -0.060285}};
  return reg == AdfRegression::Constant ? constant : trend;
}

inline double mackinnon_p(double tau, AdfRegression reg) {
  const auto& s = mackinnon_surface(reg);
  if (tau > s.tau_max) return 1.0;
  if (tau < s.tau_min) return 0.0;
  double z = 0.0;
  if (tau <= s.tau_star) {
    for (std::size_t i = s.small_p.size(); i-- > 0;) z = z * tau + s.small_p[i];
  } else {
    for (std::size_t i = s.large_p.size(); i-- > 0;) z = z * tau + s.large_p[i];
  }
  return normal_cdf(z);
}

// MacKinnon (2010) finite-sample critical values: b0 + b1/T + b2/T^2 + b3/T^3.
inline std::optional<double> mackinnon_critical(double level, AdfRegression reg, double nobs) {
  static const std::array<std::array<double, 4>, 3> c{{{-3.43035, -6.5393, -16.786, -79.433},
                                                        {-2.86154, -2.8903, -4.234, -40.040},
                                                        {-2.56677, -1.5384, -2.809, 0.0}}};
  static const std::array<std::array<double, 4>, 3> ct{{{-3.95877, -9.0531, -28.428, -134.155},
                                                         {-3.41049, -4.3904, -9.036, -45.374},
                                                         {-3.12705, -2.5856, -3.925, -22.380}}};
  int row = -1;
  if (std::abs(level - 0.01) < 1e-12) row = 0;
  if (std::abs(level - 0.05) < 1e-12) row = 1;
  if (std::abs(level - 0.10) < 1e-12) row = 2;
  if (row < 0) return std::nullopt;
  const auto& b = (reg == AdfRegression::Constant ? c : ct)[static_cast<std::size_t>(row)];
  return b[0] + b[1] / nobs + b[2] / (nobs * nobs) + b[3] / (nobs * nobs * nobs);
}

}  // namespace detail

/// Design matrix and response of the augmented Dickey-Fuller regression:
/// dx_t on [x_{t-1}, dx_{t-1..t-k}, 1, (t)]. Exposed for testing.
struct AdfDesign {
  Matrix X;
  Vector y;
};

inline AdfDesign adf_design(std::span<const double> x, int lags, AdfRegression reg) {
  const auto n = static_cast<Eigen::Index>(x.size());
  const Eigen::Index k = lags;
  const Eigen::Index nobs = n - 1 - k;
  const Eigen::Index cols = 1 + k + 1 + (reg == AdfRegression::ConstantTrend ? 1 : 0);
  AdfDesign d{Matrix(nobs, cols), Vector(nobs)};
  for (Eigen::Index r = 0; r < nobs; ++r) {
    const Eigen::Index t = r + k + 1;
    d.y(r) = x[t] - x[t - 1];
    d.X(r, 0) = x[t - 1];
    for (Eigen::Index i = 1; i <= k; ++i) d.X(r, i) = x[t - i] - x[t - i - 1];
    d.X(r, k + 1) = 1.0;
    if (reg == AdfRegression::ConstantTrend) d.X(r, k + 2) = static_cast<double>(t);
  }
  return d;
}

/// Augmented Dickey-Fuller test with a fixed number of lagged differences.
/// The null is a unit root; `reject` means the series looks stationary.
/// A constant series yields statistic -inf and reject = true.
inline TestResult adf_test(std::span<const double> x, int max_lag, AdfRegression reg = AdfRegression::Constant,
                           double level = 0.05) {
  if (max_lag < 0) throw ValidationError("adf_test: negative lag count");
  if (static_cast<long>(x.size()) <= max_lag + 10)
    throw ValidationError("adf_test: series of length " + std::to_string(x.size()) + " too short for " +
                          std::to_string(max_lag) + " lags");
  if (!all_finite(x)) throw ValidationError("adf_test: non-finite values");
  TestResult out;
  out.level = level;
  out.lags = max_lag;
  const double nobs = static_cast<double>(x.size()) - 1.0 - max_lag;
  out.critical_value = detail::mackinnon_critical(level, reg, nobs);
  if (detail::is_constant(x)) {
    out.statistic = -std::numeric_limits<double>::infinity();
    out.p_value = 0.0;
    out.reject = true;
    return out;
  }
  const auto design = adf_design(x, max_lag, reg);
  const auto fit = ols(design.X, design.y);
  const double gamma = fit.coef(0);
  const double se = fit.stderr_(0);
  if (!std::isfinite(se) || se <= 0.0) {
    // Exact fit: treat strict mean reversion as stationary, anything else as not.
    out.statistic = gamma < -1e-10 ? -std::numeric_limits<double>::infinity() : 0.0;
  } else {
    out.statistic = gamma / se;
  }
  out.p_value = detail::mackinnon_p(out.statistic, reg);
  out.reject = *out.p_value < level;
  return out;
}

/// Default lag count used by `ndiffs`: floor((n - 1)^(1/3)).
inline int adf_default_lags(std::size_t n) {
  return static_cast<int>(std::floor(std::cbrt(static_cast<double>(n) - 1.0)));
}

/// Smallest d <= max_d whose d-times differenced series rejects the ADF unit
/// root null at `level`; max_d when none does.
inline int ndiffs(std::span<const double> x, int max_d = 2, double level = 0.05,
                  AdfRegression reg = AdfRegression::Constant) {
  if (x.size() < 24) throw ValidationError("ndiffs needs at least 24 observations");
  std::vector<double> cur(x.begin(), x.end());
  for (int d = 0; d < max_d; ++d) {
    if (detail::is_constant(cur)) return d;
    const int lags = adf_default_lags(cur.size());
    if (static_cast<long>(cur.size()) <= lags + 10) return d;
    if (adf_test(cur, lags, reg, level).reject) return d;
    cur = difference(cur, 1);
  }
  return max_d;
}

// ---------------------------------------------------------------------------
// Canova-Hansen
// ---------------------------------------------------------------------------

/// Critical value of the Canova-Hansen statistic at 5% for seasonal period m,
/// or nullopt outside the tabulated range 2..52.
inline std::optional<double> canova_hansen_critical(int m) {
  static const std::array<double, 11> small{0.4617146, 0.7479655, 1.0007818, 1.2375350, 1.4625240, 1.6920200,
                                            1.9043096, 2.1169602, 2.3268562, 2.5406922, 2.7391007};
  if (m < 2 || m > 52) return std::nullopt;
  if (m <= 12) return small[static_cast<std::size_t>(m - 2)];
  if (m == 24) return 5.098624;
  if (m == 52) return 10.341416;
  return 0.269 * std::pow(static_cast<double>(m), 0.928);
}

/// Canova-Hansen statistic for stability of the seasonal pattern, against all
/// seasonal frequencies jointly. `reject` means the seasonal pattern is
/// unstable (a seasonal unit root), i.e. seasonal differencing is warranted.
inline TestResult canova_hansen_test(std::span<const double> x, int m) {
  if (m < 2) throw ValidationError("canova_hansen: seasonal period must be >= 2");
  const auto n = static_cast<Eigen::Index>(x.size());
  if (n < 2 * m + 8)
    throw ValidationError("canova_hansen: series of length " + std::to_string(n) + " too short for m = " +
                          std::to_string(m));
  if (!all_finite(x)) throw ValidationError("canova_hansen: non-finite values");
  TestResult out;
  out.level = 0.05;
  out.critical_value = canova_hansen_critical(m);
  if (detail::is_constant(x)) return out;

  // Trigonometric seasonal regressors cos/sin(2 pi i t / m); the first m - 1
  // columns span the non-constant seasonal space.
  const Eigen::Index s = m - 1;
  Matrix R(n, s);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double tt = static_cast<double>(t + 1);
    for (Eigen::Index c = 0; c < s; ++c) {
      const double i = static_cast<double>(c / 2 + 1);
      const double a = 2.0 * std::numbers::pi * i * tt / m;
      R(t, c) = (c % 2 == 0) ? std::cos(a) : std::sin(a);
    }
  }
  Matrix design(n, s + 1);
  design << Vector::Ones(n), R;
  const Vector resid = as_vector(x) - design * least_squares(design, as_vector(x));

  const Matrix Faux = R.array().colwise() * resid.array();
  Matrix F = Faux;
  for (Eigen::Index t = 1; t < n; ++t) F.row(t) += F.row(t - 1);

  const auto trunc = static_cast<Eigen::Index>(std::round(m * std::pow(static_cast<double>(n) / 100.0, 0.25)));
  Matrix omnw = Matrix::Zero(s, s);
  for (Eigen::Index k = 1; k <= trunc && k < n; ++k) {
    const double w = 1.0 - static_cast<double>(k) / static_cast<double>(trunc + 1);
    omnw += w * (Faux.bottomRows(n - k).transpose() * Faux.topRows(n - k));
  }
  const Matrix omega = (Faux.transpose() * Faux + omnw + omnw.transpose()) / static_cast<double>(n);
  Eigen::FullPivLU<Matrix> lu(omega);
  if (lu.rank() < s) return out;
  const Matrix ftf = F.transpose() * F;
  out.statistic = (lu.solve(ftf)).trace() / (static_cast<double>(n) * static_cast<double>(n));
  out.reject = out.critical_value ? out.statistic > *out.critical_value : true;
  return out;
}

/// Seasonal differencing order D in {0, 1} from the Canova-Hansen test.
/// Periods beyond the tabulated range (m > 52) conservatively return 1.
inline int canova_hansen(std::span<const double> x, int m) {
  if (m > 52) {
    if (static_cast<long>(x.size()) < 2L * m + 8) throw ValidationError("canova_hansen: m too large for series");
    return detail::is_constant(x) ? 0 : 1;
  }
  return canova_hansen_test(x, m).reject ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Correlograms
// ---------------------------------------------------------------------------

struct AcfResult {
  std::vector<double> values;  // lags 0..nlags
  double band = 0.0;           // 1.96 / sqrt(n)
};

inline AcfResult acf(std::span<const double> x, int nlags) {
  const auto n = static_cast<long>(x.size());
  if (nlags < 0 || nlags >= n) throw ValidationError("acf: nlags must be in [0, length)");
  const double mu = mean(x);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mu) * (v - mu);
  if (c0 <= 0.0 || detail::is_constant(x)) throw ValidationError("acf: zero-variance series");
  AcfResult out;
  out.values.resize(static_cast<std::size_t>(nlags) + 1);
  for (long k = 0; k <= nlags; ++k) {
    double ck = 0.0;
    for (long t = 0; t + k < n; ++t) ck += (x[t] - mu) * (x[t + k] - mu);
    out.values[static_cast<std::size_t>(k)] = ck / c0;
  }
  out.band = 1.96 / std::sqrt(static_cast<double>(n));
  return out;
}

/// Partial autocorrelations at lags 0..nlags via Durbin-Levinson.
inline std::vector<double> pacf(std::span<const double> x, int nlags) {
  const auto r = acf(x, nlags).values;
  std::vector<double> out(static_cast<std::size_t>(nlags) + 1, 0.0);
  out[0] = 1.0;
  std::vector<double> phi, prev;
  double v = 1.0;
  for (int k = 1; k <= nlags; ++k) {
    double num = r[static_cast<std::size_t>(k)];
    for (int j = 1; j < k; ++j) num -= prev[static_cast<std::size_t>(j - 1)] * r[static_cast<std::size_t>(k - j)];
    const double a = v > 0.0 ? num / v : 0.0;
    phi.assign(static_cast<std::size_t>(k), 0.0);
    for (int j = 1; j < k; ++j)
      phi[static_cast<std::size_t>(j - 1)] =
          prev[static_cast<std::size_t>(j - 1)] - a * prev[static_cast<std::size_t>(k - j - 1)];
    phi[static_cast<std::size_t>(k - 1)] = a;
    v *= (1.0 - a * a);
    out[static_cast<std::size_t>(k)] = std::clamp(a, -1.0, 1.0);
    prev = phi;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decomposition and residual checks
// ---------------------------------------------------------------------------

/// Additive decomposition x = trend + seasonal + residual. Trend and residual
/// are NaN on the first and last floor(m/2) points.
struct Decomposition {
  std::vector<double> observed, trend, seasonal, residual;
  int period = 0;
};

inline Decomposition seasonal_decompose(std::span<const double> x, int m) {
  const auto n = static_cast<long>(x.size());
  if (m < 2) throw ValidationError("seasonal_decompose: period must be >= 2");
  if (n < 2L * m) throw ValidationError("seasonal_decompose: need at least two full periods");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Decomposition d;
  d.period = m;
  d.observed.assign(x.begin(), x.end());
  d.trend.assign(static_cast<std::size_t>(n), nan);
  d.residual.assign(static_cast<std::size_t>(n), nan);
  const long h = m / 2;
  for (long t = h; t < n - h; ++t) {
    double s = 0.0;
    if (m % 2 == 0) {
      s = 0.5 * x[t - h] + 0.5 * x[t + h];
      for (long j = t - h + 1; j <= t + h - 1; ++j) s += x[j];
    } else {
      for (long j = t - h; j <= t + h; ++j) s += x[j];
    }
    d.trend[static_cast<std::size_t>(t)] = s / m;
  }
  std::vector<double> sum(static_cast<std::size_t>(m), 0.0);
  std::vector<int> count(static_cast<std::size_t>(m), 0);
  for (long t = h; t < n - h; ++t) {
    sum[static_cast<std::size_t>(t % m)] += x[t] - d.trend[static_cast<std::size_t>(t)];
    ++count[static_cast<std::size_t>(t % m)];
  }
  std::vector<double> idx(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) idx[static_cast<std::size_t>(j)] = sum[static_cast<std::size_t>(j)] / count[static_cast<std::size_t>(j)];
  const double centre = mean(idx);
  for (auto& v : idx) v -= centre;
  d.seasonal.resize(static_cast<std::size_t>(n));
  for (long t = 0; t < n; ++t) d.seasonal[static_cast<std::size_t>(t)] = idx[static_cast<std::size_t>(t % m)];
  for (long t = h; t < n - h; ++t) {
    const auto i = static_cast<std::size_t>(t);
    d.residual[i] = x[t] - d.trend[i] - d.seasonal[i];
  }
  return d;
}

/// Ljung-Box portmanteau test on the first `lags` autocorrelations.
inline TestResult ljung_box(std::span<const double> residuals, int lags, double level = 0.05) {
  const auto n = static_cast<double>(residuals.size());
  if (lags < 1) throw ValidationError("ljung_box: lags must be >= 1");
  if (static_cast<double>(lags) >= n / 2.0) throw ValidationError("ljung_box: too few points for the requested lags");
  const auto r = acf(residuals, lags).values;
  double q = 0.0;
  for (int k = 1; k <= lags; ++k) q += r[static_cast<std::size_t>(k)] * r[static_cast<std::size_t>(k)] / (n - k);
  q *= n * (n + 2.0);
  TestResult out;
  out.statistic = q;
  out.p_value = chi_squared_sf(q, lags);
  out.level = level;
  out.reject = *out.p_value < level;
  out.lags = lags;
  return out;
}

}  // namespace tdf

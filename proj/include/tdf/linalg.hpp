#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tdf/error.hpp"

namespace tdf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Eigen::Map<const Vector> as_vector(std::span<const double> xs) {
  return {xs.data(), static_cast<Eigen::Index>(xs.size())};
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Variance with divisor n - ddof.
inline double variance(std::span<const double> xs, int ddof = 1) {
  const auto n = static_cast<long>(xs.size());
  if (n - ddof <= 0) return 0.0;
  const double mu = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return ss / static_cast<double>(n - ddof);
}

/// Quantile by linear interpolation between closest ranks (h = (n-1)p).
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::span<const double> xs, double p) {
  std::vector<double> s(xs.begin(), xs.end());
  std::sort(s.begin(), s.end());
  return quantile_sorted(s, p);
}

inline bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Least squares via complete orthogonal decomposition; minimum-norm solution
/// when the design is rank deficient.
inline Vector least_squares(const Matrix& X, const Vector& y) {
  return X.completeOrthogonalDecomposition().solve(y);
}

/// Result of an ordinary least squares fit with per-coefficient standard errors.
struct OlsFit {
  Vector coef;
  Vector stderr_;
  Vector residuals;
  double ssr = 0.0;
  long dof = 0;
  long rank = 0;
};

inline OlsFit ols(const Matrix& X, const Vector& y) {
  OlsFit out;
  Eigen::ColPivHouseholderQR<Matrix> qr(X);
  out.rank = qr.rank();
  out.coef = qr.solve(y);
  out.residuals = y - X * out.coef;
  out.ssr = out.residuals.squaredNorm();
  out.dof = X.rows() - X.cols();
  out.stderr_ = Vector::Constant(X.cols(), std::numeric_limits<double>::quiet_NaN());
  if (out.rank == X.cols() && out.dof > 0) {
    const double s2 = out.ssr / static_cast<double>(out.dof);
    const Matrix xtx_inv = (X.transpose() * X).ldlt().solve(Matrix::Identity(X.cols(), X.cols()));
    out.stderr_ = (s2 * xtx_inv.diagonal().array()).sqrt();
  }
  return out;
}

}  // namespace tdf

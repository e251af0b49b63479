#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "tdf/linalg.hpp"

namespace tdf::optim {

struct Options {
  int max_iter = 500;
  double rel_tol = 1e-8;  // relative change of the objective between iterations
  double grad_tol = 1e-7;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};

struct Result {
  Vector x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

using Objective = std::function<double(const Vector&)>;

namespace detail {

inline Vector clamp(Vector x, const Options& opt) {
  return x.cwiseMax(opt.lower).cwiseMin(opt.upper);
}

inline bool rel_converged(double prev, double cur, double tol) {
  return std::abs(prev - cur) <= tol * std::max(1.0, std::abs(cur));
}

}  // namespace detail

/// Central-difference gradient, one-sided at the box edges.
inline Vector numeric_gradient(const Objective& f, const Vector& x, double fx, const Options& opt, int& evals) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const bool up_ok = xp(i) <= opt.upper, down_ok = xm(i) >= opt.lower;
    if (up_ok && down_ok) {
      g(i) = (f(xp) - f(xm)) / (2 * h);
      evals += 2;
    } else if (up_ok) {
      g(i) = (f(xp) - fx) / h;
      ++evals;
    } else {
      g(i) = (fx - f(xm)) / h;
      ++evals;
    }
    if (!std::isfinite(g(i))) g(i) = 0.0;
  }
  return g;
}

/// Projected BFGS on a box with backtracking (Armijo) line search.
inline Result bfgs(const Objective& f, Vector x0, const Options& opt = {}) {
  Result r;
  const Eigen::Index n = x0.size();
  Vector x = detail::clamp(std::move(x0), opt);
  double fx = f(x);
  r.evaluations = 1;
  if (n == 0 || !std::isfinite(fx)) {
    r.x = x;
    r.value = fx;
    r.converged = n == 0 && std::isfinite(fx);
    return r;
  }
  Matrix H = Matrix::Identity(n, n);
  Vector g = numeric_gradient(f, x, fx, opt, r.evaluations);
  for (int it = 0; it < opt.max_iter; ++it) {
    r.iterations = it + 1;
    // Freeze coordinates pinned at a bound with the gradient pushing outward.
    Vector gfree = g;
    for (Eigen::Index i = 0; i < n; ++i)
      if ((x(i) <= opt.lower && g(i) > 0) || (x(i) >= opt.upper && g(i) < 0)) gfree(i) = 0.0;
    if (gfree.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
      r.converged = true;
      break;
    }
    Vector dir = -H * gfree;
    if (dir.dot(gfree) >= 0) {
      H.setIdentity();
      dir = -gfree;
    }
    double step = 1.0;
    Vector xn = x;
    double fn = fx;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      xn = detail::clamp(x + step * dir, opt);
      fn = f(xn);
      ++r.evaluations;
      if (std::isfinite(fn) && fn <= fx + 1e-4 * gfree.dot(xn - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No descent along this direction; restart from steepest descent once.
      if (!H.isIdentity()) {
        H.setIdentity();
        continue;
      }
      r.converged = gfree.lpNorm<Eigen::Infinity>() < 1e-4;
      break;
    }
    const Vector gn = numeric_gradient(f, xn, fn, opt, r.evaluations);
    const Vector s = xn - x;
    const Vector yv = gn - g;
    const double prev = fx;
    x = xn;
    fx = fn;
    g = gn;
    const double sy = s.dot(yv);
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Matrix I = Matrix::Identity(n, n);
      H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) + rho * s * s.transpose();
    }
    if (detail::rel_converged(prev, fx, opt.rel_tol) && s.lpNorm<Eigen::Infinity>() < 1e-5) {
      r.converged = true;
      break;
    }
  }
  r.x = x;
  r.value = fx;
  return r;
}

/// Nelder-Mead simplex with clamping to the box.
inline Result nelder_mead(const Objective& f, Vector x0, const Options& opt = {}, double initial_step = 0.25) {
  Result r;
  const Eigen::Index n = x0.size();
  x0 = detail::clamp(std::move(x0), opt);
  if (n == 0) {
    r.x = x0;
    r.value = f(x0);
    r.evaluations = 1;
    r.converged = std::isfinite(r.value);
    return r;
  }
  auto eval = [&](const Vector& v) {
    ++r.evaluations;
    const double fv = f(detail::clamp(v, opt));
    return std::isfinite(fv) ? fv : std::numeric_limits<double>::infinity();
  };
  std::vector<Vector> pts(static_cast<std::size_t>(n + 1), x0);
  std::vector<double> vals(static_cast<std::size_t>(n + 1));
  for (Eigen::Index i = 0; i < n; ++i) pts[static_cast<std::size_t>(i + 1)](i) += initial_step;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i] = detail::clamp(pts[i], opt);
    vals[i] = eval(pts[i]);
  }
  std::vector<std::size_t> order(pts.size());
  const int max_iter = opt.max_iter * static_cast<int>(std::max<Eigen::Index>(n, 1)) * 2;
  for (int it = 0; it < max_iter; ++it) {
    r.iterations = it + 1;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    if (std::isfinite(vals[worst]) && detail::rel_converged(vals[best], vals[worst], opt.rel_tol)) {
      r.converged = true;
      break;
    }
    Vector centroid = Vector::Zero(n);
    for (std::size_t i = 0; i + 1 < order.size(); ++i) centroid += pts[order[i]];
    centroid /= static_cast<double>(n);
    const Vector xr = detail::clamp(centroid + (centroid - pts[worst]), opt);
    const double fr = eval(xr);
    if (fr < vals[best]) {
      const Vector xe = detail::clamp(centroid + 2.0 * (centroid - pts[worst]), opt);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const Vector xc = detail::clamp(centroid + 0.5 * (pts[worst] - centroid), opt);
    const double fc = eval(xc);
    if (fc < vals[worst]) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == best) continue;
      pts[i] = detail::clamp(pts[best] + 0.5 * (pts[i] - pts[best]), opt);
      vals[i] = eval(pts[i]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  r.x = pts[best];
  r.value = vals[best];
  return r;
}

}  // namespace tdf::optim

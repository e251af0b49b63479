#pragma once

#include <span>
#include <vector>

#include "tdf/error.hpp"

namespace tdf {

/// Coefficients c_0..c_L of (1 - B)^d (1 - B^m)^D, with c_0 = 1.
inline std::vector<double> differencing_polynomial(int d, int D, int m) {
  std::vector<double> poly{1.0};
  auto multiply = [&](int lag) {
    std::vector<double> next(poly.size() + static_cast<std::size_t>(lag), 0.0);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i] += poly[i];
      next[i + static_cast<std::size_t>(lag)] -= poly[i];
    }
    poly = std::move(next);
  };
  for (int i = 0; i < d; ++i) multiply(1);
  for (int i = 0; i < D; ++i) multiply(m);
  return poly;
}

/// Applies (1 - B)^d (1 - B^m)^D; the result is shorter by d + D*m.
inline std::vector<double> difference(std::span<const double> x, int d, int D = 0, int m = 1) {
  if (d < 0 || D < 0 || (D > 0 && m < 1)) throw ValidationError("invalid differencing orders");
  std::vector<double> out(x.begin(), x.end());
  auto apply = [&](std::size_t lag) {
    if (out.size() <= lag) throw ValidationError("series too short to difference");
    std::vector<double> next(out.size() - lag);
    for (std::size_t t = lag; t < out.size(); ++t) next[t - lag] = out[t] - out[t - lag];
    out = std::move(next);
  };
  for (int i = 0; i < D; ++i) apply(static_cast<std::size_t>(m));
  for (int i = 0; i < d; ++i) apply(1);
  return out;
}

/// Inverts `difference`: given the last d + D*m values of the undifferenced
/// series (`history`, oldest first) and new differenced values, returns the
/// continuation of the undifferenced series.
inline std::vector<double> integrate(std::span<const double> diffed, std::span<const double> history, int d,
                                     int D = 0, int m = 1) {
  if (d < 0 || D < 0 || (D > 0 && m < 1)) throw ValidationError("invalid differencing orders");
  // Lags in the order `difference` applies them; undone in reverse so that
  // each addition mirrors the subtraction that produced its input.
  std::vector<std::size_t> lags(static_cast<std::size_t>(D), static_cast<std::size_t>(m));
  lags.insert(lags.end(), static_cast<std::size_t>(d), 1);
  std::size_t total = 0;
  for (auto l : lags) total += l;
  if (history.size() < total) throw ValidationError("integration needs " + std::to_string(total) + " history values");
  // levels[k]: history differenced by the first k factors.
  std::vector<std::vector<double>> levels{std::vector<double>(history.end() - static_cast<long>(total), history.end())};
  for (std::size_t k = 0; k + 1 < lags.size(); ++k) {
    const auto& prev = levels.back();
    std::vector<double> next;
    for (std::size_t t = lags[k]; t < prev.size(); ++t) next.push_back(prev[t] - prev[t - lags[k]]);
    levels.push_back(std::move(next));
  }
  std::vector<double> cur(diffed.begin(), diffed.end());
  for (std::size_t k = lags.size(); k-- > 0;) {
    const std::size_t lag = lags[k];
    std::vector<double> buf(levels[k].end() - static_cast<long>(lag), levels[k].end());
    for (double w : cur) buf.push_back(w + buf[buf.size() - lag]);
    cur.assign(buf.begin() + static_cast<long>(lag), buf.end());
  }
  return cur;
}

}  // namespace tdf

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "tdf/error.hpp"
#include "tdf/linalg.hpp"
#include "tdf/parallel.hpp"
#include "tdf/sarimax.hpp"
#include "tdf/stattests.hpp"

namespace tdf {

enum class Criterion { Aic, Bic };

inline std::string to_string(Criterion c) { return c == Criterion::Aic ? "aic" : "bic"; }

inline Criterion parse_criterion(const std::string& s) {
  if (s == "aic") return Criterion::Aic;
  if (s == "bic") return Criterion::Bic;
  throw ValidationError("unknown criterion '" + s + "' (expected aic or bic)");
}

struct SearchConfig {
  int max_p = 5, max_q = 5;
  int max_P = 2, max_Q = 2;
  int max_d = 2, max_D = 1;
  bool seasonal = false;
  int m = 1;
  Criterion criterion = Criterion::Aic;
  bool stepwise = true;
  int max_steps = 94;
  double level = 0.05;
  AdfRegression adf_regression = AdfRegression::Constant;
  std::optional<int> fixed_d, fixed_D;  // skip the unit-root tests
  FitOptions fit;                        // intercept flag here is ignored
  int threads = 1;

  void validate() const {
    if (max_p < 0 || max_q < 0 || max_P < 0 || max_Q < 0 || max_d < 0 || max_D < 0)
      throw ValidationError("search bounds must be non-negative");
    if (max_d > 2 || max_D > 1) throw ValidationError("search bounds: d <= 2 and D <= 1");
    if (seasonal && m < 2) throw ValidationError("seasonal search needs m >= 2");
  }
};

struct TraceEntry {
  SarimaxOrder order;
  bool intercept = false;
  double aic = 0.0, bic = 0.0;
  bool converged = false;
  std::vector<std::string> columns;  // filled by backward_select
  std::string error;                 // non-empty when the fit threw
};

struct SearchTrace {
  std::vector<TraceEntry> entries;
  long winner = -1;
};

inline nlohmann::json to_json(const TraceEntry& e) {
  const auto& o = e.order;
  nlohmann::json j;
  j["order"] = {o.p, o.d, o.q, o.P, o.D, o.Q, o.m};
  j["intercept"] = e.intercept;
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  j["aic"] = num(e.aic);
  j["bic"] = num(e.bic);
  j["converged"] = e.converged;
  if (!e.columns.empty()) j["columns"] = e.columns;
  return j;
}

/// JSON-lines rendering of a trace, one candidate per line.
inline std::string trace_jsonl(const SearchTrace& t) {
  std::string out;
  for (const auto& e : t.entries) out += to_json(e).dump() + "\n";
  return out;
}

class SearchError : public Error {
 public:
  SearchError(const std::string& what, SearchTrace trace)
      : Error(ErrorKind::Numerical, what), trace_(std::move(trace)) {}
  const SearchTrace& trace() const noexcept { return trace_; }

 private:
  SearchTrace trace_;
};

struct SearchResult {
  FittedSarimax fit;
  SearchTrace trace;
};

namespace detail {

inline double criterion_value(const FittedSarimax& f, Criterion c) { return c == Criterion::Aic ? f.aic : f.bic; }
inline double criterion_value(const TraceEntry& e, Criterion c) { return c == Criterion::Aic ? e.aic : e.bic; }

inline int param_count(const SarimaxOrder& o, bool intercept) { return o.arma_count() + (intercept ? 1 : 0); }

// Strict total order on candidates: criterion, then parameter count, then
// lexicographic (p, q, P, Q, intercept).
inline bool better(double va, const SarimaxOrder& a, bool ia, double vb, const SarimaxOrder& b, bool ib) {
  if (va != vb) return va < vb;
  const int ka = param_count(a, ia), kb = param_count(b, ib);
  if (ka != kb) return ka < kb;
  return std::tie(a.p, a.q, a.P, a.Q, ia) < std::tie(b.p, b.q, b.P, b.Q, ib);
}

// Fits with a root this close to the unit circle sit on the boundary of the
// admissible region (typically near-cancelling AR/MA factors); they are
// excluded from selection.
inline bool near_unit_root(const FittedSarimax& f) {
  constexpr double kMinRoot = 1.01;
  const auto a = expand_ar(f.ar, f.sar, f.order.m);
  auto b = expand_ma(f.ma, f.sma, f.order.m);
  for (auto& v : b) v = -v;
  return min_root_modulus(a) < kMinRoot || min_root_modulus(b) < kMinRoot;
}

}  // namespace detail

/// Chooses D (Canova-Hansen, when seasonal) and then d (ADF) for y.
inline std::pair<int, int> choose_differencing(std::span<const double> y, const SearchConfig& cfg) {
  int D = 0;
  if (cfg.fixed_D) {
    D = *cfg.fixed_D;
  } else if (cfg.seasonal && cfg.max_D > 0 && static_cast<long>(y.size()) >= 2L * cfg.m + 8) {
    D = canova_hansen(y, cfg.m);
  }
  D = std::min(D, cfg.max_D);
  int d = 0;
  if (cfg.fixed_d) {
    d = *cfg.fixed_d;
  } else {
    const auto x = difference(y, 0, D, cfg.m);
    if (x.size() >= 24) d = ndiffs(x, cfg.max_d, cfg.level, cfg.adf_regression);
  }
  return {std::min(d, cfg.max_d), D};
}

/// Automatic (S)ARIMA(X) order selection.
inline SearchResult auto_arima(std::span<const double> y, const Matrix& exog, const SearchConfig& cfg) {
  cfg.validate();
  if (y.size() < 24) throw ValidationError("auto_arima needs at least 24 observations");
  const auto [d, D] = choose_differencing(y, cfg);
  const bool seasonal = cfg.seasonal && cfg.m > 1;
  const int m = seasonal ? cfg.m : 1;
  const int Dm = seasonal ? D : 0;
  const bool intercept_allowed = d + Dm < 2;
  const int max_P = seasonal ? cfg.max_P : 0, max_Q = seasonal ? cfg.max_Q : 0;

  SearchResult res;
  using Key = std::tuple<int, int, int, int, bool>;
  std::map<Key, std::size_t> cache;  // key -> trace index
  std::map<std::size_t, FittedSarimax> fits;

  auto in_bounds = [&](int p, int q, int P, int Q) {
    return p >= 0 && q >= 0 && P >= 0 && Q >= 0 && p <= cfg.max_p && q <= cfg.max_q && P <= max_P && Q <= max_Q;
  };
  auto make_order = [&](int p, int q, int P, int Q) { return SarimaxOrder{p, d, q, P, Dm, Q, m}; };

  // Fits a batch of candidates (deduplicated against the cache) and returns
  // their trace indices in request order.
  auto evaluate = [&](const std::vector<Key>& keys) {
    std::vector<Key> fresh;
    for (const auto& k : keys)
      if (!cache.count(k) && std::find(fresh.begin(), fresh.end(), k) == fresh.end()) fresh.push_back(k);
    std::vector<TraceEntry> entries(fresh.size());
    std::vector<std::optional<FittedSarimax>> out(fresh.size());
    parallel_for(fresh.size(), cfg.threads, [&](std::size_t i) {
      const auto [p, q, P, Q, ic] = fresh[i];
      TraceEntry& e = entries[i];
      e.order = make_order(p, q, P, Q);
      e.intercept = ic;
      e.aic = e.bic = std::numeric_limits<double>::infinity();
      try {
        FitOptions fo = cfg.fit;
        fo.intercept = ic;
        auto f = fit(y, exog, e.order, fo);
        e.aic = f.aic;
        e.bic = f.bic;
        e.converged = f.converged && std::isfinite(detail::criterion_value(f, cfg.criterion));
        if (e.converged && detail::near_unit_root(f)) {
          e.converged = false;
          e.error = "AR or MA root within 1.01 of the unit circle";
        }
        out[i] = std::move(f);
      } catch (const Error& ex) {
        e.error = ex.what();
      }
    });
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      const std::size_t idx = res.trace.entries.size();
      res.trace.entries.push_back(std::move(entries[i]));
      cache[fresh[i]] = idx;
      if (out[i]) fits.emplace(idx, std::move(*out[i]));
    }
    std::vector<std::size_t> idx;
    for (const auto& k : keys) idx.push_back(cache.at(k));
    return idx;
  };

  long best = -1;
  auto consider = [&](std::size_t i) {
    const auto& e = res.trace.entries[i];
    if (!e.converged) return false;
    if (best < 0) {
      best = static_cast<long>(i);
      return true;
    }
    const auto& b = res.trace.entries[static_cast<std::size_t>(best)];
    if (detail::better(detail::criterion_value(e, cfg.criterion), e.order, e.intercept,
                       detail::criterion_value(b, cfg.criterion), b.order, b.intercept)) {
      best = static_cast<long>(i);
      return true;
    }
    return false;
  };

  if (!cfg.stepwise) {
    std::vector<Key> keys;
    for (int p = 0; p <= cfg.max_p; ++p)
      for (int q = 0; q <= cfg.max_q; ++q)
        for (int P = 0; P <= max_P; ++P)
          for (int Q = 0; Q <= max_Q; ++Q) {
            keys.emplace_back(p, q, P, Q, false);
            if (intercept_allowed) keys.emplace_back(p, q, P, Q, true);
          }
    for (auto i : evaluate(keys)) consider(i);
  } else {
    std::vector<Key> starts;
    auto add_start = [&](int p, int q, int P, int Q, bool ic) {
      p = std::min(p, cfg.max_p);
      q = std::min(q, cfg.max_q);
      P = std::min(P, max_P);
      Q = std::min(Q, max_Q);
      starts.emplace_back(p, q, P, Q, ic);
    };
    add_start(2, 2, 1, 1, intercept_allowed);
    add_start(0, 0, 0, 0, intercept_allowed);
    add_start(1, 0, 1, 0, intercept_allowed);
    add_start(0, 1, 0, 1, intercept_allowed);
    if (intercept_allowed) add_start(0, 0, 0, 0, false);
    for (auto i : evaluate(starts)) consider(i);

    for (int step = 0; step < cfg.max_steps && best >= 0; ++step) {
      const auto& cur = res.trace.entries[static_cast<std::size_t>(best)];
      const int p = cur.order.p, q = cur.order.q, P = cur.order.P, Q = cur.order.Q;
      const bool ic = cur.intercept;
      std::vector<Key> nb;
      auto push = [&](int a, int b, int c, int e, bool i) {
        if (in_bounds(a, b, c, e)) nb.emplace_back(a, b, c, e, i);
      };
      push(p, q, P - 1, Q, ic);
      push(p, q, P + 1, Q, ic);
      push(p, q, P, Q - 1, ic);
      push(p, q, P, Q + 1, ic);
      push(p, q, P - 1, Q - 1, ic);
      push(p, q, P + 1, Q + 1, ic);
      push(p - 1, q, P, Q, ic);
      push(p + 1, q, P, Q, ic);
      push(p, q - 1, P, Q, ic);
      push(p, q + 1, P, Q, ic);
      push(p - 1, q - 1, P, Q, ic);
      push(p + 1, q + 1, P, Q, ic);
      if (intercept_allowed) push(p, q, P, Q, !ic);
      // The whole neighborhood is evaluated (in parallel when enabled) and
      // the best improving neighbor becomes the new centre.
      bool moved = false;
      for (auto i : evaluate(nb)) moved = consider(i) || moved;
      if (!moved) break;
    }
  }

  if (best < 0) {
    std::string why = "auto_arima: no candidate model converged";
    for (const auto& e : res.trace.entries)
      if (!e.error.empty()) {
        why += " (last error: " + e.error + ")";
        break;
      }
    throw SearchError(why, res.trace);
  }
  res.trace.winner = best;
  res.fit = fits.at(static_cast<std::size_t>(best));
  return res;
}

inline SearchResult auto_arima(std::span<const double> y, const SearchConfig& cfg) {
  return auto_arima(y, Matrix(0, 0), cfg);
}

struct BackwardResult {
  std::vector<std::string> columns;
  FittedSarimax fit;
  SearchTrace trace;
};

inline Matrix select_columns(const Matrix& exog, const std::vector<int>& idx) {
  Matrix out(exog.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = exog.col(idx[j]);
  return out;
}

/// Backward elimination of exogenous columns. Each round scores every
/// single-column removal (re-running auto_arima unless `fast`, which keeps the
/// initial order) and drops the column whose removal helps most.
inline BackwardResult backward_select(std::span<const double> y, const Matrix& exog,
                                      const std::vector<std::string>& names, const SearchConfig& cfg,
                                      bool fast = false) {
  if (exog.cols() < 1) throw ValidationError("backward_select needs at least one exogenous column");
  if (static_cast<Eigen::Index>(names.size()) != exog.cols())
    throw ValidationError("backward_select: column names do not match exog width");

  BackwardResult out;
  std::vector<int> current(static_cast<std::size_t>(exog.cols()));
  for (int j = 0; j < static_cast<int>(current.size()); ++j) current[static_cast<std::size_t>(j)] = j;

  auto names_of = [&](const std::vector<int>& idx) {
    std::vector<std::string> v;
    for (int j : idx) v.push_back(names[static_cast<std::size_t>(j)]);
    return v;
  };
  auto options_for = [&](const std::vector<int>& idx) {
    SearchConfig c = cfg;
    c.fit.exog_names = names_of(idx);
    return c;
  };

  SearchResult init;
  try {
    init = auto_arima(y, exog, options_for(current));
  } catch (const SearchError& e) {
    throw SearchError(std::string("backward_select: initial fit failed: ") + e.what(), e.trace());
  }
  const SarimaxOrder frozen = init.fit.order;
  const bool frozen_ic = init.fit.has_intercept;
  // With a fixed differencing order all candidate sets share it.
  SearchConfig sub_cfg = cfg;
  sub_cfg.fixed_d = frozen.d;
  sub_cfg.fixed_D = frozen.D;
  sub_cfg.threads = 1;

  FittedSarimax best_fit = init.fit;
  auto record = [&](const FittedSarimax& f, const std::vector<int>& idx, bool ok, const std::string& err) {
    TraceEntry e;
    e.order = f.order;
    e.intercept = f.has_intercept;
    e.aic = ok ? f.aic : std::numeric_limits<double>::infinity();
    e.bic = ok ? f.bic : std::numeric_limits<double>::infinity();
    e.converged = ok && f.converged;
    e.columns = names_of(idx);
    e.error = err;
    out.trace.entries.push_back(std::move(e));
    return out.trace.entries.size() - 1;
  };
  long winner = static_cast<long>(record(best_fit, current, true, ""));

  while (!current.empty()) {
    const std::size_t nc = current.size();
    std::vector<std::optional<FittedSarimax>> cand(nc);
    std::vector<std::string> errors(nc);
    parallel_for(nc, cfg.threads, [&](std::size_t r) {
      std::vector<int> idx = current;
      idx.erase(idx.begin() + static_cast<long>(r));
      const Matrix X = select_columns(exog, idx);
      SearchConfig c = sub_cfg;
      c.fit.exog_names = names_of(idx);
      try {
        if (fast) {
          FitOptions fo = c.fit;
          fo.intercept = frozen_ic;
          cand[r] = fit(y, X, frozen, fo);
        } else {
          cand[r] = auto_arima(y, X, c).fit;
        }
      } catch (const Error& e) {
        errors[r] = e.what();
      }
    });
    long pick = -1;
    std::size_t pick_r = 0;
    for (std::size_t r = 0; r < nc; ++r) {
      std::vector<int> idx = current;
      idx.erase(idx.begin() + static_cast<long>(r));
      const bool ok = cand[r].has_value() && cand[r]->converged;
      const auto ti = static_cast<long>(record(cand[r] ? *cand[r] : FittedSarimax{}, idx, ok, errors[r]));
      if (!ok) continue;
      const auto& f = *cand[r];
      const double v = detail::criterion_value(f, cfg.criterion);
      const auto& ref = out.trace.entries[static_cast<std::size_t>(pick >= 0 ? pick : winner)];
      const double rv = detail::criterion_value(ref, cfg.criterion);
      // Removal must strictly improve on the current set; among removals the
      // usual tie-breaks apply.
      const bool take = pick < 0 ? v < rv : detail::better(v, f.order, f.has_intercept, rv, ref.order, ref.intercept);
      if (take) {
        pick = ti;
        pick_r = r;
      }
    }
    if (pick < 0) break;
    best_fit = std::move(*cand[pick_r]);
    current.erase(current.begin() + static_cast<long>(pick_r));
    winner = pick;
  }
  out.trace.winner = winner;
  out.columns = names_of(current);
  out.fit = best_fit;
  return out;
}

}  // namespace tdf

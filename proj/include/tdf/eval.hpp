#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "tdf/data.hpp"
#include "tdf/error.hpp"
#include "tdf/linalg.hpp"
#include "tdf/pipelines.hpp"

namespace tdf {

struct MetricSet {
  double mape = 0.0, mae = 0.0, rmse = 0.0;
  long n_scored = 0, n_skipped_zero = 0;
};

namespace detail {

inline void check_pairs(std::span<const double> a, std::span<const double> p, const char* what) {
  if (a.size() != p.size()) throw ValidationError(std::string(what) + ": actual and predicted lengths differ");
  if (a.empty()) throw ValidationError(std::string(what) + ": empty input");
}

}  // namespace detail

/// Mean absolute percentage error in percent; zero actuals are skipped and
/// counted in `skipped`.
inline double mape(std::span<const double> actual, std::span<const double> predicted, long* skipped = nullptr) {
  detail::check_pairs(actual, predicted, "mape");
  double s = 0.0;
  long n = 0, z = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] == 0.0) {
      ++z;
      continue;
    }
    s += std::abs(actual[i] - predicted[i]) / std::abs(actual[i]);
    ++n;
  }
  if (skipped) *skipped = z;
  if (n == 0) throw ValidationError("mape: every actual value is zero");
  return 100.0 * s / static_cast<double>(n);
}

inline double mae(std::span<const double> actual, std::span<const double> predicted) {
  detail::check_pairs(actual, predicted, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += std::abs(actual[i] - predicted[i]);
  return s / static_cast<double>(actual.size());
}

inline double rmse(std::span<const double> actual, std::span<const double> predicted) {
  detail::check_pairs(actual, predicted, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
  return std::sqrt(s / static_cast<double>(actual.size()));
}

inline MetricSet compute_metrics(std::span<const double> actual, std::span<const double> predicted) {
  MetricSet m;
  m.mape = mape(actual, predicted, &m.n_skipped_zero);
  m.mae = mae(actual, predicted);
  m.rmse = rmse(actual, predicted);
  m.n_scored = static_cast<long>(actual.size()) - m.n_skipped_zero;
  return m;
}

// ---------------------------------------------------------------------------
// Walk-forward validation
// ---------------------------------------------------------------------------

struct WalkForwardResult {
  std::size_t initial_train = 0;
  std::vector<double> predictions, actuals;
  std::optional<MetricSet> metrics;  // absent when nothing was scored
  bool converged = true;
  std::optional<std::size_t> failure_index;  // period whose refit failed
  std::string failure;
};

/// Greedy walk-forward over `panel`: `fit(train)` builds the first model on
/// rows [0, floor(f n)), then each step predicts the next period with its
/// actual exog row, absorbs the actual value and calls `refit(model, train)`.
template <class Fit, class Refit>
WalkForwardResult walk_forward(const ProjectPanel& panel, Fit&& fit, Refit&& refit, double initial_fraction,
                               std::size_t min_train) {
  if (!(initial_fraction > 0.0 && initial_fraction < 1.0)) throw ValidationError("initial fraction must be in (0,1)");
  const std::size_t n = panel.size();
  const auto n0 = static_cast<std::size_t>(std::floor(initial_fraction * static_cast<double>(n)));
  if (n0 < std::max<std::size_t>(min_train, 1))
    throw ValidationError("walk_forward: initial window of " + std::to_string(n0) + " rows is below the minimum of " +
                          std::to_string(min_train));
  if (n0 >= n) throw ValidationError("walk_forward: no test periods");
  WalkForwardResult res;
  res.initial_train = n0;
  std::unique_ptr<Forecaster> model = fit(panel.slice(0, n0));
  res.converged = model->converged();
  for (std::size_t i = n0; i < n; ++i) {
    const Vector row = panel.exog.row(static_cast<Eigen::Index>(i)).transpose();
    res.predictions.push_back(model->predict_next(&row));
    res.actuals.push_back(panel.y[i]);
    if (i + 1 == n) break;
    try {
      model = refit(*model, panel.slice(0, i + 1));
      res.converged = res.converged && model->converged();
    } catch (const Error& e) {
      res.failure_index = i + 1;
      res.failure = e.what();
      res.converged = false;
      break;
    }
  }
  if (!res.predictions.empty()) {
    try {
      res.metrics = compute_metrics(res.actuals, res.predictions);
    } catch (const ValidationError&) {
      res.metrics.reset();  // all actuals zero
    }
  }
  return res;
}

struct WalkForwardOptions {
  double initial_fraction = 0.8;
  bool full_refit = false;  // re-run the whole search at every step
};

inline WalkForwardResult walk_forward(const ProjectPanel& panel, const ForecasterSpec& spec,
                                      const WalkForwardOptions& opt = {}) {
  const std::size_t min_train = spec.kind == ForecasterKind::Naive ? 1
                                : spec.kind == ForecasterKind::Regressor ? 10
                                                                          : 24;
  auto fit = [&](const ProjectPanel& train) { return fit_forecaster(spec, train); };
  auto refit = [&](const Forecaster& f, const ProjectPanel& train) {
    return opt.full_refit ? fit_forecaster(spec, train) : f.refit(train);
  };
  return walk_forward(panel, fit, refit, opt.initial_fraction, min_train);
}

// ---------------------------------------------------------------------------
// Long horizon
// ---------------------------------------------------------------------------

/// Absolute percentage error of the step-h forecast for h = 1..max_h, from a
/// single fit on the first floor(train_fraction n) rows. Zero actuals give NaN.
inline std::vector<double> long_term(const Forecaster& model, const ProjectPanel& panel, std::size_t n_train,
                                     int max_h, ExogPolicy policy) {
  if (max_h < 1) throw ValidationError("max_h must be >= 1");
  if (n_train + static_cast<std::size_t>(max_h) > panel.size())
    throw ValidationError("horizon " + std::to_string(max_h) + " exceeds the test window of " +
                          std::to_string(panel.size() - n_train) + " periods");
  const Matrix fut = panel.exog.middleRows(static_cast<Eigen::Index>(n_train), max_h);
  const auto fc = model.forecast_horizon(max_h, policy, &fut);
  std::vector<double> out;
  for (int h = 0; h < max_h; ++h) {
    const double a = panel.y[n_train + static_cast<std::size_t>(h)];
    out.push_back(a == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                           : 100.0 * std::abs(a - fc[static_cast<std::size_t>(h)]) / std::abs(a));
  }
  return out;
}

struct LongTermResult {
  std::vector<double> mape_by_h;
  bool converged = true;
};

inline LongTermResult long_term(const ProjectPanel& panel, const ForecasterSpec& spec, double train_fraction,
                                int max_h, ExogPolicy policy = ExogPolicy::HeldOut) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must be in (0,1)");
  const auto n0 = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(panel.size())));
  if (max_h < 1 || n0 + static_cast<std::size_t>(max_h) > panel.size())
    throw ValidationError("horizon " + std::to_string(max_h) + " exceeds the test window of " +
                          std::to_string(panel.size() - n0) + " periods");
  const auto model = fit_forecaster(spec, panel.slice(0, n0));
  return {long_term(*model, panel, n0, max_h, policy), model->converged()};
}

struct HorizonRow {
  int period = 0;
  double mean = 0, median = 0, max = 0, min = 0, variance = 0;
  int n_projects = 0;
};

/// Per-horizon summary of project MAPEs. Projects whose sequence is shorter
/// than h (or NaN at h) drop out of horizon h.
inline std::vector<HorizonRow> horizon_stats(const std::map<std::string, std::vector<double>>& per_project) {
  std::size_t longest = 0;
  for (const auto& [k, v] : per_project) longest = std::max(longest, v.size());
  std::vector<HorizonRow> rows;
  for (std::size_t h = 0; h < longest; ++h) {
    std::vector<double> vals;
    for (const auto& [k, v] : per_project)
      if (h < v.size() && std::isfinite(v[h])) vals.push_back(v[h]);
    if (vals.empty()) continue;
    std::sort(vals.begin(), vals.end());
    HorizonRow r;
    r.period = static_cast<int>(h + 1);
    r.mean = mean(vals);
    r.median = quantile_sorted(vals, 0.5);
    r.min = vals.front();
    r.max = vals.back();
    r.variance = vals.size() > 1 ? variance(vals, 1) : 0.0;
    r.n_projects = static_cast<int>(vals.size());
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct ReportRow {
  std::string frequency, forecaster, project;
  std::optional<MetricSet> metrics;
  bool converged = true;
  std::string note;
};

inline nlohmann::json to_json(const ReportRow& r) {
  nlohmann::json j;
  j["frequency"] = r.frequency;
  j["forecaster"] = r.forecaster;
  j["project"] = r.project;
  if (r.metrics) {
    j["mape"] = r.metrics->mape;
    j["mae"] = r.metrics->mae;
    j["rmse"] = r.metrics->rmse;
    j["n_scored"] = r.metrics->n_scored;
    j["n_skipped_zero"] = r.metrics->n_skipped_zero;
  } else {
    j["mape"] = j["mae"] = j["rmse"] = nullptr;
    j["n_scored"] = 0;
    j["n_skipped_zero"] = 0;
  }
  j["converged"] = r.converged;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

struct AggregateRow {
  std::string approach;
  double mape = 0, mae = 0, rmse = 0;
  int n_projects = 0;
};

/// Mean metrics per forecaster over the projects for which every forecaster
/// converged and produced metrics. Rows follow `order`.
inline std::vector<AggregateRow> aggregate(const std::vector<ReportRow>& rows, const std::vector<std::string>& order) {
  std::set<std::string> projects, excluded;
  for (const auto& r : rows) {
    projects.insert(r.project);
    if (!r.converged || !r.metrics) excluded.insert(r.project);
  }
  std::vector<AggregateRow> out;
  for (const auto& name : order) {
    AggregateRow a;
    a.approach = name;
    for (const auto& r : rows) {
      if (r.forecaster != name || excluded.count(r.project)) continue;
      a.mape += r.metrics->mape;
      a.mae += r.metrics->mae;
      a.rmse += r.metrics->rmse;
      ++a.n_projects;
    }
    if (a.n_projects > 0) {
      a.mape /= a.n_projects;
      a.mae /= a.n_projects;
      a.rmse /= a.n_projects;
    } else {
      a.mape = a.mae = a.rmse = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(a);
  }
  return out;
}

inline void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "APPROACH,MAPE,MAE,RMSE\n";
  for (const auto& r : rows)
    out << csv::escape(r.approach) << ',' << format_double(r.mape) << ',' << format_double(r.mae) << ','
        << format_double(r.rmse) << '\n';
}

inline void write_horizon_csv(std::ostream& out, const std::vector<HorizonRow>& rows) {
  out << "PERIOD,MEAN,MEDIAN,MAX,MIN,VARIANCE\n";
  for (const auto& r : rows)
    out << r.period << ',' << format_double(r.mean) << ',' << format_double(r.median) << ',' << format_double(r.max)
        << ',' << format_double(r.min) << ',' << format_double(r.variance) << '\n';
}

inline void write_boxplot_csv(std::ostream& out, const std::map<std::string, std::vector<double>>& per_project) {
  out << "PERIOD,PROJECT,MAPE\n";
  std::size_t longest = 0;
  for (const auto& [k, v] : per_project) longest = std::max(longest, v.size());
  for (std::size_t h = 0; h < longest; ++h)
    for (const auto& [k, v] : per_project)
      if (h < v.size() && std::isfinite(v[h])) out << h + 1 << ',' << csv::escape(k) << ',' << format_double(v[h]) << '\n';
}

}  // namespace tdf

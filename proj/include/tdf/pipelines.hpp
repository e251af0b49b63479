#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "tdf/baselines.hpp"
#include "tdf/data.hpp"
#include "tdf/error.hpp"
#include "tdf/sarimax.hpp"
#include "tdf/search.hpp"

namespace tdf {

enum class ExogPolicy { HeldOut, SelfForecast };

inline std::string to_string(ExogPolicy p) { return p == ExogPolicy::HeldOut ? "held_out" : "self"; }

inline ExogPolicy parse_policy(const std::string& s) {
  if (s == "held_out" || s == "held_out_actuals") return ExogPolicy::HeldOut;
  if (s == "self" || s == "self_forecast") return ExogPolicy::SelfForecast;
  throw ValidationError("unknown exog policy '" + s + "' (expected held_out or self)");
}

enum class ForecasterKind { Arimax, Sarimax, ArimaLm, SarimaLm, Regressor, Naive };

struct ForecasterSpec {
  std::string name;  // arimax, sarimax, arima_lm, sarima_lm, mlr, ..., naive
  ForecasterKind kind = ForecasterKind::Naive;
  std::optional<RegressorKind> regressor;
  int m = 1;
  SearchConfig search;
  std::vector<std::string> columns;  // empty: every panel column
  bool backward = true;              // arimax/sarimax: backward variable selection
  bool fast = false;                 // freeze the order during backward selection
  Hyper hyper;

  bool seasonal() const { return kind == ForecasterKind::Sarimax || kind == ForecasterKind::SarimaLm; }
  bool uses_exog() const { return kind != ForecasterKind::Naive; }

  /// Spec string as accepted by `parse_forecaster_spec`.
  std::string label() const { return seasonal() ? name + ":m=" + std::to_string(m) : name; }

  void validate() const {
    if (seasonal() && m < 2) throw ValidationError(name + " requires a seasonal period m >= 2");
    if (!seasonal() && m != 1) throw ValidationError(name + " is non-seasonal; m must be 1");
  }
};

/// Parses `arimax`, `sarimax:m=12`, `rf`, `naive`, ... `default_m` is used
/// for seasonal kinds without an explicit period.
inline ForecasterSpec parse_forecaster_spec(const std::string& text, int default_m = 12) {
  ForecasterSpec s;
  std::string head = text, opts;
  if (auto c = text.find(':'); c != std::string::npos) {
    head = text.substr(0, c);
    opts = text.substr(c + 1);
  }
  s.name = head;
  if (head == "arimax") s.kind = ForecasterKind::Arimax;
  else if (head == "sarimax") s.kind = ForecasterKind::Sarimax;
  else if (head == "arima_lm") s.kind = ForecasterKind::ArimaLm;
  else if (head == "sarima_lm") s.kind = ForecasterKind::SarimaLm;
  else if (head == "naive") s.kind = ForecasterKind::Naive;
  else if (auto r = parse_regressor_kind(head)) {
    s.kind = ForecasterKind::Regressor;
    s.regressor = r;
  } else {
    throw ValidationError("unknown forecaster '" + head + "'");
  }
  s.m = s.seasonal() ? default_m : 1;
  if (!opts.empty()) {
    if (opts.rfind("m=", 0) != 0) throw ValidationError("forecaster option must be m=<int>, got '" + opts + "'");
    try {
      std::size_t used = 0;
      s.m = std::stoi(opts.substr(2), &used);
      if (used != opts.size() - 2) throw std::invalid_argument(opts);
    } catch (const std::logic_error&) {
      throw ValidationError("bad seasonal period in '" + text + "'");
    }
  }
  s.validate();
  s.search.seasonal = s.seasonal();
  s.search.m = s.m;
  return s;
}

/// A fitted forecaster over one training window. Implementations are
/// immutable; `refit` returns a new object.
class Forecaster {
 public:
  virtual ~Forecaster() = default;

  /// One-step forecast of the period right after the training window.
  /// `next_exog` is that period's actual exogenous row in panel column order
  /// (nullptr when unknown).
  virtual double predict_next(const Vector* next_exog) const = 0;

  /// h-step forecasts without refitting. `future_exog` (h x panel columns)
  /// is required for the held-out policy.
  virtual std::vector<double> forecast_horizon(int h, ExogPolicy policy, const Matrix* future_exog) const = 0;

  /// Same structure (order, columns), coefficients re-estimated on `train`.
  virtual std::unique_ptr<Forecaster> refit(const ProjectPanel& train) const = 0;

  virtual bool converged() const { return true; }
  virtual std::size_t min_train() const { return 24; }
  virtual std::vector<std::string> columns() const { return {}; }
  virtual nlohmann::json describe() const = 0;
  /// Prediction intervals, where the model provides them.
  virtual std::optional<ForecastBands> forecast_bands(int, ExogPolicy, const Matrix*) const { return std::nullopt; }
};

namespace detail {

inline Matrix panel_columns(const ProjectPanel& p, const std::vector<std::string>& cols) {
  return p.select_columns(cols).exog;
}

inline std::vector<Eigen::Index> column_positions(const ProjectPanel& p, const std::vector<std::string>& cols) {
  std::vector<Eigen::Index> out;
  for (const auto& c : cols) {
    auto i = p.column_index(c);
    if (!i) throw SchemaError("panel '" + p.project_id + "' has no column '" + c + "'");
    out.push_back(*i);
  }
  return out;
}

inline Matrix pick(const Matrix& rows, const std::vector<Eigen::Index>& pos) {
  Matrix out(rows.rows(), static_cast<Eigen::Index>(pos.size()));
  for (std::size_t j = 0; j < pos.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = rows.col(pos[j]);
  return out;
}

// Univariate (S)ARIMA models, one per exogenous column.
struct ExogModels {
  std::vector<FittedSarimax> models;

  static ExogModels search(const ProjectPanel& p, const std::vector<std::string>& cols, const SearchConfig& cfg) {
    ExogModels out;
    out.models.resize(cols.size());
    const auto pos = column_positions(p, cols);
    parallel_for(cols.size(), cfg.threads, [&](std::size_t j) {
      SearchConfig c = cfg;
      c.threads = 1;
      std::vector<double> x(p.exog.col(pos[j]).data(), p.exog.col(pos[j]).data() + p.exog.rows());
      try {
        out.models[j] = auto_arima(x, c).fit;
      } catch (const Error& e) {
        rethrow_with_prefix(e, "univariate model for '" + cols[j] + "': ");
      }
    });
    return out;
  }

  ExogModels refit(const ProjectPanel& p, const std::vector<std::string>& cols, const FitOptions& base) const {
    ExogModels out;
    const auto pos = column_positions(p, cols);
    for (std::size_t j = 0; j < cols.size(); ++j) {
      std::vector<double> x(p.exog.col(pos[j]).data(), p.exog.col(pos[j]).data() + p.exog.rows());
      FitOptions fo = base;
      fo.intercept = models[j].has_intercept;
      out.models.push_back(fit(x, models[j].order, fo));
    }
    return out;
  }

  Matrix forecast(int h) const {
    Matrix out(h, static_cast<Eigen::Index>(models.size()));
    for (std::size_t j = 0; j < models.size(); ++j) {
      const auto f = tdf::forecast(models[j], h);
      for (int s = 0; s < h; ++s) out(s, static_cast<Eigen::Index>(j)) = f[static_cast<std::size_t>(s)];
    }
    return out;
  }

  bool converged() const {
    return std::all_of(models.begin(), models.end(), [](const auto& m) { return m.converged; });
  }
};

inline SearchConfig univariate_config(const ForecasterSpec& spec) {
  SearchConfig c = spec.search;
  c.fixed_d.reset();
  c.fixed_D.reset();
  return c;
}

}  // namespace detail

class NaiveForecaster final : public Forecaster {
 public:
  explicit NaiveForecaster(const ProjectPanel& train) {
    if (train.size() == 0) throw ValidationError("naive: empty training window");
    last_ = train.y.back();
  }
  double predict_next(const Vector*) const override { return last_; }
  std::vector<double> forecast_horizon(int h, ExogPolicy, const Matrix*) const override {
    if (h < 1) throw ValidationError("forecast horizon must be >= 1");
    return std::vector<double>(static_cast<std::size_t>(h), last_);
  }
  std::unique_ptr<Forecaster> refit(const ProjectPanel& train) const override {
    return std::make_unique<NaiveForecaster>(train);
  }
  std::size_t min_train() const override { return 1; }
  nlohmann::json describe() const override { return {{"forecaster", "naive"}}; }

 private:
  double last_ = 0.0;
};

/// ARIMAX / SARIMAX: a single model with lagged y and contemporaneous exog.
class TsaForecaster final : public Forecaster {
 public:
  TsaForecaster(ForecasterSpec spec, FittedSarimax fit, std::vector<std::string> cols, ProjectPanel train)
      : spec_(std::move(spec)), fit_(std::move(fit)), cols_(std::move(cols)), train_(std::move(train)) {}

  double predict_next(const Vector* next_exog) const override {
    if (cols_.empty()) return forecast(fit_, 1).front();
    Matrix row;
    if (next_exog) {
      row = next_exog->transpose();
      row = detail::pick(row, detail::column_positions(train_, cols_));
    } else {
      row = exog_models().forecast(1);
    }
    return forecast(fit_, 1, row).front();
  }

  std::vector<double> forecast_horizon(int h, ExogPolicy policy, const Matrix* future_exog) const override {
    if (h < 1) throw ValidationError("forecast horizon must be >= 1");
    if (cols_.empty()) return forecast(fit_, h);
    return forecast(fit_, h, future_rows(h, policy, future_exog));
  }

  std::optional<ForecastBands> forecast_bands(int h, ExogPolicy policy, const Matrix* future_exog) const override {
    if (h < 1) throw ValidationError("forecast horizon must be >= 1");
    if (cols_.empty()) return forecast_with_bands(fit_, h, nullptr);
    const Matrix fut = future_rows(h, policy, future_exog);
    return forecast_with_bands(fit_, h, &fut);
  }

  std::unique_ptr<Forecaster> refit(const ProjectPanel& train) const override {
    FitOptions fo = spec_.search.fit;
    fo.intercept = fit_.has_intercept;
    fo.exog_names = cols_;
    const Matrix X = cols_.empty() ? Matrix(0, 0) : detail::panel_columns(train, cols_);
    auto f = fit(train.y, X, fit_.order, fo);
    return std::make_unique<TsaForecaster>(spec_, std::move(f), cols_, train);
  }

  bool converged() const override { return fit_.converged; }
  std::vector<std::string> columns() const override { return cols_; }
  const FittedSarimax& model() const { return fit_; }

  nlohmann::json describe() const override {
    return {{"forecaster", spec_.label()}, {"columns", cols_}, {"model", to_json(fit_)}};
  }

 private:
  Matrix future_rows(int h, ExogPolicy policy, const Matrix* future_exog) const {
    if (policy == ExogPolicy::SelfForecast) return exog_models().forecast(h);
    if (!future_exog || future_exog->rows() < h)
      throw ValidationError("held-out exog policy requested but the future exog rows are unavailable");
    return detail::pick(future_exog->topRows(h), detail::column_positions(train_, cols_));
  }

  const detail::ExogModels& exog_models() const {
    std::call_once(exog_once_, [&] { exog_ = detail::ExogModels::search(train_, cols_, detail::univariate_config(spec_)); });
    return exog_;
  }

  ForecasterSpec spec_;
  FittedSarimax fit_;
  std::vector<std::string> cols_;
  ProjectPanel train_;
  mutable std::once_flag exog_once_;
  mutable detail::ExogModels exog_;
};

/// ARIMA+LM / SARIMA+LM: univariate models forecast each exog column, and an
/// OLS model maps the exog forecasts to y.
class EnsembleForecaster final : public Forecaster {
 public:
  EnsembleForecaster(ForecasterSpec spec, detail::ExogModels models, Regressor lm, std::vector<std::string> cols)
      : spec_(std::move(spec)), models_(std::move(models)), lm_(std::move(lm)), cols_(std::move(cols)) {}

  double predict_next(const Vector*) const override { return predict(lm_, models_.forecast(1)).front(); }

  std::vector<double> forecast_horizon(int h, ExogPolicy, const Matrix*) const override {
    if (h < 1) throw ValidationError("forecast horizon must be >= 1");
    return predict(lm_, models_.forecast(h));
  }

  std::unique_ptr<Forecaster> refit(const ProjectPanel& train) const override {
    auto models = models_.refit(train, cols_, spec_.search.fit);
    auto lm = fit_regressor(RegressorKind::Mlr, detail::panel_columns(train, cols_), train.y, spec_.hyper);
    return std::make_unique<EnsembleForecaster>(spec_, std::move(models), std::move(lm), cols_);
  }

  bool converged() const override { return models_.converged(); }
  std::vector<std::string> columns() const override { return cols_; }
  const Regressor& linear_model() const { return lm_; }
  const detail::ExogModels& exog_models() const { return models_; }

  nlohmann::json describe() const override {
    nlohmann::json j{{"forecaster", spec_.label()}, {"columns", cols_}};
    std::vector<nlohmann::json> ms;
    for (const auto& m : models_.models) ms.push_back(to_json(m));
    j["exog_models"] = ms;
    j["lm_intercept"] = lm_.intercept;
    j["lm_coef"] = to_std(lm_.coef);
    return j;
  }

 private:
  ForecasterSpec spec_;
  detail::ExogModels models_;
  Regressor lm_;
  std::vector<std::string> cols_;
};

/// ML regressors mapping the contemporaneous exog row to y.
class RegressorForecaster final : public Forecaster {
 public:
  RegressorForecaster(ForecasterSpec spec, Regressor reg, std::vector<std::string> cols, ProjectPanel train)
      : spec_(std::move(spec)), reg_(std::move(reg)), cols_(std::move(cols)), train_(std::move(train)) {}

  double predict_next(const Vector* next_exog) const override {
    if (!next_exog) throw ValidationError(spec_.name + ": the next period's exogenous row is required");
    Matrix row = next_exog->transpose();
    return predict(reg_, detail::pick(row, detail::column_positions(train_, cols_))).front();
  }

  std::vector<double> forecast_horizon(int h, ExogPolicy policy, const Matrix* future_exog) const override {
    if (h < 1) throw ValidationError("forecast horizon must be >= 1");
    Matrix fut;
    if (policy == ExogPolicy::HeldOut) {
      if (!future_exog || future_exog->rows() < h)
        throw ValidationError("held-out exog policy requested but the future exog rows are unavailable");
      fut = detail::pick(future_exog->topRows(h), detail::column_positions(train_, cols_));
    } else {
      SearchConfig c = spec_.search;
      c.seasonal = false;
      c.m = 1;
      fut = detail::ExogModels::search(train_, cols_, c).forecast(h);
    }
    return predict(reg_, fut);
  }

  std::unique_ptr<Forecaster> refit(const ProjectPanel& train) const override {
    auto reg = fit_regressor(*spec_.regressor, detail::panel_columns(train, cols_), train.y, spec_.hyper);
    return std::make_unique<RegressorForecaster>(spec_, std::move(reg), cols_, train);
  }

  std::size_t min_train() const override { return 10; }
  std::vector<std::string> columns() const override { return cols_; }
  const Regressor& regressor() const { return reg_; }
  nlohmann::json describe() const override { return {{"forecaster", spec_.name}, {"columns", cols_}}; }

 private:
  ForecasterSpec spec_;
  Regressor reg_;
  std::vector<std::string> cols_;
  ProjectPanel train_;
};

/// Fits the forecaster named by `spec` on the training panel, running the
/// full search (backward selection and auto-ARIMA) where applicable.
inline std::unique_ptr<Forecaster> fit_forecaster(const ForecasterSpec& spec, const ProjectPanel& train) {
  spec.validate();
  train.check_shape();
  if (spec.kind == ForecasterKind::Naive) return std::make_unique<NaiveForecaster>(train);
  if (!all_finite(train.y) || !train.exog.allFinite())
    throw ValidationError(spec.name + ": panel '" + train.project_id + "' has missing values; interpolate first");
  std::vector<std::string> cols = spec.columns.empty() ? train.column_names : spec.columns;
  if (cols.empty()) throw ValidationError(spec.name + ": no exogenous columns available");
  const Matrix X = detail::panel_columns(train, cols);

  try {
    switch (spec.kind) {
      case ForecasterKind::Arimax:
      case ForecasterKind::Sarimax: {
        if (train.size() < 24) throw ValidationError("at least 24 training observations required");
        if (spec.backward) {
          auto r = backward_select(train.y, X, cols, spec.search, spec.fast);
          return std::make_unique<TsaForecaster>(spec, std::move(r.fit), std::move(r.columns), train);
        }
        SearchConfig c = spec.search;
        c.fit.exog_names = cols;
        auto r = auto_arima(train.y, X, c);
        return std::make_unique<TsaForecaster>(spec, std::move(r.fit), cols, train);
      }
      case ForecasterKind::ArimaLm:
      case ForecasterKind::SarimaLm: {
        if (train.size() < 24) throw ValidationError("at least 24 training observations required");
        auto models = detail::ExogModels::search(train, cols, detail::univariate_config(spec));
        Regressor lm;
        try {
          lm = fit_regressor(RegressorKind::Mlr, X, train.y, spec.hyper);
        } catch (const Error& e) {
          rethrow_with_prefix(e, "linear model: ");
        }
        return std::make_unique<EnsembleForecaster>(spec, std::move(models), std::move(lm), cols);
      }
      case ForecasterKind::Regressor: {
        auto reg = fit_regressor(*spec.regressor, X, train.y, spec.hyper);
        return std::make_unique<RegressorForecaster>(spec, std::move(reg), cols, train);
      }
      case ForecasterKind::Naive: break;
    }
  } catch (const SearchError& e) {
    throw SearchError(spec.label() + ": " + e.what(), e.trace());
  } catch (const Error& e) {
    rethrow_with_prefix(e, spec.label() + ": ");
  }
  throw Error(ErrorKind::Internal, "unhandled forecaster kind");
}

}  // namespace tdf

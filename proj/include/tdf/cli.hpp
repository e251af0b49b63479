#pragma once

// Command implementations behind the `tdforecast` executable. Everything is
// reachable through `run_cli`, which never calls exit() so tests can drive it.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "tdf/baselines.hpp"
#include "tdf/data.hpp"
#include "tdf/error.hpp"
#include "tdf/eval.hpp"
#include "tdf/featsel.hpp"
#include "tdf/parallel.hpp"
#include "tdf/pipelines.hpp"
#include "tdf/sarimax.hpp"
#include "tdf/search.hpp"
#include "tdf/stattests.hpp"

#ifndef TDF_VERSION
#define TDF_VERSION "dev"
#endif

namespace tdf::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kInputError = 2, kEmptyResult = 3, kInternal = 4 };

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Input:
    case ErrorKind::Schema:
    case ErrorKind::Validation: return kInputError;
    case ErrorKind::EmptyResult: return kEmptyResult;
    case ErrorKind::Numerical:
    case ErrorKind::Internal: return kInternal;
  }
  return kInternal;
}

inline std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::Input, "cannot read " + p.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Internal, "sha256 initialisation failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

/// Options shared by the subcommands; each subcommand registers the subset
/// it understands.
struct Options {
  std::vector<std::string> inputs;
  std::string out;
  std::string freq;
  std::string format;
  std::string criterion = "aic";
  bool seasonal = false;
  int m = 0;
  double initial_train = 0.8;
  double train_frac = 0.7;
  int max_h = 0;
  std::string policy;
  std::uint64_t seed = 1;
  std::string config;
  int threads = 0;
  bool fast = false;
  bool full_refit = false;
  bool log_transform = false;
  std::string models;
  std::string model;
  std::string selection;
  std::string columns;
  double variance_threshold = 0.01;
  double max_zero_fraction = 0.95;
  int h = 1;
  std::string model_file;
  std::string future_exog;
  std::string save_model;
};

/// Effective settings after merging flags and the config file.
struct Settings {
  Hyper hyper;
  SearchConfig search;
  FeatselConfig featsel;
  int threads = 1;
};

inline Settings make_settings(const Options& o) {
  Settings s;
  std::map<std::string, std::string> other;
  if (!o.config.empty()) s.hyper = load_hyper(o.config, &other);
  s.threads = resolve_threads(o.threads);
  s.search.criterion = parse_criterion(o.criterion);
  s.search.fit.seed = o.seed;
  s.featsel.variance_threshold = o.variance_threshold;
  s.featsel.max_zero_fraction = o.max_zero_fraction;
  s.featsel.forest.seed = o.seed;
  for (const auto& [k, v] : other) {
    auto num = [&] {
      try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
      } catch (const std::logic_error&) {
        throw ValidationError("config value for '" + k + "' is not a number");
      }
    };
    if (k == "search.max_p") s.search.max_p = static_cast<int>(num());
    else if (k == "search.max_q") s.search.max_q = static_cast<int>(num());
    else if (k == "search.max_P") s.search.max_P = static_cast<int>(num());
    else if (k == "search.max_Q") s.search.max_Q = static_cast<int>(num());
    else if (k == "search.stepwise") s.search.stepwise = num() != 0.0;
    else if (k == "search.restarts") s.search.fit.restarts = static_cast<int>(num());
    else if (k == "search.level") s.search.level = num();
    else if (k == "search.adf_regression") {
      if (v == "constant") s.search.adf_regression = AdfRegression::Constant;
      else if (v == "trend") s.search.adf_regression = AdfRegression::ConstantTrend;
      else throw ValidationError("search.adf_regression must be constant or trend");
    } else if (k == "featsel.variance_threshold") s.featsel.variance_threshold = num();
    else if (k == "featsel.max_zero_fraction") s.featsel.max_zero_fraction = num();
    else if (k == "featsel.n_trees") s.featsel.forest.n_trees = static_cast<int>(num());
    else if (k == "featsel.max_depth") s.featsel.forest.max_depth = static_cast<int>(num());
    else throw ValidationError("unknown config key '" + k + "'");
  }
  if (!s.hyper.values.count("seed")) s.hyper.set("seed", static_cast<double>(o.seed));
  s.search.validate();
  return s;
}

inline nlohmann::json settings_json(const Settings& s) {
  nlohmann::json j;
  j["hyperparameters"] = s.hyper.effective();
  j["search"] = {{"max_p", s.search.max_p},       {"max_q", s.search.max_q},
                 {"max_P", s.search.max_P},       {"max_Q", s.search.max_Q},
                 {"max_d", s.search.max_d},       {"max_D", s.search.max_D},
                 {"criterion", to_string(s.search.criterion)},
                 {"stepwise", s.search.stepwise}, {"restarts", s.search.fit.restarts},
                 {"level", s.search.level},
                 {"adf_regression", s.search.adf_regression == AdfRegression::Constant ? "constant" : "trend"}};
  j["featsel"] = {{"variance_threshold", s.featsel.variance_threshold},
                  {"max_zero_fraction", s.featsel.max_zero_fraction},
                  {"n_trees", s.featsel.forest.n_trees},
                  {"max_depth", s.featsel.forest.max_depth}};
  j["ml_exog_alignment"] = "contemporaneous";
  return j;
}

inline void write_manifest(const fs::path& dir, const std::string& command, const Options& o, const Settings& s,
                           const std::vector<fs::path>& inputs, nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json j;
  j["tool"] = "tdforecast";
  j["version"] = TDF_VERSION;
  j["command"] = command;
  j["seed"] = o.seed;
  j["threads"] = s.threads;
  j["config"] = settings_json(s);
  j["config"]["run"] = extra;
  nlohmann::json digests = nlohmann::json::object();
  for (const auto& p : inputs) digests[p.string()] = sha256_file(p);
  j["input_digests"] = digests;
  const auto now = std::chrono::system_clock::now();
  j["timestamp"] = format_iso8601(std::chrono::time_point_cast<std::chrono::seconds>(now));
  std::ofstream f(dir / "manifest.json");
  f << j.dump(2) << '\n';
}

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorKind::Input, "cannot create output directory " + p.string() + ": " + ec.message());
}

/// Expands directories to their *.csv files (sorted) and keeps files as given.
inline std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      out.insert(out.end(), files.begin(), files.end());
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      throw Error(ErrorKind::Input, "input not found: " + in);
    }
  }
  if (out.empty()) throw Error(ErrorKind::Input, "no input panels");
  return out;
}

inline std::vector<ProjectPanel> load_panels(const std::vector<fs::path>& files, const Options& o) {
  std::vector<ProjectPanel> panels;
  for (const auto& f : files) {
    auto p = read_panel_file(f);
    if (!all_finite(p.y) || !p.exog.allFinite())
      throw ValidationError("panel " + f.string() + " has missing cells; serialize interpolates them");
    if (o.log_transform) p = log_transform(p);
    panels.push_back(std::move(p));
  }
  std::stable_sort(panels.begin(), panels.end(),
                   [](const auto& a, const auto& b) { return a.project_id < b.project_id; });
  for (std::size_t i = 1; i < panels.size(); ++i)
    if (panels[i].project_id == panels[i - 1].project_id)
      throw ValidationError("duplicate project id '" + panels[i].project_id + "'");
  const Frequency f0 = panels.front().frequency;
  for (const auto& p : panels)
    if (p.frequency != f0) throw ValidationError("panels mix biweekly and monthly frequencies");
  if (!o.freq.empty() && parse_frequency(o.freq) != f0)
    throw ValidationError("--freq " + o.freq + " does not match the panels (" + to_string(f0) + ")");
  return panels;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = csv::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::vector<std::string> selected_columns(const Options& o) {
  if (!o.columns.empty()) return split_list(o.columns);
  if (o.selection.empty()) return {};
  std::ifstream in(o.selection);
  if (!in) throw Error(ErrorKind::Input, "cannot open selection report " + o.selection);
  try {
    const auto j = nlohmann::json::parse(in);
    return j.at("kept").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("selection report: ") + e.what());
  }
}

inline ForecasterSpec make_spec(const std::string& text, const Options& o, const Settings& s, Frequency freq) {
  const int m = o.m > 0 ? o.m : default_season(freq);
  std::string t = text;
  if (o.seasonal) {
    if (t == "arimax") t = "sarimax";
    if (t == "arima_lm") t = "sarima_lm";
  }
  auto spec = parse_forecaster_spec(t, m);
  const int spec_m = spec.m;
  spec.search = s.search;
  spec.search.seasonal = spec.seasonal();
  spec.search.m = spec_m;
  spec.search.threads = 1;
  spec.fast = o.fast;
  spec.hyper = s.hyper;
  spec.columns = selected_columns(o);
  return spec;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline std::string safe_file_name(const std::string& id) {
  std::string s = id;
  for (auto& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return s.empty() ? "project" : s;
}

inline int cmd_serialize(const Options& o, std::ostream& out) {
  if (o.inputs.size() != 1) throw ValidationError("serialize takes exactly one input file");
  if (o.out.empty()) throw ValidationError("serialize needs --out <dir>");
  const Frequency freq = parse_frequency(o.freq.empty() ? "biweekly" : o.freq);
  std::optional<SnapshotFormat> fmt;
  if (o.format == "csv") fmt = SnapshotFormat::Csv;
  else if (o.format == "json") fmt = SnapshotFormat::Json;
  else if (!o.format.empty()) throw ValidationError("--format must be csv or json");
  const auto logs = load_snapshots(o.inputs.front(), fmt);
  const Settings s = make_settings(o);
  ensure_dir(o.out);
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& log : logs) {
    auto raw = serialize(log, freq);
    std::size_t missing = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) missing += raw.row_missing(i) ? 1 : 0;
    ProjectPanel panel = missing > 0 ? interpolate_missing(raw) : raw;
    if (o.log_transform) panel = log_transform(panel);
    std::size_t interp = 0;
    for (bool b : panel.interpolated) interp += b ? 1 : 0;
    const fs::path file = fs::path(o.out) / (safe_file_name(panel.project_id) + ".csv");
    std::ofstream f(file);
    if (!f) throw Error(ErrorKind::Input, "cannot write " + file.string());
    write_panel_csv(f, panel);
    summary.push_back({{"project", panel.project_id},
                       {"file", file.filename().string()},
                       {"periods", panel.size()},
                       {"interpolated", interp},
                       {"trimmed", raw.size() - panel.size()},
                       {"snapshots", log.snapshots.size()}});
    out << panel.project_id << ": " << panel.size() << " periods, " << interp << " interpolated\n";
  }
  std::ofstream(fs::path(o.out) / "summary.json") << summary.dump(2) << '\n';
  write_manifest(o.out, "serialize", o, s, {fs::path(o.inputs.front())}, {{"frequency", to_string(freq)}});
  return kOk;
}

inline int cmd_select(const Options& o, std::ostream& out) {
  const auto files = expand_inputs(o.inputs);
  const auto panels = load_panels(files, o);
  const Settings s = make_settings(o);
  FeatselConfig fc = s.featsel;
  fc.forest.threads = s.threads;
  const auto res = select_features(panels, fc);
  auto j = to_json(res);
  j["projects"] = panels.size();
  const std::string text = j.dump(2) + "\n";
  if (o.out.empty()) {
    out << text;
  } else {
    const fs::path p(o.out);
    if (p.has_parent_path()) ensure_dir(p.parent_path());
    std::ofstream(p) << text;
    out << "kept " << res.kept.size() << " columns (" << to_string(res.mode) << "):";
    for (const auto& c : res.kept) out << ' ' << c;
    out << '\n';
  }
  return kOk;
}

inline int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.out.empty()) throw ValidationError("evaluate needs --out <dir>");
  const auto files = expand_inputs(o.inputs);
  const auto panels = load_panels(files, o);
  const Settings s = make_settings(o);
  const Frequency freq = panels.front().frequency;
  std::vector<ForecasterSpec> specs;
  for (const auto& name : split_list(o.models.empty() ? "arimax" : o.models)) specs.push_back(make_spec(name, o, s, freq));
  if (specs.empty()) throw ValidationError("--models is empty");

  WalkForwardOptions wf;
  wf.initial_fraction = o.initial_train;
  wf.full_refit = o.full_refit;
  const std::size_t cells = panels.size() * specs.size();
  std::vector<ReportRow> rows(cells);
  parallel_for(cells, s.threads, [&](std::size_t c) {
    const auto& panel = panels[c / specs.size()];
    const auto& spec = specs[c % specs.size()];
    ReportRow& r = rows[c];
    r.frequency = to_string(freq);
    r.forecaster = spec.label();
    r.project = panel.project_id;
    try {
      const auto res = walk_forward(panel, spec, wf);
      r.metrics = res.metrics;
      r.converged = res.converged;
      if (res.failure_index) r.note = "refit failed at period " + std::to_string(*res.failure_index) + ": " + res.failure;
    } catch (const Error& e) {
      r.converged = false;
      r.note = e.what();
    }
  });
  ensure_dir(o.out);
  nlohmann::json rep = nlohmann::json::array();
  for (const auto& r : rows) {
    rep.push_back(to_json(r));
    if (!r.converged || !r.metrics)
      err << "warning: " << r.project << " / " << r.forecaster << " flagged"
          << (r.note.empty() ? std::string(" (not converged)") : ": " + r.note) << '\n';
  }
  std::ofstream(fs::path(o.out) / "report.json") << rep.dump(2) << '\n';
  std::vector<std::string> order;
  for (const auto& sp : specs) order.push_back(sp.label());
  const auto agg = aggregate(rows, order);
  {
    std::ofstream f(fs::path(o.out) / "aggregate.csv");
    write_aggregate_csv(f, agg);
  }
  for (const auto& a : agg)
    out << a.approach << ": MAPE " << format_double(a.mape) << " over " << a.n_projects << " projects\n";
  write_manifest(o.out, "evaluate", o, s, files,
                 {{"models", order},
                  {"initial_train", o.initial_train},
                  {"full_refit", o.full_refit},
                  {"fast", o.fast},
                  {"log_transform", o.log_transform},
                  {"columns", selected_columns(o)}});
  return kOk;
}

inline int cmd_horizon(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.out.empty()) throw ValidationError("horizon needs --out <dir>");
  const auto files = expand_inputs(o.inputs);
  const auto panels = load_panels(files, o);
  const Settings s = make_settings(o);
  const Frequency freq = panels.front().frequency;
  const auto spec = make_spec(o.model.empty() ? "arimax" : o.model, o, s, freq);
  const int max_h = o.max_h > 0 ? o.max_h : (freq == Frequency::Monthly ? 36 : 72);
  const ExogPolicy policy = parse_policy(o.policy.empty() ? "held_out" : o.policy);

  std::vector<std::optional<std::vector<double>>> seqs(panels.size());
  std::vector<std::string> notes(panels.size());
  parallel_for(panels.size(), s.threads, [&](std::size_t i) {
    const auto& p = panels[i];
    const auto n0 = static_cast<std::size_t>(std::floor(o.train_frac * static_cast<double>(p.size())));
    const int h = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(max_h), p.size() - std::min(n0, p.size())));
    if (h < 1) {
      notes[i] = "empty test window";
      return;
    }
    try {
      auto r = long_term(p, spec, o.train_frac, h, policy);
      if (!r.converged) {
        notes[i] = "model did not converge";
        return;
      }
      seqs[i] = std::move(r.mape_by_h);
    } catch (const Error& e) {
      notes[i] = e.what();
    }
  });
  std::map<std::string, std::vector<double>> per_project;
  for (std::size_t i = 0; i < panels.size(); ++i) {
    if (seqs[i]) per_project[panels[i].project_id] = *seqs[i];
    else err << "warning: " << panels[i].project_id << " excluded: " << notes[i] << '\n';
  }
  if (per_project.empty()) throw EmptyResultError("horizon: no project produced forecasts");
  const auto rows = horizon_stats(per_project);
  ensure_dir(o.out);
  {
    std::ofstream f(fs::path(o.out) / "horizon.csv");
    write_horizon_csv(f, rows);
  }
  {
    std::ofstream f(fs::path(o.out) / "boxplot.csv");
    write_boxplot_csv(f, per_project);
  }
  out << "wrote " << rows.size() << " horizon rows for " << per_project.size() << " projects\n";
  write_manifest(o.out, "horizon", o, s, files,
                 {{"model", spec.label()},
                  {"max_h", max_h},
                  {"train_frac", o.train_frac},
                  {"policy", to_string(policy)},
                  {"log_transform", o.log_transform},
                  {"columns", selected_columns(o)}});
  return kOk;
}

inline Matrix read_future_exog(const std::string& path, const std::vector<std::string>& cols, int h) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Input, "cannot open future exog file " + path);
  const auto recs = csv::read_all(in);
  if (recs.empty()) throw SchemaError("future exog file is empty");
  const auto& header = recs.front().fields;
  std::vector<std::size_t> pos;
  for (const auto& c : cols) {
    auto it = std::find(header.begin(), header.end(), c);
    if (it == header.end()) throw SchemaError("future exog file lacks column '" + c + "'");
    pos.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  if (static_cast<int>(recs.size()) - 1 < h)
    throw ValidationError("future exog file has " + std::to_string(recs.size() - 1) + " rows; need " + std::to_string(h));
  Matrix X(h, static_cast<Eigen::Index>(cols.size()));
  for (int r = 0; r < h; ++r) {
    const auto& rec = recs[static_cast<std::size_t>(r + 1)];
    if (rec.fields.size() != header.size()) throw ParseError("wrong field count", rec.line);
    for (std::size_t j = 0; j < pos.size(); ++j) {
      auto v = parse_double(rec.fields[pos[j]]);
      if (!v) throw ParseError("malformed number '" + rec.fields[pos[j]] + "'", rec.line);
      X(r, static_cast<Eigen::Index>(j)) = *v;
    }
  }
  return X;
}

inline void write_forecast_csv(std::ostream& out, const std::vector<double>& mean, const ForecastBands* bands,
                               const ProjectPanel* panel) {
  out << "STEP,PERIOD_START,FORECAST,LOWER,UPPER\n";
  for (std::size_t s = 0; s < mean.size(); ++s) {
    out << s + 1 << ',';
    if (panel) out << format_iso8601(panel->period_start(panel->size() + s));
    out << ',' << format_double(mean[s]) << ',';
    if (bands) out << format_double(bands->lower[s]) << ',' << format_double(bands->upper[s]);
    else out << ',';
    out << '\n';
  }
}

inline int cmd_forecast(const Options& o, std::ostream& out) {
  if (o.h < 1) throw ValidationError("--h must be >= 1");
  const Settings s = make_settings(o);
  std::ostringstream csv_text;
  std::vector<fs::path> inputs;
  if (!o.model_file.empty()) {
    std::ifstream in(o.model_file);
    if (!in) throw Error(ErrorKind::Input, "cannot open model file " + o.model_file);
    inputs.push_back(o.model_file);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("model file: ") + e.what());
    }
    const auto model = sarimax_from_json(j.contains("model") ? j.at("model") : j);
    Matrix fut;
    const Matrix* futp = nullptr;
    if (model.exog_count() > 0) {
      if (o.future_exog.empty()) throw ValidationError("model has exogenous columns; pass --future-exog <csv>");
      fut = read_future_exog(o.future_exog, model.exog_names, o.h);
      futp = &fut;
      inputs.push_back(o.future_exog);
    }
    const auto bands = forecast_with_bands(model, o.h, futp);
    write_forecast_csv(csv_text, bands.mean, &bands, nullptr);
  } else {
    if (o.inputs.size() != 1) throw ValidationError("forecast needs --model-file or exactly one panel");
    const auto files = expand_inputs(o.inputs);
    if (files.size() != 1) throw ValidationError("forecast takes a single panel");
    inputs = files;
    const auto panels = load_panels(files, o);
    const auto& panel = panels.front();
    const auto spec = make_spec(o.model.empty() ? "arimax" : o.model, o, s, panel.frequency);
    const ExogPolicy policy = parse_policy(o.policy.empty() ? "self" : o.policy);
    const auto f = fit_forecaster(spec, panel);
    Matrix fut;
    const Matrix* futp = nullptr;
    if (policy == ExogPolicy::HeldOut) {
      if (o.future_exog.empty()) throw ValidationError("--policy held_out needs --future-exog <csv>");
      fut = read_future_exog(o.future_exog, panel.column_names, o.h);
      futp = &fut;
      inputs.push_back(o.future_exog);
    }
    const auto mean = f->forecast_horizon(o.h, policy, futp);
    const auto bands = f->forecast_bands(o.h, policy, futp);
    write_forecast_csv(csv_text, mean, bands ? &*bands : nullptr, &panel);
    if (!o.save_model.empty()) {
      std::ofstream(o.save_model) << f->describe().dump(2) << '\n';
    }
  }
  if (o.out.empty()) {
    out << csv_text.str();
  } else {
    const fs::path p(o.out);
    if (p.has_parent_path()) ensure_dir(p.parent_path());
    std::ofstream(p) << csv_text.str();
    write_manifest(p.has_parent_path() ? p.parent_path() : fs::path("."), "forecast", o, s, inputs,
                   {{"h", o.h}, {"model", o.model}, {"model_file", o.model_file}});
  }
  return kOk;
}

inline int cmd_describe(const Options& o, std::ostream& out) {
  const auto files = expand_inputs(o.inputs);
  const auto panels = load_panels(files, o);
  std::vector<double> ys;
  for (const auto& p : panels) ys.insert(ys.end(), p.y.begin(), p.y.end());
  out << "variable | mean | std | min | 25% | 50% | 75% | max | skew\n";
  out << format_stats_row("SQALE index", describe(ys)) << '\n';
  for (const auto& c : panels.front().column_names) {
    std::vector<double> xs;
    bool everywhere = true;
    for (const auto& p : panels) {
      auto idx = p.column_index(c);
      if (!idx) {
        everywhere = false;
        break;
      }
      xs.insert(xs.end(), p.exog.col(*idx).data(), p.exog.col(*idx).data() + p.exog.rows());
    }
    if (everywhere && xs.size() >= 2) out << format_stats_row(c, describe(xs)) << '\n';
  }
  return kOk;
}

inline int cmd_decompose(const Options& o, std::ostream& out) {
  const auto files = expand_inputs(o.inputs);
  if (files.size() != 1) throw ValidationError("decompose takes a single panel");
  const auto panels = load_panels(files, o);
  const auto& p = panels.front();
  const int m = o.m > 0 ? o.m : default_season(p.frequency);
  const auto d = seasonal_decompose(p.y, m);
  std::ostringstream text;
  text << "PERIOD,OBSERVED,TREND,SEASONAL,RESIDUAL\n";
  for (std::size_t i = 0; i < p.size(); ++i)
    text << format_iso8601(p.period_start(i)) << ',' << format_double(p.y[i]) << ',' << format_double(d.trend[i]) << ','
         << format_double(d.seasonal[i]) << ',' << format_double(d.residual[i]) << '\n';
  if (o.out.empty()) {
    out << text.str();
  } else {
    std::ofstream(o.out) << text.str();
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Technical-debt forecasting toolkit", "tdforecast"};
  app.set_version_flag("--version", std::string(TDF_VERSION));
  app.require_subcommand(1);
  Options o;

  auto add_inputs = [&](CLI::App* c, bool required = true) {
    auto* opt = c->add_option("inputs", o.inputs, "Input files or directories");
    if (required) opt->required();
  };
  auto add_run = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "Master random seed");
    c->add_option("--config", o.config, "key=value hyperparameter file")->check(CLI::ExistingFile);
    c->add_option("--threads", o.threads, "Worker threads (default: TDFORECAST_THREADS or 1)")->check(CLI::PositiveNumber);
    c->add_option("--freq", o.freq, "biweekly or monthly")->check(CLI::IsMember({"biweekly", "monthly"}));
    c->add_flag("--log-transform", o.log_transform, "Apply ln(1+x) to the exogenous columns");
  };
  auto add_model = [&](CLI::App* c) {
    c->add_option("--criterion", o.criterion, "aic or bic")->check(CLI::IsMember({"aic", "bic"}));
    c->add_flag("--seasonal", o.seasonal, "Use the seasonal variants of arimax and arima_lm");
    c->add_option("--m", o.m, "Seasonal period (default 12 monthly, 26 biweekly)")->check(CLI::PositiveNumber);
    c->add_flag("--fast", o.fast, "Freeze the model order during backward selection");
    c->add_option("--selection", o.selection, "Selection report whose kept columns are used");
    c->add_option("--columns", o.columns, "Comma-separated exogenous columns to use");
  };

  auto* ser = app.add_subcommand("serialize", "Turn snapshot logs into regular panels");
  add_inputs(ser);
  add_run(ser);
  ser->add_option("--out", o.out, "Output directory")->required();
  ser->add_option("--format", o.format, "csv or json (default: by extension)");

  auto* sel = app.add_subcommand("select", "Consensus feature selection");
  add_inputs(sel);
  add_run(sel);
  sel->add_option("--out", o.out, "Selection report path (default stdout)");
  sel->add_option("--variance-threshold", o.variance_threshold, "Min-max scaled variance threshold");
  sel->add_option("--max-zero-fraction", o.max_zero_fraction, "Maximum share of zero entries");

  auto* ev = app.add_subcommand("evaluate", "Walk-forward evaluation");
  add_inputs(ev);
  add_run(ev);
  add_model(ev);
  ev->add_option("--models", o.models, "Comma-separated forecaster specs");
  ev->add_option("--initial-train", o.initial_train, "Initial training fraction")->check(CLI::Range(0.0, 1.0));
  ev->add_flag("--full-refit", o.full_refit, "Re-run the full search at every step");
  ev->add_option("--out", o.out, "Output directory")->required();

  auto* hz = app.add_subcommand("horizon", "Long-horizon evaluation");
  add_inputs(hz);
  add_run(hz);
  add_model(hz);
  hz->add_option("--model", o.model, "Forecaster spec");
  hz->add_option("--max-h", o.max_h, "Maximum horizon")->check(CLI::PositiveNumber);
  hz->add_option("--train-frac", o.train_frac, "Training fraction")->check(CLI::Range(0.0, 1.0));
  hz->add_option("--policy", o.policy, "held_out or self")->check(CLI::IsMember({"held_out", "held_out_actuals", "self", "self_forecast"}));
  hz->add_option("--out", o.out, "Output directory")->required();

  auto* fc = app.add_subcommand("forecast", "Forecast future periods");
  fc->set_help_flag("--help", "Print this help message and exit");  // frees -h for --h
  add_inputs(fc, false);
  add_run(fc);
  add_model(fc);
  fc->add_option("--model", o.model, "Forecaster spec (with a panel input)");
  fc->add_option("--model-file", o.model_file, "Saved SARIMAX model JSON");
  fc->add_option("--h", o.h, "Forecast horizon")->check(CLI::PositiveNumber);
  fc->add_option("--policy", o.policy, "held_out or self")->check(CLI::IsMember({"held_out", "held_out_actuals", "self", "self_forecast"}));
  fc->add_option("--future-exog", o.future_exog, "CSV with future exogenous rows");
  fc->add_option("--save-model", o.save_model, "Write the fitted model as JSON");
  fc->add_option("--out", o.out, "Forecast CSV path (default stdout)");

  auto* ds = app.add_subcommand("describe", "Descriptive statistics of the panels");
  add_inputs(ds);
  add_run(ds);

  auto* dc = app.add_subcommand("decompose", "Classical additive decomposition of the SQALE index");
  add_inputs(dc);
  add_run(dc);
  dc->add_option("--m", o.m, "Seasonal period")->check(CLI::PositiveNumber);
  dc->add_option("--out", o.out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << TDF_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }

  try {
    if (*ser) return cmd_serialize(o, out);
    if (*sel) return cmd_select(o, out);
    if (*ev) return cmd_evaluate(o, out, err);
    if (*hz) return cmd_horizon(o, out, err);
    if (*fc) return cmd_forecast(o, out);
    if (*ds) return cmd_describe(o, out);
    if (*dc) return cmd_decompose(o, out);
  } catch (const SearchError& e) {
    err << "error: " << e.what() << '\n' << trace_jsonl(e.trace());
    return exit_code(e.kind());
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}

}  // namespace tdf::cli

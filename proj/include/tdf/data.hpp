#pragma once

// Snapshot ingestion, regular-period serialization, gap interpolation and
// descriptive statistics for technical-debt series.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tdf/csv.hpp"
#include "tdf/error.hpp"
#include "tdf/linalg.hpp"

namespace tdf {

using TimePoint = std::chrono::sys_seconds;

inline constexpr const char* kSqaleKey = "SQALE_INDEX";

// ---------------------------------------------------------------------------
// Number and time formatting
// ---------------------------------------------------------------------------

/// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (*b == '+') ++b;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) return std::nullopt;
  return v;
}

namespace detail {

inline bool parse_int(const std::string& s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace detail

/// Parses ISO-8601 dates and date-times: `YYYY-MM-DD`, optionally followed by
/// `THH:MM[:SS[.frac]]` (a space is accepted instead of `T`) and a `Z` or
/// `+HH:MM`/`+HHMM` offset. Fractional seconds are truncated.
inline std::optional<TimePoint> parse_iso8601(const std::string& text) {
  using namespace std::chrono;
  const std::string s = csv::trim(text);
  int Y = 0, M = 0, D = 0;
  if (s.size() < 10 || !detail::parse_int(s, 0, 4, Y) || s[4] != '-' ||
      !detail::parse_int(s, 5, 2, M) || s[7] != '-' || !detail::parse_int(s, 8, 2, D))
    return std::nullopt;
  const year_month_day ymd{year{Y}, month{static_cast<unsigned>(M)}, day{static_cast<unsigned>(D)}};
  if (!ymd.ok()) return std::nullopt;
  long secs = 0;
  std::size_t pos = 10;
  if (pos < s.size()) {
    if (s[pos] != 'T' && s[pos] != ' ') return std::nullopt;
    int h = 0, mi = 0, se = 0;
    if (!detail::parse_int(s, pos + 1, 2, h) || s.size() < pos + 6 || s[pos + 3] != ':' ||
        !detail::parse_int(s, pos + 4, 2, mi))
      return std::nullopt;
    pos += 6;
    if (pos < s.size() && s[pos] == ':') {
      if (!detail::parse_int(s, pos + 1, 2, se)) return std::nullopt;
      pos += 3;
      if (pos < s.size() && (s[pos] == '.' || s[pos] == ',')) {
        ++pos;
        const std::size_t start = pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
        if (pos == start) return std::nullopt;
      }
    }
    if (h > 23 || mi > 59 || se > 60) return std::nullopt;
    secs = h * 3600L + mi * 60L + se;
    if (pos < s.size()) {
      if (s[pos] == 'Z' && pos + 1 == s.size()) {
        pos += 1;
      } else if (s[pos] == '+' || s[pos] == '-') {
        const int sign = s[pos] == '+' ? 1 : -1;
        int oh = 0, om = 0;
        if (!detail::parse_int(s, pos + 1, 2, oh)) return std::nullopt;
        std::size_t mpos = pos + 3;
        if (mpos < s.size() && s[mpos] == ':') ++mpos;
        if (mpos < s.size()) {
          if (!detail::parse_int(s, mpos, 2, om)) return std::nullopt;
          mpos += 2;
        }
        if (mpos != s.size()) return std::nullopt;
        secs -= sign * (oh * 3600L + om * 60L);
        pos = s.size();
      } else {
        return std::nullopt;
      }
    }
  }
  return TimePoint{sys_days{ymd}.time_since_epoch() + seconds{secs}};
}

/// Date-only when the instant is midnight UTC, otherwise `YYYY-MM-DDTHH:MM:SSZ`.
inline std::string format_iso8601(TimePoint t) {
  using namespace std::chrono;
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const auto rem = (t - day_point).count();
  char buf[64];
  if (rem == 0) {
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  } else {
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), rem / 3600,
                  (rem / 60) % 60, rem % 60);
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct Snapshot {
  TimePoint time;
  std::map<std::string, double> metrics;
};

struct SnapshotLog {
  std::string project_id;
  std::vector<std::string> rule_keys;  // rule columns in input order
  std::vector<Snapshot> snapshots;     // strictly increasing time
};

enum class Frequency { Biweekly, Monthly };

inline std::string to_string(Frequency f) { return f == Frequency::Biweekly ? "biweekly" : "monthly"; }

inline Frequency parse_frequency(const std::string& s) {
  if (s == "biweekly") return Frequency::Biweekly;
  if (s == "monthly") return Frequency::Monthly;
  throw ValidationError("unknown frequency '" + s + "' (expected biweekly or monthly)");
}

/// Seasonal period used when none is configured: one year of periods.
inline int default_season(Frequency f) { return f == Frequency::Monthly ? 12 : 26; }

/// Regular-frequency panel: SQALE index plus one exogenous column per rule.
/// Before interpolation, missing periods hold NaN in every cell.
struct ProjectPanel {
  std::string project_id;
  Frequency frequency = Frequency::Monthly;
  TimePoint origin{};
  std::vector<double> y;
  Matrix exog;
  std::vector<std::string> column_names;
  std::vector<bool> interpolated;
  bool exog_log_transformed = false;

  std::size_t size() const { return y.size(); }
  Eigen::Index columns() const { return exog.cols(); }

  bool row_missing(std::size_t i) const { return std::isnan(y[i]); }

  TimePoint period_start(std::size_t i) const {
    using namespace std::chrono;
    if (frequency == Frequency::Biweekly)
      return origin + duration_cast<seconds>(days{14 * static_cast<long>(i)});
    const year_month_day ymd{floor<days>(origin)};
    return TimePoint{sys_days{year_month_day{ymd.year(), ymd.month(), day{1}} + months{static_cast<long>(i)}}
                         .time_since_epoch()};
  }

  std::optional<Eigen::Index> column_index(const std::string& name) const {
    auto it = std::find(column_names.begin(), column_names.end(), name);
    if (it == column_names.end()) return std::nullopt;
    return static_cast<Eigen::Index>(it - column_names.begin());
  }

  /// Rows [begin, end).
  ProjectPanel slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > size()) throw ValidationError("panel slice out of range");
    ProjectPanel out = *this;
    out.origin = period_start(begin);
    out.y.assign(y.begin() + static_cast<long>(begin), y.begin() + static_cast<long>(end));
    out.exog = exog.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
    out.interpolated.assign(interpolated.begin() + static_cast<long>(begin),
                            interpolated.begin() + static_cast<long>(end));
    return out;
  }

  /// Keeps only the named columns, in the given order.
  ProjectPanel select_columns(const std::vector<std::string>& names) const {
    ProjectPanel out = *this;
    out.exog.resize(exog.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
      auto idx = column_index(names[j]);
      if (!idx) throw SchemaError("panel '" + project_id + "' has no column '" + names[j] + "'");
      out.exog.col(static_cast<Eigen::Index>(j)) = exog.col(*idx);
    }
    out.column_names = names;
    return out;
  }

  void check_shape() const {
    if (static_cast<std::size_t>(exog.rows()) != y.size() || interpolated.size() != y.size() ||
        static_cast<std::size_t>(exog.cols()) != column_names.size())
      throw Error(ErrorKind::Internal, "panel '" + project_id + "' has inconsistent shape");
  }
};

struct DescriptiveStats {
  double mean = 0, std = 0, min = 0, lower_quartile = 0, median = 0, upper_quartile = 0, max = 0,
         skewness = 0;
};

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

enum class SnapshotFormat { Csv, Json };

namespace detail {

struct RawRow {
  long row;
  std::string project;
  TimePoint time;
  std::map<std::string, double> metrics;
};

inline std::vector<SnapshotLog> assemble_logs(std::vector<RawRow> rows, const std::vector<std::string>& rule_keys) {
  std::map<std::string, std::vector<RawRow>> by_project;
  for (auto& r : rows) by_project[r.project].push_back(std::move(r));
  std::vector<SnapshotLog> logs;
  for (auto& [id, prow] : by_project) {
    std::stable_sort(prow.begin(), prow.end(), [](const RawRow& a, const RawRow& b) { return a.time < b.time; });
    SnapshotLog log{id, rule_keys, {}};
    for (auto& r : prow) {
      // Equal timestamps collapse onto the row that came last in the file.
      if (!log.snapshots.empty() && log.snapshots.back().time == r.time)
        log.snapshots.back().metrics = std::move(r.metrics);
      else
        log.snapshots.push_back({r.time, std::move(r.metrics)});
    }
    logs.push_back(std::move(log));
  }
  return logs;
}

inline double checked_metric(const std::string& key, double v, long row) {
  if (!std::isfinite(v)) throw ValidationError("row " + std::to_string(row) + ": non-finite value for " + key);
  if (v < 0) throw ValidationError("row " + std::to_string(row) + ": negative value for " + key);
  return v;
}

}  // namespace detail

/// Reads a wide-form CSV export: `PROJECT,ANALYSIS_DATE,SQALE_INDEX,<rule>...`.
/// Returns one log per distinct project, ordered by project id.
inline std::vector<SnapshotLog> parse_snapshots_csv(std::istream& in) {
  const auto records = csv::read_all(in);
  if (records.empty()) throw SchemaError("empty snapshot file");
  const auto& header = records.front().fields;
  auto find = [&](const std::string& name) -> long {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<long>(it - header.begin());
  };
  const long c_proj = find("PROJECT"), c_date = find("ANALYSIS_DATE"), c_sqale = find(kSqaleKey);
  if (c_proj < 0) throw SchemaError("missing PROJECT column");
  if (c_date < 0) throw SchemaError("missing ANALYSIS_DATE column");
  if (c_sqale < 0) throw SchemaError("missing SQALE_INDEX column");
  std::vector<std::string> rule_keys;
  std::vector<long> rule_cols;
  std::set<std::string> seen;
  for (long c = 0; c < static_cast<long>(header.size()); ++c) {
    if (c == c_proj || c == c_date || c == c_sqale) continue;
    if (header[c].empty()) throw SchemaError("empty column name at position " + std::to_string(c + 1));
    if (!seen.insert(header[c]).second) throw SchemaError("duplicate column '" + header[c] + "'");
    rule_keys.push_back(header[c]);
    rule_cols.push_back(c);
  }

  std::vector<detail::RawRow> rows;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(rec.fields.size()),
                       rec.line);
    detail::RawRow raw;
    raw.row = rec.line;
    raw.project = rec.fields[c_proj];
    if (raw.project.empty()) throw ParseError("empty PROJECT", rec.line);
    auto t = parse_iso8601(rec.fields[c_date]);
    if (!t) throw ParseError("malformed ANALYSIS_DATE '" + rec.fields[c_date] + "'", rec.line);
    raw.time = *t;
    auto sq = parse_double(rec.fields[c_sqale]);
    if (!sq) {
      if (rec.fields[c_sqale].empty()) throw ValidationError("row " + std::to_string(rec.line) + ": SQALE_INDEX is empty");
      throw ParseError("malformed SQALE_INDEX '" + rec.fields[c_sqale] + "'", rec.line);
    }
    raw.metrics[kSqaleKey] = detail::checked_metric(kSqaleKey, *sq, rec.line);
    for (std::size_t k = 0; k < rule_cols.size(); ++k) {
      const auto& cell = rec.fields[rule_cols[k]];
      double v = 0.0;  // absent count
      if (!cell.empty()) {
        auto parsed = parse_double(cell);
        if (!parsed) throw ParseError("malformed value '" + cell + "' for " + rule_keys[k], rec.line);
        v = *parsed;
      }
      raw.metrics[rule_keys[k]] = detail::checked_metric(rule_keys[k], v, rec.line);
    }
    rows.push_back(std::move(raw));
  }
  return detail::assemble_logs(std::move(rows), rule_keys);
}

/// Reads a JSON array of objects keyed like the CSV header. Rule keys are the
/// union over all objects, in first-seen order.
inline std::vector<SnapshotLog> parse_snapshots_json(std::istream& in) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw SchemaError("snapshot JSON must be an array of objects");
  std::vector<std::string> rule_keys;
  std::set<std::string> seen;
  for (const auto& obj : doc) {
    if (!obj.is_object()) throw SchemaError("snapshot JSON must be an array of objects");
    for (const auto& [k, v] : obj.items()) {
      if (k == "PROJECT" || k == "ANALYSIS_DATE" || k == kSqaleKey) continue;
      if (seen.insert(k).second) rule_keys.push_back(k);
    }
  }
  auto number = [](const nlohmann::json& v, const std::string& key, long row) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s.empty()) return std::nullopt;
      if (auto d = parse_double(s)) return d;
    }
    throw ParseError("malformed value for " + key, row);
  };
  std::vector<detail::RawRow> rows;
  long row = 0;
  for (const auto& obj : doc) {
    ++row;
    if (!obj.contains("PROJECT") || !obj.contains("ANALYSIS_DATE")) throw SchemaError("object " + std::to_string(row) + " lacks PROJECT or ANALYSIS_DATE");
    if (!obj.contains(kSqaleKey)) throw SchemaError("object " + std::to_string(row) + " lacks SQALE_INDEX");
    detail::RawRow raw;
    raw.row = row;
    raw.project = obj["PROJECT"].is_string() ? obj["PROJECT"].get<std::string>() : obj["PROJECT"].dump();
    if (!obj["ANALYSIS_DATE"].is_string()) throw ParseError("ANALYSIS_DATE must be a string", row);
    auto t = parse_iso8601(obj["ANALYSIS_DATE"].get<std::string>());
    if (!t) throw ParseError("malformed ANALYSIS_DATE '" + obj["ANALYSIS_DATE"].get<std::string>() + "'", row);
    raw.time = *t;
    auto sq = number(obj[kSqaleKey], kSqaleKey, row);
    if (!sq) throw ValidationError("row " + std::to_string(row) + ": SQALE_INDEX is empty");
    raw.metrics[kSqaleKey] = detail::checked_metric(kSqaleKey, *sq, row);
    for (const auto& k : rule_keys) {
      double v = 0.0;
      if (obj.contains(k))
        if (auto d = number(obj[k], k, row)) v = *d;
      raw.metrics[k] = detail::checked_metric(k, v, row);
    }
    rows.push_back(std::move(raw));
  }
  return detail::assemble_logs(std::move(rows), rule_keys);
}

inline std::vector<SnapshotLog> load_snapshots(const std::filesystem::path& path,
                                               std::optional<SnapshotFormat> format = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Input, "cannot open " + path.string());
  SnapshotFormat fmt = format.value_or(path.extension() == ".json" ? SnapshotFormat::Json : SnapshotFormat::Csv);
  return fmt == SnapshotFormat::Json ? parse_snapshots_json(in) : parse_snapshots_csv(in);
}

// ---------------------------------------------------------------------------
// Serialization onto a regular grid
// ---------------------------------------------------------------------------

namespace detail {

inline long month_index(TimePoint t) {
  using namespace std::chrono;
  const year_month_day ymd{floor<days>(t)};
  return static_cast<int>(ymd.year()) * 12L + static_cast<long>(static_cast<unsigned>(ymd.month())) - 1;
}

}  // namespace detail

/// Maps an irregular log onto biweekly or calendar-month periods. Each period
/// takes the metrics of the last snapshot that falls inside it; empty periods
/// are NaN rows.
inline ProjectPanel serialize(const SnapshotLog& log, Frequency freq) {
  using namespace std::chrono;
  if (log.snapshots.empty()) throw ValidationError("project '" + log.project_id + "' has no snapshots");
  ProjectPanel panel;
  panel.project_id = log.project_id;
  panel.frequency = freq;
  panel.column_names = log.rule_keys;

  const TimePoint first = log.snapshots.front().time;
  const TimePoint last = log.snapshots.back().time;
  auto period_of = [&](TimePoint t) -> long {
    if (freq == Frequency::Biweekly) return static_cast<long>((t - first) / seconds{14L * 86400L});
    return detail::month_index(t) - detail::month_index(first);
  };
  if (freq == Frequency::Biweekly) {
    panel.origin = first;
  } else {
    const year_month_day ymd{floor<days>(first)};
    panel.origin = TimePoint{sys_days{year_month_day{ymd.year(), ymd.month(), day{1}}}.time_since_epoch()};
  }
  const long periods = period_of(last) + 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  panel.y.assign(static_cast<std::size_t>(periods), nan);
  panel.exog = Matrix::Constant(periods, static_cast<Eigen::Index>(log.rule_keys.size()), nan);
  panel.interpolated.assign(static_cast<std::size_t>(periods), false);
  for (const auto& snap : log.snapshots) {  // ascending, so later snapshots overwrite
    const long k = period_of(snap.time);
    panel.y[static_cast<std::size_t>(k)] = snap.metrics.at(kSqaleKey);
    for (std::size_t j = 0; j < log.rule_keys.size(); ++j) {
      auto it = snap.metrics.find(log.rule_keys[j]);
      panel.exog(k, static_cast<Eigen::Index>(j)) = it == snap.metrics.end() ? 0.0 : it->second;
    }
  }
  return panel;
}

/// Fills interior gaps column by column with straight lines between the
/// nearest observed neighbours and drops leading/trailing gaps.
inline ProjectPanel interpolate_missing(const ProjectPanel& in) {
  in.check_shape();
  std::vector<std::size_t> observed;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (!in.row_missing(i)) observed.push_back(i);
  if (observed.size() < 2)
    throw ValidationError("project '" + in.project_id + "' has fewer than 2 observed periods; cannot interpolate");

  ProjectPanel out = in.slice(observed.front(), observed.back() + 1);
  const auto n = static_cast<Eigen::Index>(out.size());
  auto fill = [&](auto&& get, auto&& set, bool mark) {
    Eigen::Index prev = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::isnan(get(i))) continue;
      if (prev >= 0 && i - prev > 1) {
        const double a = get(prev), b = get(i);
        for (Eigen::Index k = prev + 1; k < i; ++k) {
          const double w = static_cast<double>(k - prev) / static_cast<double>(i - prev);
          set(k, a + w * (b - a));
          if (mark) out.interpolated[static_cast<std::size_t>(k)] = true;
        }
      }
      prev = i;
    }
  };
  fill([&](Eigen::Index i) { return out.y[static_cast<std::size_t>(i)]; },
       [&](Eigen::Index i, double v) { out.y[static_cast<std::size_t>(i)] = v; }, true);
  for (Eigen::Index j = 0; j < out.exog.cols(); ++j) {
    fill([&](Eigen::Index i) { return out.exog(i, j); }, [&](Eigen::Index i, double v) { out.exog(i, j) = v; },
         false);
  }
  if (!out.exog.allFinite())
    throw ValidationError("project '" + out.project_id + "' has exogenous gaps at the series edges");
  return out;
}

// ---------------------------------------------------------------------------
// Transforms and statistics
// ---------------------------------------------------------------------------

/// Maps every exogenous value x to ln(1 + x); y is left untouched.
inline ProjectPanel log_transform(const ProjectPanel& in) {
  if (in.exog_log_transformed) throw ValidationError("panel '" + in.project_id + "' is already log-transformed");
  if ((in.exog.array() < 0.0).any())
    throw ValidationError("panel '" + in.project_id + "' has negative exogenous values");
  ProjectPanel out = in;
  out.exog = in.exog.array().log1p().matrix();
  out.exog_log_transformed = true;
  return out;
}

inline ProjectPanel inverse_log_transform(const ProjectPanel& in) {
  if (!in.exog_log_transformed) return in;
  ProjectPanel out = in;
  out.exog = in.exog.array().expm1().matrix();
  out.exog_log_transformed = false;
  return out;
}

/// Mean, sample standard deviation, five-number summary (linear-interpolated
/// quartiles) and Fisher-Pearson skewness g1. Constant input has skewness 0.
inline DescriptiveStats describe(std::span<const double> values) {
  if (values.size() < 2) throw ValidationError("describe needs at least 2 values");
  if (!all_finite(values)) throw ValidationError("describe got non-finite values");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  DescriptiveStats d;
  d.mean = mean(values);
  d.std = std::sqrt(variance(values, 1));
  d.min = s.front();
  d.max = s.back();
  d.lower_quartile = quantile_sorted(s, 0.25);
  d.median = quantile_sorted(s, 0.5);
  d.upper_quartile = quantile_sorted(s, 0.75);
  double m2 = 0, m3 = 0;
  for (double v : values) {
    const double c = v - d.mean;
    m2 += c * c;
    m3 += c * c * c;
  }
  m2 /= static_cast<double>(values.size());
  m3 /= static_cast<double>(values.size());
  d.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  return d;
}

namespace detail {

inline std::string group_thousands(double v) {
  const long long r = std::llround(v);
  std::string digits = std::to_string(r < 0 ? -r : r);
  std::string out;
  const int n = static_cast<int>(digits.size());
  for (int i = 0; i < n; ++i) {
    out.push_back(digits[static_cast<std::size_t>(i)]);
    if ((n - i - 1) % 3 == 0 && i != n - 1) out.push_back(',');
  }
  return r < 0 ? "-" + out : out;
}

inline std::string two_decimals_trimmed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  std::string s = buf;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

}  // namespace detail

/// One table row: `name | mean | std | min | q1 | median | q3 | max | skew`,
/// counts rounded with thousands separators, skewness to two decimals.
inline std::string format_stats_row(const std::string& name, const DescriptiveStats& d) {
  std::string out = name;
  for (double v : {d.mean, d.std, d.min, d.lower_quartile, d.median, d.upper_quartile, d.max})
    out += " | " + detail::group_thousands(v);
  out += " | " + detail::two_decimals_trimmed(d.skewness);
  return out;
}

// ---------------------------------------------------------------------------
// Panel files
// ---------------------------------------------------------------------------

/// `PERIOD_START,INTERPOLATED,SQALE_INDEX,<rule>...`; missing cells are blank.
inline void write_panel_csv(std::ostream& out, const ProjectPanel& panel) {
  panel.check_shape();
  out << "PERIOD_START,INTERPOLATED," << kSqaleKey;
  for (const auto& c : panel.column_names) out << ',' << csv::escape(c);
  out << '\n';
  for (std::size_t i = 0; i < panel.size(); ++i) {
    out << format_iso8601(panel.period_start(i)) << ',' << (panel.interpolated[i] ? 1 : 0) << ','
        << format_double(panel.y[i]);
    for (Eigen::Index j = 0; j < panel.exog.cols(); ++j)
      out << ',' << format_double(panel.exog(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
}

/// Reads a panel written by `write_panel_csv`. The frequency is inferred from
/// the spacing of the first two periods (14 days = biweekly).
inline ProjectPanel read_panel_csv(std::istream& in, const std::string& project_id) {
  const auto records = csv::read_all(in);
  if (records.empty()) throw SchemaError("empty panel file for '" + project_id + "'");
  const auto& header = records.front().fields;
  if (header.size() < 3 || header[0] != "PERIOD_START" || header[1] != "INTERPOLATED" || header[2] != kSqaleKey)
    throw SchemaError("panel header must start with PERIOD_START,INTERPOLATED,SQALE_INDEX");
  ProjectPanel p;
  p.project_id = project_id;
  p.column_names.assign(header.begin() + 3, header.end());
  const auto rows = static_cast<Eigen::Index>(records.size() - 1);
  p.exog.resize(rows, static_cast<Eigen::Index>(p.column_names.size()));
  std::vector<TimePoint> starts;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& rec = records[static_cast<std::size_t>(r + 1)];
    if (rec.fields.size() != header.size()) throw ParseError("wrong field count", rec.line);
    auto t = parse_iso8601(rec.fields[0]);
    if (!t) throw ParseError("malformed PERIOD_START '" + rec.fields[0] + "'", rec.line);
    starts.push_back(*t);
    p.interpolated.push_back(rec.fields[1] == "1" || rec.fields[1] == "true");
    auto cell = [&](std::size_t c) {
      if (rec.fields[c].empty()) return std::numeric_limits<double>::quiet_NaN();
      auto v = parse_double(rec.fields[c]);
      if (!v) throw ParseError("malformed number '" + rec.fields[c] + "'", rec.line);
      return *v;
    };
    p.y.push_back(cell(2));
    for (std::size_t j = 0; j < p.column_names.size(); ++j) p.exog(r, static_cast<Eigen::Index>(j)) = cell(j + 3);
  }
  if (!starts.empty()) p.origin = starts.front();
  p.frequency = Frequency::Monthly;
  if (starts.size() >= 2 && starts[1] - starts[0] == std::chrono::seconds{14L * 86400L})
    p.frequency = Frequency::Biweekly;
  return p;
}

inline ProjectPanel read_panel_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Input, "cannot open panel " + path.string());
  return read_panel_csv(in, path.stem().string());
}

}  // namespace tdf

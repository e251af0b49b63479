#pragma once

#include <istream>
#include <string>
#include <vector>

#include "tdf/error.hpp"

namespace tdf::csv {

/// Splits one CSV record. Supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_record(const std::string& line, long row = -1) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", row);
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Reads all records; strips a UTF-8 BOM and CR line endings, skips blank lines.
/// Each record carries its 1-based line number.
struct Record {
  long line = 0;
  std::vector<std::string> fields;
};

inline std::vector<Record> read_all(std::istream& in) {
  std::vector<Record> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_record(line, lineno);
    for (auto& f : fields) f = trim(std::move(f));
    out.push_back({lineno, std::move(fields)});
  }
  return out;
}

inline std::string escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace tdf::csv

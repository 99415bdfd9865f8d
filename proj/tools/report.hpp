#pragma once

// Rendering of command reports as JSON, aligned text or CSV. A report is an
// ordered JSON object; an optional "table" member (array of flat objects)
// is rendered as rows.

#include <algorithm>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace mole::cli {

using ojson = nlohmann::ordered_json;

enum class OutFormat { Json, Text, Csv };

inline std::string scalar_text(const ojson& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "-";
  return v.dump();
}

inline void flatten(const ojson& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  for (const auto& [k, v] : j.items()) {
    if (k == "table" && prefix.empty()) continue;
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object())
      flatten(v, key, out);
    else
      out.emplace_back(key, v.is_array() ? v.dump() : scalar_text(v));
  }
}

inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline void emit(std::ostream& os, const ojson& report, OutFormat fmt) {
  if (fmt == OutFormat::Json) {
    os << report.dump(2) << '\n';
    return;
  }
  std::vector<std::pair<std::string, std::string>> fields;
  flatten(report, "", fields);
  const ojson* table = report.contains("table") ? &report.at("table") : nullptr;

  std::vector<std::string> cols;
  std::vector<std::vector<std::string>> rows;
  if (table) {
    for (const auto& row : *table) {
      std::vector<std::pair<std::string, std::string>> flat;
      flatten(row, "", flat);
      if (cols.empty())
        for (const auto& [k, v] : flat) cols.push_back(k);
      std::vector<std::string> cells;
      for (const auto& [k, v] : flat) cells.push_back(v);
      rows.push_back(std::move(cells));
    }
  }

  if (fmt == OutFormat::Csv) {
    if (table) {
      for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << csv_cell(cols[c]);
      os << '\n';
      for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << csv_cell(r[c]);
        os << '\n';
      }
      return;
    }
    for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "," : "") << csv_cell(fields[i].first);
    os << '\n';
    for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "," : "") << csv_cell(fields[i].second);
    os << '\n';
    return;
  }

  std::size_t width = 0;
  for (const auto& [k, v] : fields) width = std::max(width, k.size());
  for (const auto& [k, v] : fields) os << k << std::string(width - k.size() + 2, ' ') << v << '\n';
  if (!table) return;
  std::vector<std::size_t> w(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    w[c] = cols[c].size();
    for (const auto& r : rows)
      if (c < r.size()) w[c] = std::max(w[c], r[c].size());
  }
  if (!fields.empty()) os << '\n';
  for (std::size_t c = 0; c < cols.size(); ++c) os << std::string(w[c] - cols[c].size(), ' ') << cols[c] << "  ";
  os << '\n';
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) os << std::string(w[c] - r[c].size(), ' ') << r[c] << "  ";
    os << '\n';
  }
}

}  // namespace mole::cli

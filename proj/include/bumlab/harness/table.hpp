// Copyright 2026 The bumlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bumlab/biasgen/bundle_io.hpp"
#include "bumlab/cobum/cobum.hpp"
#include "bumlab/eval/report.hpp"

namespace bumlab::harness {

/// One table line. Reference rows (Baseline, Hard) never carry a Co-BUM value
/// and are excluded from the bold marks.
struct TableRow {
  std::string method;
  bool reference = false;
  bool failed = false;
  std::string error;
  eval::EvalReport report;
  double time = 0;  // whichever time column the run uses
  std::optional<cobum::CoBumScores> cobum;
};

enum class Better { lower, higher };

struct Column {
  const char* name;
  const char* header;  // with direction arrow
  Better better;
};

inline const std::array<Column, 8>& table_columns() {
  static const std::array<Column, 8> cols = {{{"FA", "FA(%)↓", Better::lower},
                                             {"RA", "RA(%)↑", Better::higher},
                                             {"TA", "TA(%)↑", Better::higher},
                                             {"DP", "DP(%)↑", Better::higher},
                                             {"EO", "EO(%)↑", Better::higher},
                                             {"MIA", "MIA(%)↓", Better::lower},
                                             {"Time", "Time↓", Better::lower},
                                             {"CoBUM", "Co-BUM↑", Better::higher}}};
  return cols;
}

/// Numeric cells in column order; unset means "--". Accuracies and AUC are
/// percentages, DP/EO are drop percentages against the baseline gap.
inline std::array<std::optional<double>, 8> row_values(const TableRow& r) {
  std::array<std::optional<double>, 8> v;
  v[0] = 100.0 * r.report.fa;
  v[1] = 100.0 * r.report.ra;
  v[2] = 100.0 * r.report.ta;
  v[3] = r.report.dp_drop_pct;
  v[4] = r.report.eo_drop_pct;
  v[5] = 100.0 * r.report.mia_auc;
  v[6] = r.time;
  if (r.cobum && !r.reference) v[7] = r.cobum->composite;
  return v;
}

inline void write_csv(std::ostream& os, const std::vector<TableRow>& rows) {
  os << "method";
  for (const auto& c : table_columns()) os << ',' << c.header;
  os << '\n';
  for (const auto& r : rows) {
    os << r.method;
    if (r.failed) {
      for (std::size_t i = 0; i < table_columns().size(); ++i) os << ",failed";
    } else {
      for (const auto& v : row_values(r)) os << ',' << (v ? biasgen::detail::format_double(*v) : "--");
    }
    os << '\n';
  }
}

inline nlohmann::json table_json(const std::vector<TableRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = {{"method", r.method}, {"reference", r.reference}};
    if (r.failed) {
      j["status"] = "failed";
      j["error"] = r.error;
    } else {
      j["status"] = "ok";
      const auto v = row_values(r);
      for (std::size_t i = 0; i < v.size(); ++i)
        j[table_columns()[i].name] = v[i] ? nlohmann::json(*v[i]) : nlohmann::json(nullptr);
      if (r.cobum && !r.reference) j["cobum_components"] = cobum::to_json(*r.cobum);
    }
    out.push_back(std::move(j));
  }
  return out;
}

inline void write_json(std::ostream& os, const std::vector<TableRow>& rows) { os << table_json(rows).dump(2) << '\n'; }

/// For each column, whether row i holds the best value among the
/// non-reference, non-failed rows. Ties are all marked.
inline std::vector<std::array<bool, 8>> best_marks(const std::vector<TableRow>& rows) {
  std::vector<std::array<bool, 8>> marks(rows.size());
  for (std::size_t c = 0; c < table_columns().size(); ++c) {
    std::optional<double> best;
    for (const auto& r : rows) {
      if (r.reference || r.failed) continue;
      auto v = row_values(r)[c];
      if (!v) continue;
      if (!best || (table_columns()[c].better == Better::lower ? *v < *best : *v > *best)) best = v;
    }
    if (!best) continue;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].reference || rows[i].failed) continue;
      auto v = row_values(rows[i])[c];
      marks[i][c] = v && *v == *best;
    }
  }
  return marks;
}

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline void write_markdown(std::ostream& os, const std::vector<TableRow>& rows) {
  os << "| Method |";
  for (const auto& c : table_columns()) os << ' ' << c.header << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < table_columns().size(); ++i) os << "---:|";
  os << '\n';
  const auto marks = best_marks(rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << "| " << r.method << " |";
    if (r.failed) {
      for (std::size_t c = 0; c < table_columns().size(); ++c) os << " failed |";
      os << '\n';
      continue;
    }
    const auto v = row_values(r);
    for (std::size_t c = 0; c < v.size(); ++c) {
      std::string cell = v[c] ? fixed(*v[c], c == 7 ? 4 : 2) : "--";
      if (marks[i][c]) cell = "**" + cell + "**";
      os << ' ' << cell << " |";
    }
    os << '\n';
  }
}

}  // namespace bumlab::harness

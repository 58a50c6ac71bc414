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

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bumlab/biasgen/dataset.hpp"

namespace bumlab::biasgen {

// A bundle is stored as two files: `<stem>.csv` with one row per sample and
// `<stem>.json` with the metadata needed to rebuild the DataBundle.

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, p);
}

inline double parse_double(const std::string& s, std::size_t line) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::runtime_error("bundle csv line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

}  // namespace detail

inline std::string bundle_csv_header(std::size_t ds, std::size_t db) {
  std::string h;
  for (std::size_t i = 0; i < ds; ++i) h += "s_" + std::to_string(i) + ",";
  for (std::size_t i = 0; i < db; ++i) h += "b_" + std::to_string(i) + ",";
  return h + "label,group,bias_flag,split,forget";
}

inline void write_bundle(const DataBundle& b, const std::filesystem::path& stem) {
  auto csv_path = stem;
  csv_path += ".csv";
  auto meta_path = stem;
  meta_path += ".json";
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  csv << bundle_csv_header(b.semantic_dim, b.bias_dim) << '\n';

  std::vector<char> is_forget(b.train.size(), 0);
  for (auto i : b.forget) is_forget.at(i) = 1;
  auto row = [&](const Sample& s, const char* split, int forget) {
    for (double v : s.s) csv << detail::format_double(v) << ',';
    for (double v : s.b) csv << detail::format_double(v) << ',';
    csv << s.label << ',' << s.group << ',' << (s.bias_flag ? 1 : 0) << ',' << split << ',' << forget << '\n';
  };
  for (std::size_t i = 0; i < b.train.size(); ++i) row(b.train[i], "train", is_forget[i]);
  for (const auto& s : b.val) row(s, "val", 0);
  for (const auto& s : b.test) row(s, "test", 0);
  for (const auto& s : b.counterfactual) row(s, "counterfactual", 0);
  if (!csv) throw std::runtime_error("write failed: " + csv_path.string());

  nlohmann::json meta = {{"scenario", to_string(b.scenario)},
                         {"semantic_dim", b.semantic_dim},
                         {"bias_dim", b.bias_dim},
                         {"num_classes", b.num_classes},
                         {"positive_classes", b.positive_classes},
                         {"protected_group", b.protected_group},
                         {"seed", b.seed},
                         {"generator_config", b.generator_config},
                         {"counterfactual_source", b.counterfactual_source},
                         {"counts",
                          {{"train", b.train.size()},
                           {"val", b.val.size()},
                           {"test", b.test.size()},
                           {"forget", b.forget.size()},
                           {"counterfactual", b.counterfactual.size()}}}};
  std::ofstream js(meta_path, std::ios::binary);
  if (!js) throw std::runtime_error("cannot write " + meta_path.string());
  js << meta.dump(2) << '\n';
}

inline DataBundle read_bundle(const std::filesystem::path& stem) {
  auto csv_path = stem;
  csv_path += ".csv";
  auto meta_path = stem;
  meta_path += ".json";
  std::ifstream js(meta_path, std::ios::binary);
  if (!js) throw std::runtime_error("cannot open " + meta_path.string());
  const auto meta = nlohmann::json::parse(js);

  DataBundle b;
  b.scenario = scenario_from_string(meta.at("scenario").get<std::string>());
  b.semantic_dim = meta.at("semantic_dim").get<std::size_t>();
  b.bias_dim = meta.at("bias_dim").get<std::size_t>();
  b.num_classes = meta.at("num_classes").get<std::size_t>();
  b.positive_classes = meta.at("positive_classes").get<std::vector<int>>();
  b.protected_group = meta.at("protected_group").get<int>();
  b.seed = meta.at("seed").get<std::uint64_t>();
  b.generator_config = meta.at("generator_config");
  b.counterfactual_source = meta.at("counterfactual_source").get<std::vector<std::size_t>>();

  std::ifstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot open " + csv_path.string());
  std::string line;
  std::getline(csv, line);
  if (line != bundle_csv_header(b.semantic_dim, b.bias_dim))
    throw std::runtime_error(csv_path.string() + ": header does not match metadata");
  const std::size_t width = b.semantic_dim + b.bias_dim + 5;
  std::size_t lineno = 1;
  std::vector<std::string> cells;
  while (std::getline(csv, line)) {
    ++lineno;
    if (line.empty()) continue;
    cells.clear();
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != width)
      throw std::runtime_error("bundle csv line " + std::to_string(lineno) + ": expected " +
                               std::to_string(width) + " columns, got " + std::to_string(cells.size()));
    Sample s;
    std::size_t c = 0;
    for (std::size_t i = 0; i < b.semantic_dim; ++i) s.s.push_back(detail::parse_double(cells[c++], lineno));
    for (std::size_t i = 0; i < b.bias_dim; ++i) s.b.push_back(detail::parse_double(cells[c++], lineno));
    s.label = std::stoi(cells[c++]);
    s.group = std::stoi(cells[c++]);
    s.bias_flag = cells[c++] == "1";
    const std::string& split = cells[c++];
    const bool forget = cells[c++] == "1";
    if (split == "train") {
      (forget ? b.forget : b.retain).push_back(b.train.size());
      b.train.push_back(std::move(s));
    } else if (split == "val") {
      b.val.push_back(std::move(s));
    } else if (split == "test") {
      b.test.push_back(std::move(s));
    } else if (split == "counterfactual") {
      b.counterfactual.push_back(std::move(s));
    } else {
      throw std::runtime_error("bundle csv line " + std::to_string(lineno) + ": unknown split '" + split + "'");
    }
  }
  return b;
}

}  // namespace bumlab::biasgen

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

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "bumlab/model/model.hpp"

namespace bumlab::model {

// Checkpoint layout:
//   line 1: JSON header (layers, head, adapters, seed, array table)
//   then:   every array of the header's "arrays" list, in order, as raw
//           little-endian IEEE-754 doubles.

namespace detail {

inline std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
  return v;
}

}  // namespace detail

inline nlohmann::json checkpoint_header(const ModelParams& m) {
  using nlohmann::json;
  json h;
  h["format"] = "bumlab-checkpoint";
  h["version"] = 1;
  h["head"] = to_string(m.head);
  h["seed"] = m.seed;
  json layers = json::array();
  for (const auto& l : m.layers) layers.push_back({{"weight", l.weight.shape()}, {"bias", l.bias.shape()}});
  h["layers"] = layers;
  json adapters = json::array();
  for (const auto& [k, a] : m.adapters)
    adapters.push_back({{"layer", k}, {"rank", a.rank}, {"frozen_base", a.frozen_base}});
  h["adapters"] = adapters;
  json arrays = json::array();
  const auto info = slot_info(m);
  const auto ss = slots(m);
  for (std::size_t i = 0; i < ss.size(); ++i)
    arrays.push_back({{"name", info[i].name}, {"shape", ss[i]->shape()}});
  h["arrays"] = arrays;
  return h;
}

inline void write_checkpoint(std::ostream& os, const ModelParams& m) {
  validate(m);
  os << checkpoint_header(m).dump() << '\n';
  for (const auto* t : slots(m)) {
    for (double v : t->values()) {
      std::uint64_t bits = detail::to_le(std::bit_cast<std::uint64_t>(v));
      char buf[8];
      std::memcpy(buf, &bits, 8);
      os.write(buf, 8);
    }
  }
  if (!os) throw std::runtime_error("checkpoint write failed");
}

inline ModelParams read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("checkpoint: missing header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: bad header: ") + e.what());
  }
  if (h.value("format", "") != "bumlab-checkpoint")
    throw std::runtime_error("checkpoint: not a bumlab checkpoint");
  ModelParams m;
  m.head = head_from_string(h.at("head").get<std::string>());
  m.seed = h.at("seed").get<std::uint64_t>();
  for (const auto& l : h.at("layers")) {
    m.layers.push_back({Tensor::zeros(l.at("weight").get<Shape>()), Tensor::zeros(l.at("bias").get<Shape>())});
  }
  for (const auto& a : h.at("adapters")) {
    const auto k = a.at("layer").get<std::size_t>();
    const auto r = a.at("rank").get<std::size_t>();
    if (k >= m.layers.size()) throw std::runtime_error("checkpoint: adapter on missing layer");
    const auto& w = m.layers[k].weight;
    m.adapters[k] = LoraAdapter{Tensor::zeros({w.rows(), r}), Tensor::zeros({r, w.cols()}), r,
                                a.at("frozen_base").get<bool>()};
  }
  auto ss = slots(m);
  const auto& arrays = h.at("arrays");
  if (arrays.size() != ss.size()) throw std::runtime_error("checkpoint: array table mismatch");
  for (std::size_t i = 0; i < ss.size(); ++i) {
    if (arrays[i].at("shape").get<Shape>() != ss[i]->shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + arrays[i].at("name").get<std::string>());
    for (auto& v : ss[i]->data()) {
      char buf[8];
      if (!is.read(buf, 8)) throw std::runtime_error("checkpoint: truncated data");
      std::uint64_t bits;
      std::memcpy(&bits, buf, 8);
      v = std::bit_cast<double>(detail::to_le(bits));
    }
  }
  validate(m);
  return m;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelParams& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(os, m);
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace bumlab::model

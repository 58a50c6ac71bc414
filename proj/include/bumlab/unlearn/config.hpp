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

#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bumlab/model/model.hpp"

namespace bumlab::unlearn {

enum class Strategy { hard, gradient_ascent, lora, scrub, fmd };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::hard: return "hard";
    case Strategy::gradient_ascent: return "gradient_ascent";
    case Strategy::lora: return "lora";
    case Strategy::scrub: return "scrub";
    case Strategy::fmd: return "fmd";
  }
  return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "hard") return Strategy::hard;
  if (s == "gradient_ascent" || s == "ga") return Strategy::gradient_ascent;
  if (s == "lora") return Strategy::lora;
  if (s == "scrub") return Strategy::scrub;
  if (s == "fmd") return Strategy::fmd;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

/// Display name used in result tables.
inline std::string display_name(Strategy s) {
  switch (s) {
    case Strategy::hard: return "Hard";
    case Strategy::gradient_ascent: return "GA";
    case Strategy::lora: return "LoRA";
    case Strategy::scrub: return "SCRUB";
    case Strategy::fmd: return "FMD";
  }
  return "?";
}

/// Which model SCRUB distills from.
enum class ScrubTeacher { gold, baseline };

inline ScrubTeacher scrub_teacher_from_string(const std::string& s) {
  if (s == "gold") return ScrubTeacher::gold;
  if (s == "baseline") return ScrubTeacher::baseline;
  throw std::invalid_argument("unknown scrub teacher '" + s + "'");
}

inline std::string to_string(ScrubTeacher t) { return t == ScrubTeacher::gold ? "gold" : "baseline"; }

struct StrategyConfig {
  Strategy strategy = Strategy::gradient_ascent;
  double eta = 1e-3;     // GA step size
  double alpha = 1.0;    // GA retain weight
  double beta = 1.0;     // LoRA forget weight
  std::size_t rank = 8;  // LoRA rank
  std::size_t steps = 50;
  double damping = 1e-2;  // FMD
  std::uint64_t seed = 0;

  double learning_rate = 1e-3;  // Adam rate for LoRA and SCRUB
  // Retain samples per step. 0 means as many as D_f; values >= |D_r| use all of D_r.
  std::size_t retain_batch = 0;
  double forget_kl_clip = 10.0;
  ScrubTeacher scrub_teacher = ScrubTeacher::gold;
  double divergence_limit = 50.0;  // stop when the forget loss exceeds this
  std::vector<std::size_t> lora_layers;  // empty: the final hidden layer

  std::size_t head_finetune_steps = 0;  // FMD post-step Adam steps on D_c
  double finetune_lr = 1e-3;
  bool full_hessian = false;       // FMD over all base parameters instead of the head
  double contrastive_weight = 0.0; // FMD embedding alignment between D_f and D_c pairs
  std::size_t cg_max_iter = 500;
  double cg_tol = 1e-8;

  void validate() const {
    if (strategy == Strategy::gradient_ascent && !(eta > 0)) throw std::invalid_argument("eta must be > 0");
    if (!(alpha >= 0) || !(beta >= 0)) throw std::invalid_argument("alpha and beta must be >= 0");
    if (!(damping >= 0)) throw std::invalid_argument("damping must be >= 0");
    if (!(learning_rate >= 0) || !(finetune_lr >= 0)) throw std::invalid_argument("learning rates must be >= 0");
    if (!(forget_kl_clip > 0)) throw std::invalid_argument("forget_kl_clip must be > 0");
  }
};

/// Per-step trace. The first two columns are always forget_loss and
/// retain_loss; strategies may append more.
struct StepLog {
  std::vector<std::string> columns{"forget_loss", "retain_loss"};
  std::vector<std::vector<double>> rows;

  std::size_t size() const { return rows.size(); }
  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw std::out_of_range("step log has no column '" + name + "'");
  }
  std::vector<double> trace(const std::string& name) const {
    const auto c = column(name);
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

inline void write_step_log(std::ostream& os, const StepLog& log) {
  os << "step";
  for (const auto& c : log.columns) os << '\t' << c;
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    os << i;
    for (double v : log.rows[i]) os << '\t' << v;
    os << '\n';
  }
}

struct UnlearnResult {
  model::ModelParams model;
  double wall_time_seconds = 0.0;
  double work_units = 0.0;  // samples through forward+backward
  StepLog step_log;
  bool truncated = false;  // divergence guard fired
  bool fallback = false;   // FMD solver failed, gradient step used
  std::string note;
};

}  // namespace bumlab::unlearn

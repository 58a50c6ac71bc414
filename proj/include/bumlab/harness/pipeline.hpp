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

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bumlab/biasgen/bundle_io.hpp"
#include "bumlab/biasgen/counterfactual.hpp"
#include "bumlab/biasgen/generators.hpp"
#include "bumlab/cobum/cobum.hpp"
#include "bumlab/eval/report.hpp"
#include "bumlab/harness/config.hpp"
#include "bumlab/harness/table.hpp"
#include "bumlab/model/checkpoint.hpp"
#include "bumlab/unlearn/fmd.hpp"
#include "bumlab/unlearn/strategies.hpp"

namespace bumlab::harness {

inline constexpr const char* kToolVersion = "0.1.0";

namespace fs = std::filesystem;

inline biasgen::DataBundle make_bundle(const ExperimentConfig& cfg) {
  const auto seeds = cfg.seeds();
  biasgen::DataBundle b;
  switch (cfg.scenario) {
    case biasgen::Scenario::patch: b = biasgen::gen_patch_bias(cfg.patch, seeds.data); break;
    case biasgen::Scenario::attribute: b = biasgen::gen_attribute_bias(cfg.attribute, seeds.data); break;
    case biasgen::Scenario::pose: b = biasgen::gen_pose_bias(cfg.pose, seeds.data); break;
  }
  if (cfg.has_counterfactual()) biasgen::attach_counterfactual(b, cfg.counterfactual_mode(), seeds.counterfactual);
  return b;
}

inline model::Architecture architecture(const ExperimentConfig& cfg, const biasgen::DataBundle& b) {
  model::Architecture a;
  a.head = cfg.head;
  a.layer_sizes.push_back(b.feature_dim());
  for (auto h : cfg.hidden) a.layer_sizes.push_back(h);
  a.layer_sizes.push_back(cfg.head == model::Head::sigmoid && b.num_classes == 2 ? 1 : b.num_classes);
  return a;
}

inline double pick_time(TimeColumn c, double wall_seconds, double work_units) {
  return c == TimeColumn::work ? work_units : wall_seconds;
}

/// Baseline training as an UnlearnResult so every row is timed the same way.
inline unlearn::UnlearnResult train_baseline(const ExperimentConfig& cfg, const biasgen::DataBundle& b) {
  auto tc = cfg.baseline_train();
  auto res = model::train(model::init_model(architecture(cfg, b), tc.seed), biasgen::labeled(b.train), tc);
  unlearn::UnlearnResult out;
  out.model = std::move(res.model);
  out.wall_time_seconds = res.wall_time_seconds;
  out.work_units = static_cast<double>(res.work_units);
  return out;
}

inline unlearn::UnlearnResult train_gold(const ExperimentConfig& cfg, const biasgen::DataBundle& b) {
  const auto tc = cfg.gold_train();
  return unlearn::hard_unlearn(b, architecture(cfg, b), tc, tc.seed);
}

/// Runs one strategy from `baseline`. `gold` is needed only for SCRUB with
/// the gold teacher.
inline unlearn::UnlearnResult run_strategy(const unlearn::StrategyConfig& sc, const model::ModelParams& baseline,
                                           const model::ModelParams* gold, const biasgen::DataBundle& b) {
  using unlearn::Strategy;
  switch (sc.strategy) {
    case Strategy::gradient_ascent: return unlearn::gradient_ascent(baseline, b, sc);
    case Strategy::lora: return unlearn::lora_unlearn(baseline, b, sc);
    case Strategy::scrub: {
      const model::ModelParams* teacher = sc.scrub_teacher == unlearn::ScrubTeacher::gold ? gold : &baseline;
      if (!teacher) throw UserError("scrub with the gold teacher needs a gold model");
      return unlearn::scrub_unlearn(baseline, *teacher, b, sc);
    }
    case Strategy::fmd: {
      if (b.counterfactual.empty()) throw UserError("fmd needs a counterfactual set in the bundle");
      std::vector<biasgen::Sample> originals;
      if (sc.contrastive_weight > 0)
        for (auto i : b.counterfactual_source) originals.push_back(b.train.at(i));
      return unlearn::fmd_unlearn(baseline, b.counterfactual, sc, originals);
    }
    case Strategy::hard: throw UserError("hard is not a post-hoc strategy; it is trained as the gold model");
  }
  throw std::logic_error("unknown strategy");
}

struct StageRecord {
  std::string name;
  double wall_seconds = 0;
  std::string status;  // ok / failed
  std::string error;
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string config_hash;
  std::string scenario;
  std::uint64_t seed = 0;
  std::string status = "ok";
  std::string failed_stage;
  std::string error;
  std::vector<StageRecord> stages;
  std::vector<std::pair<std::string, std::string>> checkpoints, reports, step_logs, tables, other;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    auto pairs = [](const auto& v) {
      nlohmann::json j = nlohmann::json::object();
      for (const auto& [k, p] : v) j[k] = p;
      return j;
    };
    nlohmann::json st = nlohmann::json::array();
    for (const auto& s : stages) {
      nlohmann::json e = {{"name", s.name}, {"wall_seconds", s.wall_seconds}, {"status", s.status}};
      if (!s.error.empty()) e["error"] = s.error;
      st.push_back(e);
    }
    nlohmann::json j = {{"tool", "bumlab"},
                        {"tool_version", tool_version},
                        {"config_hash", config_hash},
                        {"scenario", scenario},
                        {"seed", seed},
                        {"status", status},
                        {"stages", st},
                        {"checkpoints", pairs(checkpoints)},
                        {"reports", pairs(reports)},
                        {"step_logs", pairs(step_logs)},
                        {"tables", pairs(tables)},
                        {"files", pairs(other)},
                        {"warnings", warnings}};
    if (!failed_stage.empty()) {
      j["failed_stage"] = failed_stage;
      j["error"] = error;
    }
    return j;
  }

  /// Every listed path, relative to the run directory.
  std::vector<std::string> all_paths() const {
    std::vector<std::string> out;
    for (const auto* v : {&checkpoints, &reports, &step_logs, &tables, &other})
      for (const auto& [k, p] : *v) out.push_back(p);
    return out;
  }
};

/// Creates `dir`, refusing to reuse a non-empty one unless `force`.
inline void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw UserError("output path '" + dir.string() + "' exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw UserError("output directory '" + dir.string() + "' is not empty (use --force to replace it)");
      fs::remove_all(dir);
    }
  }
  fs::create_directories(dir);
}

inline void write_text(const fs::path& p, const std::function<void(std::ostream&)>& fn) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  fn(os);
  if (!os) throw std::runtime_error("write failed for " + p.string());
}

inline void write_json_file(const fs::path& p, const nlohmann::json& j) {
  write_text(p, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

/// Thrown when a pipeline stage fails; the manifest is already on disk.
struct StageError : std::runtime_error {
  std::string stage;
  bool user_error;
  StageError(std::string s, const std::string& what, bool user)
      : std::runtime_error("stage '" + s + "' failed: " + what), stage(std::move(s)), user_error(user) {}
};

struct RunResult {
  RunManifest manifest;
  std::vector<TableRow> rows;
};

/// generate -> baseline -> gold -> strategies -> evaluate -> Co-BUM -> tables.
/// Each strategy starts from the baseline checkpoint on disk. A failing
/// strategy becomes a "failed" row; any other failing stage aborts the run.
inline RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir, bool force = false) {
  cfg.validate();
  prepare_output_dir(out_dir, force);
  for (const char* sub : {"data", "checkpoints", "reports", "logs"}) fs::create_directories(out_dir / sub);

  RunResult rr;
  auto& man = rr.manifest;
  man.config_hash = config_hash(cfg);
  man.scenario = biasgen::to_string(cfg.scenario);
  man.seed = cfg.seed;
  const auto manifest_path = out_dir / "manifest.json";

  write_json_file(out_dir / "config.json", to_json(cfg));
  man.other.emplace_back("config", "config.json");

  auto stage = [&](const std::string& name, const std::function<void()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    StageRecord rec{name, 0, "ok", {}};
    try {
      body();
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      man.stages.push_back(rec);
      man.status = "failed";
      man.failed_stage = name;
      man.error = e.what();
      write_json_file(manifest_path, man.to_json());
      const bool user = dynamic_cast<const UserError*>(&e) || dynamic_cast<const std::invalid_argument*>(&e);
      throw StageError(name, e.what(), user);
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    man.stages.push_back(rec);
  };

  biasgen::DataBundle bundle;
  stage("generate", [&] {
    bundle = make_bundle(cfg);
    biasgen::write_bundle(bundle, out_dir / "data" / "bundle");
    man.other.emplace_back("bundle_csv", "data/bundle.csv");
    man.other.emplace_back("bundle_meta", "data/bundle.json");
  });

  const auto baseline_ckpt = out_dir / "checkpoints" / "baseline.ckpt";
  unlearn::UnlearnResult base_res, gold_res;
  stage("baseline", [&] {
    base_res = train_baseline(cfg, bundle);
    model::save_checkpoint(baseline_ckpt, base_res.model);
    man.checkpoints.emplace_back("Baseline", "checkpoints/baseline.ckpt");
  });
  stage("gold", [&] {
    gold_res = train_gold(cfg, bundle);
    model::save_checkpoint(out_dir / "checkpoints" / "hard.ckpt", gold_res.model);
    man.checkpoints.emplace_back("Hard", "checkpoints/hard.ckpt");
    write_text(out_dir / "logs" / "hard.tsv", [&](std::ostream& os) { unlearn::write_step_log(os, gold_res.step_log); });
    man.step_logs.emplace_back("Hard", "logs/hard.tsv");
  });

  struct Done {
    std::string name;
    std::string file;
    bool failed = false;
    std::string error;
    unlearn::UnlearnResult res;
  };
  std::vector<Done> done;
  stage("strategies", [&] {
    for (const auto& sc : cfg.strategies) {
      Done d;
      d.name = unlearn::display_name(sc.strategy);
      d.file = unlearn::to_string(sc.strategy);
      try {
        const auto baseline = model::load_checkpoint(baseline_ckpt);
        d.res = run_strategy(sc, baseline, &gold_res.model, bundle);
        model::save_checkpoint(out_dir / "checkpoints" / (d.file + ".ckpt"), d.res.model);
        man.checkpoints.emplace_back(d.name, "checkpoints/" + d.file + ".ckpt");
        write_text(out_dir / "logs" / (d.file + ".tsv"),
                   [&](std::ostream& os) { unlearn::write_step_log(os, d.res.step_log); });
        man.step_logs.emplace_back(d.name, "logs/" + d.file + ".tsv");
        if (d.res.truncated) man.warnings.push_back(d.name + ": divergence guard stopped the run early");
        if (d.res.fallback) man.warnings.push_back(d.name + ": solver fallback used (" + d.res.note + ")");
      } catch (const std::exception& e) {
        d.failed = true;
        d.error = e.what();
        man.warnings.push_back(d.name + " failed: " + e.what());
      }
      done.push_back(std::move(d));
    }
  });

  stage("evaluate", [&] {
    auto add = [&](const std::string& name, bool reference, const unlearn::UnlearnResult& r) {
      TableRow row;
      row.method = name;
      row.reference = reference;
      row.report = eval::evaluate(r.model, bundle, r.wall_time_seconds, r.work_units);
      row.time = pick_time(cfg.time_column, r.wall_time_seconds, r.work_units);
      rr.rows.push_back(row);
    };
    add("Baseline", true, base_res);
    add("Hard", true, gold_res);
    for (const auto& d : done) {
      if (d.failed) {
        TableRow row;
        row.method = d.name;
        row.failed = true;
        row.error = d.error;
        rr.rows.push_back(row);
      } else {
        add(d.name, false, d.res);
      }
    }
    const auto base_report = rr.rows[0].report;
    for (auto& row : rr.rows)
      if (!row.failed) eval::attach_baseline(row.report, base_report);
  });

  stage("cobum", [&] {
    const auto& base = rr.rows[0];
    const auto& gold = rr.rows[1];
    for (auto& row : rr.rows) {
      if (row.reference || row.failed) continue;
      try {
        row.cobum = cobum::component_scores(row.report, gold.report, base.report, row.time, gold.time, cfg.cobum);
      } catch (const std::invalid_argument& e) {
        man.warnings.push_back(row.method + ": no Co-BUM score (" + e.what() + ")");
      }
    }
  });

  stage("emit", [&] {
    for (const auto& row : rr.rows) {
      if (row.failed) continue;
      std::string file = row.method;
      for (auto& ch : file) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      auto j = eval::to_json(row.report);
      j["method"] = row.method;
      if (row.cobum) j["cobum"] = cobum::to_json(*row.cobum);
      write_json_file(out_dir / "reports" / (file + ".json"), j);
      man.reports.emplace_back(row.method, "reports/" + file + ".json");
    }
    write_text(out_dir / "results.csv", [&](std::ostream& os) { write_csv(os, rr.rows); });
    write_text(out_dir / "results.json", [&](std::ostream& os) { write_json(os, rr.rows); });
    write_text(out_dir / "results.md", [&](std::ostream& os) { write_markdown(os, rr.rows); });
    man.tables.emplace_back("csv", "results.csv");
    man.tables.emplace_back("json", "results.json");
    man.tables.emplace_back("markdown", "results.md");
  });

  write_json_file(manifest_path, man.to_json());
  return rr;
}

}  // namespace bumlab::harness

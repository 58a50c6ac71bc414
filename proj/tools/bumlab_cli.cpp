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

// bumlab command line: data generation, training, unlearning, evaluation and
// the full experiment pipeline.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bumlab/biasgen/bundle_io.hpp"
#include "bumlab/cobum/cobum.hpp"
#include "bumlab/eval/metrics.hpp"
#include "bumlab/eval/report.hpp"
#include "bumlab/harness/config.hpp"
#include "bumlab/harness/pipeline.hpp"
#include "bumlab/model/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace bumlab;
using harness::UserError;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config (INI)")->required();
  sub->add_option("--seed", c.seed, "master seed (overrides the config)");
  sub->add_option("--out", c.out, "output directory");
  sub->add_flag("--force", c.force, "replace existing outputs");
}

harness::ExperimentConfig load(const Common& c) {
  auto cfg = harness::load_config(c.config);
  if (c.seed) harness::set_seed(cfg, *c.seed);
  return cfg;
}

/// --out, else the config's `out`, else runs/<scenario>-seed<seed>. Relative
/// paths sit under $BUMLAB_OUT_ROOT when it is set.
fs::path out_dir(const Common& c, const harness::ExperimentConfig& cfg) {
  fs::path p = !c.out.empty() ? fs::path(c.out)
               : !cfg.out.empty()
                   ? fs::path(cfg.out)
                   : fs::path("runs") / (biasgen::to_string(cfg.scenario) + "-seed" + std::to_string(cfg.seed));
  if (p.is_relative()) {
    if (const char* root = std::getenv("BUMLAB_OUT_ROOT"); root && *root) p = fs::path(root) / p;
  }
  return p;
}

/// Creates `dir` and checks that none of `files` would be overwritten.
void claim(const fs::path& dir, const std::vector<std::string>& files, bool force) {
  fs::create_directories(dir);
  if (force) return;
  for (const auto& f : files)
    if (fs::exists(dir / f)) throw UserError("'" + (dir / f).string() + "' already exists (use --force to replace it)");
}

void require_file(const std::string& p, const char* what) {
  if (!fs::exists(p)) throw UserError(std::string(what) + " '" + p + "' does not exist");
}

biasgen::DataBundle load_bundle(const std::string& stem) {
  fs::path csv = stem;
  csv += ".csv";
  if (!fs::exists(csv)) throw UserError("bundle '" + stem + "' not found (expected " + csv.string() + ")");
  return biasgen::read_bundle(stem);
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void print_report(const std::string& name, const eval::EvalReport& r) {
  std::cout << name << ": FA=" << r.fa << " RA=" << r.ra << " TA=" << r.ta << " DP=" << r.dp_gap
            << " EO=" << r.eo_gap << " MIA=" << r.mia_auc << '\n';
}

int cmd_generate(const Common& c) {
  const auto cfg = load(c);
  const auto dir = out_dir(c, cfg);
  claim(dir, {"bundle.csv", "bundle.json"}, c.force);
  const auto b = harness::make_bundle(cfg);
  biasgen::write_bundle(b, dir / "bundle");
  std::cout << "wrote " << (dir / "bundle.csv").string() << " (train " << b.train.size() << ", forget "
            << b.forget.size() << ", counterfactual " << b.counterfactual.size() << ")\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& bundle_stem, bool gold) {
  const auto cfg = load(c);
  const auto dir = out_dir(c, cfg);
  const std::string name = gold ? "hard" : "baseline";
  std::vector<std::string> files{name + ".ckpt"};
  if (bundle_stem.empty()) files.insert(files.end(), {"bundle.csv", "bundle.json"});
  claim(dir, files, c.force);
  biasgen::DataBundle b;
  if (bundle_stem.empty()) {
    b = harness::make_bundle(cfg);
    biasgen::write_bundle(b, dir / "bundle");
  } else {
    b = load_bundle(bundle_stem);
  }
  const auto res = gold ? harness::train_gold(cfg, b) : harness::train_baseline(cfg, b);
  model::save_checkpoint(dir / files[0], res.model);
  std::cout << "wrote " << (dir / files[0]).string() << " (" << res.work_units << " work units, "
            << res.wall_time_seconds << " s)\n";
  return 0;
}

int cmd_unlearn(const Common& c, const std::string& strategy, const std::string& model_path,
                const std::string& bundle_stem, const std::string& teacher_path) {
  const auto cfg = load(c);
  const auto dir = out_dir(c, cfg);
  const auto s = unlearn::strategy_from_string(strategy);
  const std::string base = unlearn::to_string(s);
  claim(dir, {base + ".ckpt", base + ".tsv", base + ".json"}, c.force);
  require_file(model_path, "model checkpoint");
  const auto b = load_bundle(bundle_stem);
  const auto start = model::load_checkpoint(model_path);
  unlearn::UnlearnResult res;
  if (s == unlearn::Strategy::hard) {
    res = harness::train_gold(cfg, b);
  } else {
    const auto* sc = cfg.find(s);
    unlearn::StrategyConfig local;
    if (!sc) {
      local.strategy = s;
      local.seed = cfg.seeds().for_strategy(s);
      sc = &local;
    }
    std::optional<model::ModelParams> teacher;
    if (!teacher_path.empty()) {
      require_file(teacher_path, "teacher checkpoint");
      teacher = model::load_checkpoint(teacher_path);
    }
    res = harness::run_strategy(*sc, start, teacher ? &*teacher : nullptr, b);
  }
  model::save_checkpoint(dir / (base + ".ckpt"), res.model);
  harness::write_text(dir / (base + ".tsv"), [&](std::ostream& os) { unlearn::write_step_log(os, res.step_log); });
  harness::write_json_file(dir / (base + ".json"), {{"strategy", base},
                                                     {"wall_time_seconds", res.wall_time_seconds},
                                                     {"work_units", res.work_units},
                                                     {"steps", res.step_log.size()},
                                                     {"truncated", res.truncated},
                                                     {"fallback", res.fallback},
                                                     {"note", res.note}});
  std::cout << "wrote " << (dir / (base + ".ckpt")).string() << " (" << res.step_log.size() << " steps"
            << (res.truncated ? ", truncated" : "") << (res.fallback ? ", solver fallback" : "") << ")\n";
  return 0;
}

int cmd_eval(const Common& c, const std::vector<std::string>& models, const std::vector<std::string>& timings,
             const std::string& bundle_stem, const std::string& baseline_report) {
  const auto cfg = load(c);
  const auto dir = out_dir(c, cfg);
  if (!timings.empty() && timings.size() != models.size())
    throw UserError("--timing must be given once per --model");
  std::vector<std::string> files;
  for (const auto& m : models) files.push_back(stem_of(m) + ".report.json");
  claim(dir, files, c.force);
  const auto b = load_bundle(bundle_stem);
  std::optional<eval::EvalReport> base;
  if (!baseline_report.empty()) {
    require_file(baseline_report, "baseline report");
    base = eval::report_from_json(nlohmann::json::parse(std::ifstream(baseline_report)));
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    require_file(models[i], "model checkpoint");
    double wall = 0, work = 0;
    if (!timings.empty()) {
      require_file(timings[i], "timing file");
      const auto t = nlohmann::json::parse(std::ifstream(timings[i]));
      wall = t.value("wall_time_seconds", 0.0);
      work = t.value("work_units", 0.0);
    }
    auto r = eval::evaluate(model::load_checkpoint(models[i]), b, wall, work);
    if (base) eval::attach_baseline(r, *base);
    harness::write_json_file(dir / files[i], eval::to_json(r));
    print_report(stem_of(models[i]), r);
  }
  return 0;
}

int cmd_cobum(const Common& c, const std::string& u_path, const std::string& g_path, const std::string& b_path) {
  const auto cfg = load(c);
  const auto dir = out_dir(c, cfg);
  claim(dir, {"cobum.json"}, c.force);
  auto read = [](const std::string& p) {
    require_file(p, "report");
    return eval::report_from_json(nlohmann::json::parse(std::ifstream(p)));
  };
  const auto u = read(u_path), g = read(g_path), b = read(b_path);
  auto t = [&](const eval::EvalReport& r) { return harness::pick_time(cfg.time_column, r.wall_time_seconds, r.work_units); };
  const auto s = cobum::component_scores(u, g, b, t(u), t(g), cfg.cobum);
  harness::write_json_file(dir / "cobum.json", cobum::to_json(s));
  std::cout << "U=" << s.u << " F=" << s.f << " Q=" << s.q << " P=" << s.p << " E=" << s.e
            << " CoBUM=" << s.composite << '\n';
  return 0;
}

int cmd_run(const Common& c) {
  const auto cfg = load(c);
  const auto dir = out_dir(c, cfg);
  const auto rr = harness::run_experiment(cfg, dir, c.force);
  harness::write_markdown(std::cout, rr.rows);
  for (const auto& w : rr.manifest.warnings) std::cout << "warning: " << w << '\n';
  std::cout << "wrote " << (dir / "manifest.json").string() << '\n';
  return 0;
}

int cmd_saliency(const Common& c, const std::string& model_path, const std::string& bundle_stem,
                 const std::string& split, std::size_t limit) {
  const auto cfg = load(c);
  const auto dir = out_dir(c, cfg);
  const std::string file = "saliency_" + stem_of(model_path) + "_" + split + ".csv";
  claim(dir, {file}, c.force);
  require_file(model_path, "model checkpoint");
  const auto b = load_bundle(bundle_stem);
  const auto m = model::load_checkpoint(model_path);
  std::vector<biasgen::Sample> samples;
  if (split == "forget") samples = b.forget_samples();
  else if (split == "retain") samples = b.retain_samples();
  else if (split == "train") samples = b.train;
  else if (split == "val") samples = b.val;
  else if (split == "test") samples = b.test;
  else if (split == "counterfactual") samples = b.counterfactual;
  else throw UserError("unknown split '" + split + "'");
  if (limit > 0 && samples.size() > limit) samples.resize(limit);
  harness::write_text(dir / file, [&](std::ostream& os) {
    os << "index,label,group,bias_flag,bias_mass";
    for (std::size_t j = 0; j < b.semantic_dim; ++j) os << ",s" << j;
    for (std::size_t j = 0; j < b.bias_dim; ++j) os << ",b" << j;
    os << '\n';
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      const auto sal = eval::saliency(m, biasgen::features(s));
      double all = 0, bias = 0;
      for (std::size_t j = 0; j < sal.size(); ++j) {
        all += sal[j];
        if (j >= s.s.size()) bias += sal[j];
      }
      os << i << ',' << s.label << ',' << s.group << ',' << (s.bias_flag ? 1 : 0) << ','
         << biasgen::detail::format_double(all > 0 ? bias / all : 0.0);
      for (double v : sal) os << ',' << biasgen::detail::format_double(v);
      os << '\n';
    }
  });
  std::cout << "wrote " << (dir / file).string() << " (" << samples.size() << " samples, mean bias mass "
            << eval::bias_saliency_mass(m, samples) << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bumlab: bias mitigation through machine unlearning on synthetic data"};
  app.require_subcommand(1);

  Common c;
  std::string bundle, model_path, teacher, strategy, baseline_report, split = "forget";
  std::string u_report, g_report, b_report;
  std::vector<std::string> models, timings;
  std::size_t limit = 0;
  bool gold = false;

  auto* gen = app.add_subcommand("generate", "write a dataset bundle");
  add_common(gen, c);

  auto* train = app.add_subcommand("train", "train the baseline (or, with --gold, the retain-only model)");
  add_common(train, c);
  train->add_option("--bundle", bundle, "bundle stem; generated from the config when omitted");
  train->add_flag("--gold", gold, "train on the retain set only");

  auto* unl = app.add_subcommand("unlearn", "apply one unlearning strategy to a checkpoint");
  add_common(unl, c);
  unl->add_option("--strategy", strategy, "hard, ga, lora, scrub or fmd")->required();
  unl->add_option("--model", model_path, "starting checkpoint")->required();
  unl->add_option("--bundle", bundle, "bundle stem")->required();
  unl->add_option("--teacher", teacher, "teacher checkpoint for scrub");

  auto* ev = app.add_subcommand("eval", "evaluate checkpoints on a bundle");
  add_common(ev, c);
  ev->add_option("--model", models, "checkpoint (repeatable)")->required();
  ev->add_option("--bundle", bundle, "bundle stem")->required();
  ev->add_option("--timing", timings, "unlearn result json per model, for the time fields");
  ev->add_option("--baseline-report", baseline_report, "baseline report for the DP/EO drop percentages");

  auto* cb = app.add_subcommand("cobum", "Co-BUM scores from three reports");
  add_common(cb, c);
  cb->add_option("--unlearned", u_report, "report of the unlearned model")->required();
  cb->add_option("--gold", g_report, "report of the retain-only model")->required();
  cb->add_option("--baseline", b_report, "report of the baseline")->required();

  auto* run = app.add_subcommand("run", "full pipeline");
  add_common(run, c);

  auto* sal = app.add_subcommand("saliency", "per-sample input-gradient saliency");
  add_common(sal, c);
  sal->add_option("--model", model_path, "checkpoint")->required();
  sal->add_option("--bundle", bundle, "bundle stem")->required();
  sal->add_option("--split", split, "forget, retain, train, val, test or counterfactual");
  sal->add_option("--limit", limit, "at most this many samples (0: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "bumlab: error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*gen) return cmd_generate(c);
    if (*train) return cmd_train(c, bundle, gold);
    if (*unl) return cmd_unlearn(c, strategy, model_path, bundle, teacher);
    if (*ev) return cmd_eval(c, models, timings, bundle, baseline_report);
    if (*cb) return cmd_cobum(c, u_report, g_report, b_report);
    if (*run) return cmd_run(c);
    if (*sal) return cmd_saliency(c, model_path, bundle, split, limit);
  } catch (const harness::StageError& e) {
    std::cerr << "bumlab: error: " << e.what() << '\n';
    return e.user_error ? 1 : 2;
  } catch (const UserError& e) {
    std::cerr << "bumlab: error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "bumlab: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "bumlab: internal error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

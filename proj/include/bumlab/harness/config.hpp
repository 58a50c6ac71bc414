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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "bumlab/biasgen/counterfactual.hpp"
#include "bumlab/biasgen/generators.hpp"
#include "bumlab/cobum/cobum.hpp"
#include "bumlab/model/train.hpp"
#include "bumlab/unlearn/config.hpp"

namespace bumlab::harness {

/// Bad input from the user (config, flags, paths). Maps to exit code 1.
struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TimeColumn { work, wall };

inline std::string to_string(TimeColumn t) { return t == TimeColumn::work ? "work" : "wall"; }

inline TimeColumn time_column_from_string(const std::string& s) {
  if (s == "work") return TimeColumn::work;
  if (s == "wall") return TimeColumn::wall;
  throw UserError("time_column must be 'work' or 'wall', got '" + s + "'");
}

/// Fixed offsets added to the master seed, one per pipeline role.
struct SubSeeds {
  std::uint64_t data, baseline, gold, ga, lora, scrub, fmd, counterfactual;

  static SubSeeds from(std::uint64_t master) {
    return {master + 101, master + 202, master + 303, master + 404,
            master + 505, master + 606, master + 707, master + 808};
  }

  std::uint64_t for_strategy(unlearn::Strategy s) const {
    switch (s) {
      case unlearn::Strategy::hard: return gold;
      case unlearn::Strategy::gradient_ascent: return ga;
      case unlearn::Strategy::lora: return lora;
      case unlearn::Strategy::scrub: return scrub;
      case unlearn::Strategy::fmd: return fmd;
    }
    throw std::logic_error("unknown strategy");
  }
};

struct ExperimentConfig {
  biasgen::Scenario scenario = biasgen::Scenario::patch;
  std::uint64_t seed = 1;
  std::string out;  // may be empty; the CLI then picks a default
  TimeColumn time_column = TimeColumn::work;

  biasgen::PatchConfig patch;
  biasgen::AttributeConfig attribute;
  biasgen::PoseConfig pose;
  std::optional<biasgen::CounterfactualMode> counterfactual;  // unset: scenario default

  std::vector<std::size_t> hidden{32};
  model::Head head = model::Head::softmax;
  model::TrainConfig train;
  std::size_t hard_epochs = 0;  // 0: same as train.epochs

  std::vector<unlearn::StrategyConfig> strategies;  // in table order
  cobum::CoBumParams cobum;

  SubSeeds seeds() const { return SubSeeds::from(seed); }

  std::size_t num_classes() const {
    switch (scenario) {
      case biasgen::Scenario::patch: return patch.num_classes;
      case biasgen::Scenario::attribute: return 2;
      case biasgen::Scenario::pose: return pose.num_classes;
    }
    return 0;
  }

  bool has_counterfactual() const { return scenario != biasgen::Scenario::attribute; }

  biasgen::CounterfactualMode counterfactual_mode() const {
    return counterfactual ? *counterfactual : biasgen::default_counterfactual_mode(scenario);
  }

  model::TrainConfig baseline_train() const {
    auto t = train;
    t.seed = seeds().baseline;
    return t;
  }

  model::TrainConfig gold_train() const {
    auto t = train;
    if (hard_epochs > 0) t.epochs = hard_epochs;
    t.seed = seeds().gold;
    return t;
  }

  const unlearn::StrategyConfig* find(unlearn::Strategy s) const {
    for (const auto& c : strategies)
      if (c.strategy == s) return &c;
    return nullptr;
  }

  void validate() const {
    train.validate();
    cobum.validate();
    if (hidden.empty()) throw UserError("model.hidden needs at least one layer width");
    for (auto h : hidden)
      if (h == 0) throw UserError("model.hidden widths must be positive");
    std::set<unlearn::Strategy> seen;
    for (const auto& s : strategies) {
      if (s.strategy == unlearn::Strategy::hard)
        throw UserError("'hard' is always run as the gold model; do not list it under strategies");
      if (!seen.insert(s.strategy).second) throw UserError("strategy '" + unlearn::to_string(s.strategy) + "' listed twice");
      if (s.strategy == unlearn::Strategy::fmd && !has_counterfactual())
        throw UserError("fmd needs a counterfactual set, which the attribute scenario does not define");
      if (s.steps < 1 && s.strategy != unlearn::Strategy::fmd) throw UserError("steps must be >= 1");
      s.validate();
    }
  }
};

namespace detail {

using boost::property_tree::ptree;

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Typed reads from one INI section, remembering which keys were consumed.
class Section {
 public:
  Section(std::string name, const ptree* tree) : name_(std::move(name)), tree_(tree) {}

  bool present() const { return tree_ != nullptr; }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    if (!tree_) return std::nullopt;
    auto v = tree_->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return trim(*v);
  }

  template <typename T>
  void read(const std::string& key, T& into) {
    auto v = raw(key);
    if (!v) return;
    into = parse<T>(key, *v);
  }

  void read_bool(const std::string& key, bool& into) {
    auto v = raw(key);
    if (!v) return;
    if (*v == "true" || *v == "1" || *v == "yes") into = true;
    else if (*v == "false" || *v == "0" || *v == "no") into = false;
    else fail(key, *v, "a boolean");
  }

  void read_sizes(const std::string& key, std::vector<std::size_t>& into) {
    auto v = raw(key);
    if (!v) return;
    into.clear();
    for (const auto& item : split_list(*v)) into.push_back(parse<std::size_t>(key, item));
  }

  void reject_unknown() const {
    if (!tree_) return;
    for (const auto& kv : *tree_)
      if (!used_.count(kv.first)) throw UserError("unknown key '" + kv.first + "' in section [" + name_ + "]");
  }

 private:
  template <typename T>
  T parse(const std::string& key, const std::string& v) const {
    T out{};
    const char* end = v.data() + v.size();
    auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end) fail(key, v, std::is_integral_v<T> ? "an unsigned integer" : "a number");
    return out;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& v, const char* what) const {
    throw UserError(name_ + "." + key + ": expected " + what + ", got '" + v + "'");
  }

  std::string name_;
  const ptree* tree_;
  std::set<std::string> used_;
};

inline const ptree* child(const ptree& root, const std::string& name) {
  auto c = root.get_child_optional(name);
  return c ? &*c : nullptr;
}

inline std::vector<unlearn::Strategy> default_strategies(biasgen::Scenario s) {
  using unlearn::Strategy;
  if (s == biasgen::Scenario::attribute) return {Strategy::gradient_ascent, Strategy::lora, Strategy::scrub};
  return {Strategy::gradient_ascent, Strategy::lora, Strategy::scrub, Strategy::fmd};
}

inline std::string section_name(unlearn::Strategy s) {
  return s == unlearn::Strategy::gradient_ascent ? "ga" : unlearn::to_string(s);
}

}  // namespace detail

namespace detail {

inline ExperimentConfig parse_config(std::istream& in, const std::string& origin) {
  ptree root;
  try {
    boost::property_tree::ini_parser::read_ini(in, root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw UserError(origin + ": " + e.message() + " at line " + std::to_string(e.line()));
  }
  static const std::set<std::string> known = {"experiment", "data", "model", "train", "ga",
                                              "lora",       "scrub", "fmd",  "cobum"};
  for (const auto& kv : root) {
    if (kv.second.empty() && !kv.second.data().empty())
      throw UserError(origin + ": key '" + kv.first + "' must sit inside a section");
    if (!known.count(kv.first)) throw UserError(origin + ": unknown section [" + kv.first + "]");
  }

  ExperimentConfig cfg;
  Section ex("experiment", detail::child(root, "experiment"));
  if (auto s = ex.raw("scenario")) {
    try {
      cfg.scenario = biasgen::scenario_from_string(*s);
    } catch (const std::invalid_argument& e) {
      throw UserError(e.what());
    }
  }
  ex.read("seed", cfg.seed);
  if (auto o = ex.raw("out")) cfg.out = *o;
  if (auto t = ex.raw("time_column")) cfg.time_column = time_column_from_string(*t);
  if (auto c = ex.raw("counterfactual")) cfg.counterfactual = biasgen::counterfactual_mode_from_string(*c);
  std::vector<unlearn::Strategy> order = detail::default_strategies(cfg.scenario);
  if (auto list = ex.raw("strategies")) {
    order.clear();
    for (const auto& name : detail::split_list(*list)) {
      try {
        order.push_back(unlearn::strategy_from_string(name));
      } catch (const std::invalid_argument& e) {
        throw UserError(e.what());
      }
    }
  }
  ex.reject_unknown();

  Section data("data", detail::child(root, "data"));
  switch (cfg.scenario) {
    case biasgen::Scenario::patch: {
      auto& p = cfg.patch;
      data.read("n_per_class", p.n_per_class);
      data.read("num_classes", p.num_classes);
      data.read("target_class", p.target_class);
      data.read("fraction", p.fraction);
      data.read("marker_value", p.marker_value);
      data.read("semantic_dim", p.semantic_dim);
      data.read("bias_dim", p.bias_dim);
      data.read("class_separation", p.class_separation);
      break;
    }
    case biasgen::Scenario::attribute: {
      auto& a = cfg.attribute;
      data.read("n", a.n);
      data.read("corr_ratio", a.corr_ratio);
      data.read("semantic_dim", a.semantic_dim);
      data.read("bias_dim", a.bias_dim);
      data.read("class_separation", a.class_separation);
      data.read("group_signal", a.group_signal);
      break;
    }
    case biasgen::Scenario::pose: {
      auto& p = cfg.pose;
      data.read("n", p.n);
      data.read("num_classes", p.num_classes);
      data.read("skew", p.skew);
      data.read("semantic_dim", p.semantic_dim);
      data.read("bias_dim", p.bias_dim);
      data.read("class_separation", p.class_separation);
      break;
    }
  }
  data.reject_unknown();

  Section mdl("model", detail::child(root, "model"));
  mdl.read_sizes("hidden", cfg.hidden);
  if (auto h = mdl.raw("head")) {
    try {
      cfg.head = model::head_from_string(*h);
    } catch (const std::invalid_argument& e) {
      throw UserError(e.what());
    }
  }
  mdl.reject_unknown();

  Section tr("train", detail::child(root, "train"));
  tr.read("learning_rate", cfg.train.learning_rate);
  tr.read("epochs", cfg.train.epochs);
  tr.read("batch_size", cfg.train.batch_size);
  tr.read("hard_epochs", cfg.hard_epochs);
  tr.reject_unknown();

  const auto seeds = cfg.seeds();
  std::map<std::string, Section> sections;
  for (const char* name : {"ga", "lora", "scrub", "fmd"}) sections.emplace(name, Section(name, detail::child(root, name)));
  for (auto s : order) {
    unlearn::StrategyConfig sc;
    sc.strategy = s;
    sc.seed = seeds.for_strategy(s);
    if (s == unlearn::Strategy::hard) {
      cfg.strategies.push_back(sc);
      continue;
    }
    auto& sec = sections.at(detail::section_name(s));
    sec.read("steps", sc.steps);
    switch (s) {
      case unlearn::Strategy::gradient_ascent:
        sec.read("eta", sc.eta);
        sec.read("alpha", sc.alpha);
        sec.read("retain_batch", sc.retain_batch);
        sec.read("divergence_limit", sc.divergence_limit);
        break;
      case unlearn::Strategy::lora:
        sec.read("beta", sc.beta);
        sec.read("rank", sc.rank);
        sec.read("learning_rate", sc.learning_rate);
        sec.read("retain_batch", sc.retain_batch);
        sec.read_sizes("layers", sc.lora_layers);
        break;
      case unlearn::Strategy::scrub:
        sec.read("learning_rate", sc.learning_rate);
        sec.read("retain_batch", sc.retain_batch);
        sec.read("forget_kl_clip", sc.forget_kl_clip);
        if (auto t = sec.raw("teacher")) sc.scrub_teacher = unlearn::scrub_teacher_from_string(*t);
        break;
      case unlearn::Strategy::fmd:
        sec.read("damping", sc.damping);
        sec.read("finetune_steps", sc.head_finetune_steps);
        sec.read("finetune_lr", sc.finetune_lr);
        sec.read_bool("full_hessian", sc.full_hessian);
        sec.read("contrastive_weight", sc.contrastive_weight);
        sec.read("cg_max_iter", sc.cg_max_iter);
        sec.read("cg_tol", sc.cg_tol);
        break;
      case unlearn::Strategy::hard: break;
    }
    cfg.strategies.push_back(sc);
  }
  // Sections for strategies that are not run are still checked for typos.
  for (auto& [name, sec] : sections) {
    if (!sec.present()) continue;
    bool listed = false;
    for (auto s : order) listed |= detail::section_name(s) == name;
    if (!listed) {
      for (const char* k : {"steps", "eta", "alpha", "retain_batch", "divergence_limit", "beta", "rank", "learning_rate",
                            "layers", "forget_kl_clip", "teacher", "damping", "finetune_steps", "finetune_lr",
                            "full_hessian", "contrastive_weight", "cg_max_iter", "cg_tol"})
        sec.raw(k);
    }
    sec.reject_unknown();
  }

  Section cb("cobum", detail::child(root, "cobum"));
  cb.read("alpha_u", cfg.cobum.alpha_u);
  cb.read("alpha_f", cfg.cobum.alpha_f);
  cb.read("alpha_q", cfg.cobum.alpha_q);
  cb.read("alpha_p", cfg.cobum.alpha_p);
  cb.read("alpha_e", cfg.cobum.alpha_e);
  cb.read("gamma", cfg.cobum.gamma);
  cb.read("kappa", cfg.cobum.kappa);
  cb.read("epsilon", cfg.cobum.epsilon);
  cb.read("min_time", cfg.cobum.min_time);
  cb.reject_unknown();

  cfg.validate();
  return cfg;
}

}  // namespace detail

/// Parses INI text. Unknown sections or keys are errors.
inline ExperimentConfig parse_config(std::istream& in, const std::string& origin = "<config>") {
  try {
    return detail::parse_config(in, origin);
  } catch (const UserError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UserError(origin + ": " + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open config file '" + path.string() + "'");
  return parse_config(in, path.string());
}

/// Re-derives every sub-seed after the master seed changes.
inline void set_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  const auto s = cfg.seeds();
  for (auto& sc : cfg.strategies) sc.seed = s.for_strategy(sc.strategy);
}

inline nlohmann::json strategy_json(const unlearn::StrategyConfig& s) {
  return {{"strategy", unlearn::to_string(s.strategy)},
          {"eta", s.eta},
          {"alpha", s.alpha},
          {"beta", s.beta},
          {"rank", s.rank},
          {"steps", s.steps},
          {"damping", s.damping},
          {"seed", s.seed},
          {"learning_rate", s.learning_rate},
          {"retain_batch", s.retain_batch},
          {"forget_kl_clip", s.forget_kl_clip},
          {"scrub_teacher", unlearn::to_string(s.scrub_teacher)},
          {"divergence_limit", s.divergence_limit},
          {"lora_layers", s.lora_layers},
          {"finetune_steps", s.head_finetune_steps},
          {"finetune_lr", s.finetune_lr},
          {"full_hessian", s.full_hessian},
          {"contrastive_weight", s.contrastive_weight},
          {"cg_max_iter", s.cg_max_iter},
          {"cg_tol", s.cg_tol}};
}

/// Canonical form of everything that affects results (the output path does not).
inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json data;
  switch (c.scenario) {
    case biasgen::Scenario::patch: data = c.patch.to_json(); break;
    case biasgen::Scenario::attribute: data = c.attribute.to_json(); break;
    case biasgen::Scenario::pose: data = c.pose.to_json(); break;
  }
  nlohmann::json strategies = nlohmann::json::array();
  for (const auto& s : c.strategies) strategies.push_back(strategy_json(s));
  return {{"scenario", biasgen::to_string(c.scenario)},
          {"seed", c.seed},
          {"time_column", to_string(c.time_column)},
          {"counterfactual", c.has_counterfactual() ? biasgen::to_string(c.counterfactual_mode()) : "none"},
          {"data", data},
          {"model", {{"hidden", c.hidden}, {"head", model::to_string(c.head)}}},
          {"train",
           {{"learning_rate", c.train.learning_rate},
            {"epochs", c.train.epochs},
            {"batch_size", c.train.batch_size},
            {"hard_epochs", c.hard_epochs}}},
          {"strategies", strategies},
          {"cobum", cobum::to_json(c.cobum)}};
}

/// 64-bit FNV-1a of the canonical JSON, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_json(c).dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace bumlab::harness

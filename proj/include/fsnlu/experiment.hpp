// Copyright 2026 The fsnlu Authors
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

// Experiment configuration files and the multi-seed protocol: per seed,
// re-split the intents, meta-train, evaluate on meta-test episodes.

#pragma once

#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fsnlu/augment.hpp"
#include "fsnlu/contrastive.hpp"
#include "fsnlu/corpus.hpp"
#include "fsnlu/eval.hpp"
#include "fsnlu/synthetic.hpp"
#include "fsnlu/syntax.hpp"
#include "fsnlu/trainer.hpp"
#include "json.hpp"

namespace fsnlu {

enum class SplitStyle { Snips, Atis };

struct SplitConfig {
  SplitStyle style = SplitStyle::Snips;
  std::size_t n_train = 7;
  std::size_t n_test = 3;
  std::size_t min_count = 15;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string dataset = "snips-like";  // bundled grammar, grammar file (.json) or corpus (.jsonl)
  std::uint64_t dataset_seed = 0;      // generator seed for grammar datasets
  std::optional<std::size_t> per_intent;
  SplitConfig split;
  std::size_t seeds = 5;
  std::uint64_t first_seed = 0;
  std::size_t n_test_episodes = 100;
  TrainConfig train;
  std::string lexicon;     // synonym lexicon file; built-in when empty
  std::string translator;  // translation command; in-process mock when empty
  std::string out = "results.csv";

  std::size_t kmax() const { return train.sampler.kmax; }

  void validate() const {
    if (seeds < 1) throw ConfigError("seeds: must be >= 1");
    if (n_test_episodes < 1) throw ConfigError("n_test_episodes: must be >= 1");
    train.validate();
  }
};

namespace detail {

template <class Enum>
struct EnumName {
  Enum value;
  const char* name;
};

template <class Enum, std::size_t N>
Enum parse_enum(const std::string& s, const EnumName<Enum> (&table)[N], const std::string& path) {
  for (const auto& e : table)
    if (s == e.name) return e.value;
  std::string allowed;
  for (const auto& e : table) allowed += std::string(allowed.empty() ? "" : "|") + e.name;
  throw ConfigError(path + ": '" + s + "' is not one of " + allowed);
}

template <class Enum, std::size_t N>
const char* enum_name(Enum v, const EnumName<Enum> (&table)[N]) {
  for (const auto& e : table)
    if (v == e.value) return e.name;
  return "?";
}

inline constexpr EnumName<AugmentMethod> kAugMethods[] = {
    {AugmentMethod::SlotList, "slotlist"},
    {AugmentMethod::Backtranslation, "bt"},
    {AugmentMethod::EDA, "eda"}};
inline constexpr EnumName<AugmentLevel> kAugLevels[] = {
    {AugmentLevel::SupportMetaTrain, "s-mtrain"},
    {AugmentLevel::SupportQueryMetaTrain, "sq-mtrain"},
    {AugmentLevel::SupportMetaTrainAndTest, "s-mtrain-mtest"},
    {AugmentLevel::SupportMetaTest, "s-mtest"}};
inline constexpr EnumName<ContrastiveLevel> kClLevels[] = {
    {ContrastiveLevel::SupportMetaTrain, "s-mtrain"},
    {ContrastiveLevel::SupportAndQueryMetaTrain, "sq-mtrain"}};
inline constexpr EnumName<EdaOp> kEdaOps[] = {{EdaOp::SynonymReplace, "synonym"},
                                             {EdaOp::RandomInsert, "insert"},
                                             {EdaOp::RandomSwap, "swap"},
                                             {EdaOp::RandomDelete, "delete"}};
inline constexpr EnumName<Distance> kDistances[] = {{Distance::SquaredEuclidean, "squared_euclidean"},
                                                    {Distance::Euclidean, "euclidean"}};
inline constexpr EnumName<OptimizerKind> kOptimizers[] = {{OptimizerKind::Adam, "adam"},
                                                          {OptimizerKind::SGD, "sgd"}};
inline constexpr EnumName<SplitStyle> kSplitStyles[] = {{SplitStyle::Snips, "snips"},
                                                        {SplitStyle::Atis, "atis"}};

// Typed read of j[key] with a field path in the error.
template <class T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError((path.empty() ? std::string(key) : path + "." + key) + ": wrong type");
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                           const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError((path.empty() ? key : path + "." + key) + ": unknown field");
  }
}

// "off", "ic" or "icsf".
inline void set_contrastive_mode(TrainConfig& t, const std::string& mode, const std::string& path) {
  if (mode == "off") {
    t.contrastive.reset();
    return;
  }
  if (mode != "ic" && mode != "icsf") throw ConfigError(path + ": '" + mode + "' is not one of off|ic|icsf");
  if (!t.contrastive) t.contrastive = ContrastiveConfig{};
  if (mode == "ic") t.contrastive->lambda_sf = 0.0;
}

// Comma-separated subset of feat|chunk|mtl, or "off".
inline void set_syntax_mode(TrainConfig& t, const std::string& modes, const std::string& path) {
  SyntaxConfig s = t.syntax.value_or(SyntaxConfig{});
  s.feature_concat = s.noun_chunks = s.multitask = false;
  std::stringstream in(modes);
  bool off = false;
  for (std::string m; std::getline(in, m, ',');) {
    if (m == "feat")
      s.feature_concat = true;
    else if (m == "chunk")
      s.noun_chunks = true;
    else if (m == "mtl")
      s.multitask = true;
    else if (m == "off")
      off = true;
    else
      throw ConfigError(path + ": '" + m + "' is not one of feat|mtl|chunk|off");
  }
  if (off || !s.any())
    t.syntax.reset();
  else
    t.syntax = s;
}

inline std::string syntax_mode(const std::optional<SyntaxConfig>& s) {
  if (!s || !s->any()) return "off";
  std::string out;
  auto add = [&](bool on, const char* n) {
    if (on) out += std::string(out.empty() ? "" : ",") + n;
  };
  add(s->feature_concat, "feat");
  add(s->noun_chunks, "chunk");
  add(s->multitask, "mtl");
  return out;
}

}  // namespace detail

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  using namespace detail;
  ExperimentConfig c;
  reject_unknown(j,
                 {"name", "dataset", "dataset_seed", "per_intent", "split", "seeds", "first_seed",
                  "n_test_episodes", "kmax", "max_query_per_class", "train", "contrastive",
                  "augmentation", "syntax", "lexicon", "translator", "out"},
                 "");
  read(j, "name", c.name, "");
  read(j, "dataset", c.dataset, "");
  read(j, "dataset_seed", c.dataset_seed, "");
  if (j.contains("per_intent")) {
    std::size_t n = 0;
    read(j, "per_intent", n, "");
    c.per_intent = n;
  }
  read(j, "seeds", c.seeds, "");
  read(j, "first_seed", c.first_seed, "");
  read(j, "n_test_episodes", c.n_test_episodes, "");
  read(j, "kmax", c.train.sampler.kmax, "");
  read(j, "max_query_per_class", c.train.sampler.max_query_per_class, "");
  read(j, "lexicon", c.lexicon, "");
  read(j, "translator", c.translator, "");
  read(j, "out", c.out, "");

  if (j.contains("split")) {
    const auto& s = j["split"];
    reject_unknown(s, {"style", "n_train", "n_test", "min_count"}, "split");
    std::string style = "snips";
    read(s, "style", style, "split");
    c.split.style = parse_enum(style, kSplitStyles, "split.style");
    if (c.split.style == SplitStyle::Atis) {
      c.split.n_train = 5;
      c.split.n_test = 7;
    }
    read(s, "n_train", c.split.n_train, "split");
    read(s, "n_test", c.split.n_test, "split");
    read(s, "min_count", c.split.min_count, "split");
  }

  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t,
                   {"episodes", "learning_rate", "optimizer", "adam_beta1", "adam_beta2",
                    "adam_eps", "distance", "encoder"},
                   "train");
    read(t, "episodes", c.train.episodes, "train");
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "adam_beta1", c.train.adam_beta1, "train");
    read(t, "adam_beta2", c.train.adam_beta2, "train");
    read(t, "adam_eps", c.train.adam_eps, "train");
    std::string s;
    if (t.contains("optimizer")) {
      read(t, "optimizer", s, "train");
      c.train.optimizer = parse_enum(s, kOptimizers, "train.optimizer");
    }
    if (t.contains("distance")) {
      read(t, "distance", s, "train");
      c.train.distance = parse_enum(s, kDistances, "train.distance");
    }
    if (t.contains("encoder")) {
      const auto& e = t["encoder"];
      reject_unknown(e, {"dim", "ff_dim", "layers", "max_len", "init_range"}, "train.encoder");
      read(e, "dim", c.train.encoder.dim, "train.encoder");
      read(e, "ff_dim", c.train.encoder.ff_dim, "train.encoder");
      read(e, "layers", c.train.encoder.layers, "train.encoder");
      read(e, "max_len", c.train.encoder.max_len, "train.encoder");
      read(e, "init_range", c.train.encoder.init_range, "train.encoder");
    }
  }

  if (j.contains("contrastive")) {
    const auto& t = j["contrastive"];
    reject_unknown(t, {"mode", "lambda_ic", "lambda_sf", "temperature", "level", "normalize"},
                   "contrastive");
    std::string mode = "icsf";
    read(t, "mode", mode, "contrastive");
    if (mode != "off") {
      ContrastiveConfig cc;
      read(t, "lambda_ic", cc.lambda_ic, "contrastive");
      read(t, "lambda_sf", cc.lambda_sf, "contrastive");
      read(t, "temperature", cc.temperature, "contrastive");
      read(t, "normalize", cc.normalize, "contrastive");
      if (t.contains("level")) {
        std::string level;
        read(t, "level", level, "contrastive");
        cc.level = parse_enum(level, kClLevels, "contrastive.level");
      }
      c.train.contrastive = cc;
    }
    set_contrastive_mode(c.train, mode, "contrastive.mode");
  }

  if (j.contains("augmentation")) {
    const auto& t = j["augmentation"];
    reject_unknown(t, {"method", "level", "eda_alpha", "eda_ops", "bt_temperature", "bt_pivot"},
                   "augmentation");
    std::string method = "off";
    read(t, "method", method, "augmentation");
    if (method != "off") {
      AugmentationConfig a;
      a.method = parse_enum(method, kAugMethods, "augmentation.method");
      if (t.contains("level")) {
        std::string level;
        read(t, "level", level, "augmentation");
        a.level = parse_enum(level, kAugLevels, "augmentation.level");
      }
      read(t, "eda_alpha", a.eda_alpha, "augmentation");
      read(t, "bt_temperature", a.bt_temperature, "augmentation");
      read(t, "bt_pivot", a.bt_pivot, "augmentation");
      if (t.contains("eda_ops")) {
        std::vector<std::string> ops;
        read(t, "eda_ops", ops, "augmentation");
        a.eda_ops.clear();
        for (const auto& op : ops) a.eda_ops.push_back(parse_enum(op, kEdaOps, "augmentation.eda_ops"));
      }
      c.train.augmentation = a;
    }
  }

  if (j.contains("syntax")) {
    const auto& t = j["syntax"];
    reject_unknown(t, {"mode", "beta"}, "syntax");
    std::string mode = "off";
    if (t.contains("mode")) {
      if (t["mode"].is_array()) {
        std::vector<std::string> modes;
        read(t, "mode", modes, "syntax");
        mode.clear();
        for (const auto& m : modes) mode += (mode.empty() ? "" : ",") + m;
      } else {
        read(t, "mode", mode, "syntax");
      }
    }
    detail::set_syntax_mode(c.train, mode, "syntax.mode");
    if (c.train.syntax) read(t, "beta", c.train.syntax->beta, "syntax");
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using namespace detail;
  nlohmann::json j;
  j["name"] = c.name;
  j["dataset"] = c.dataset;
  j["dataset_seed"] = c.dataset_seed;
  if (c.per_intent) j["per_intent"] = *c.per_intent;
  j["split"] = {{"style", enum_name(c.split.style, kSplitStyles)},
                {"n_train", c.split.n_train},
                {"n_test", c.split.n_test},
                {"min_count", c.split.min_count}};
  j["seeds"] = c.seeds;
  j["first_seed"] = c.first_seed;
  j["n_test_episodes"] = c.n_test_episodes;
  j["kmax"] = c.train.sampler.kmax;
  j["max_query_per_class"] = c.train.sampler.max_query_per_class;
  const auto& t = c.train;
  j["train"] = {{"episodes", t.episodes},
                {"learning_rate", t.learning_rate},
                {"optimizer", enum_name(t.optimizer, kOptimizers)},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_eps", t.adam_eps},
                {"distance", enum_name(t.distance, kDistances)},
                {"encoder",
                 {{"dim", t.encoder.dim},
                  {"ff_dim", t.encoder.ff_dim},
                  {"layers", t.encoder.layers},
                  {"max_len", t.encoder.max_len},
                  {"init_range", t.encoder.init_range}}}};
  if (t.contrastive)
    j["contrastive"] = {{"mode", t.contrastive->lambda_sf > 0.0 ? "icsf" : "ic"},
                        {"lambda_ic", t.contrastive->lambda_ic},
                        {"lambda_sf", t.contrastive->lambda_sf},
                        {"temperature", t.contrastive->temperature},
                        {"level", enum_name(t.contrastive->level, kClLevels)},
                        {"normalize", t.contrastive->normalize}};
  else
    j["contrastive"] = {{"mode", "off"}};
  if (t.augmentation) {
    std::vector<std::string> ops;
    for (auto op : t.augmentation->eda_ops) ops.push_back(enum_name(op, kEdaOps));
    j["augmentation"] = {{"method", enum_name(t.augmentation->method, kAugMethods)},
                         {"level", enum_name(t.augmentation->level, kAugLevels)},
                         {"eda_alpha", t.augmentation->eda_alpha},
                         {"eda_ops", ops},
                         {"bt_temperature", t.augmentation->bt_temperature},
                         {"bt_pivot", t.augmentation->bt_pivot}};
  } else {
    j["augmentation"] = {{"method", "off"}};
  }
  j["syntax"] = {{"mode", syntax_mode(t.syntax)}};
  if (t.syntax) j["syntax"]["beta"] = t.syntax->beta;
  j["lexicon"] = c.lexicon;
  j["translator"] = c.translator;
  j["out"] = c.out;
  return j;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  try {
    return experiment_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Command-line overrides; unset fields leave the config alone.
struct ExperimentOverrides {
  std::optional<std::string> dataset;
  std::optional<std::size_t> kmax;
  std::optional<std::size_t> seeds;
  std::optional<std::size_t> episodes;
  std::optional<double> lambda_ic;
  std::optional<double> lambda_sf;
  std::optional<double> beta;
  std::optional<std::string> aug;
  std::optional<std::string> aug_level;
  std::optional<std::string> cl;
  std::optional<std::string> cl_level;
  std::optional<std::string> syntax;
  std::optional<std::string> out;
};

inline void apply_overrides(ExperimentConfig& c, const ExperimentOverrides& o) {
  using namespace detail;
  if (o.dataset) c.dataset = *o.dataset;
  if (o.kmax) c.train.sampler.kmax = *o.kmax;
  if (o.seeds) c.seeds = *o.seeds;
  if (o.episodes) c.train.episodes = *o.episodes;
  if (o.cl) set_contrastive_mode(c.train, *o.cl, "--cl");
  if (o.cl_level) {
    if (!c.train.contrastive) throw ConfigError("--cl-level: contrastive loss is off");
    c.train.contrastive->level = parse_enum(*o.cl_level, kClLevels, "--cl-level");
  }
  if (o.lambda_ic) {
    if (!c.train.contrastive) throw ConfigError("--lambda-ic: contrastive loss is off");
    c.train.contrastive->lambda_ic = *o.lambda_ic;
  }
  if (o.lambda_sf) {
    if (!c.train.contrastive) throw ConfigError("--lambda-sf: contrastive loss is off");
    c.train.contrastive->lambda_sf = *o.lambda_sf;
  }
  if (o.aug) {
    if (*o.aug == "off") {
      c.train.augmentation.reset();
    } else {
      if (!c.train.augmentation) c.train.augmentation = AugmentationConfig{};
      c.train.augmentation->method = parse_enum(*o.aug, kAugMethods, "--aug");
    }
  }
  if (o.aug_level) {
    if (!c.train.augmentation) throw ConfigError("--aug-level: augmentation is off");
    c.train.augmentation->level = parse_enum(*o.aug_level, kAugLevels, "--aug-level");
  }
  if (o.syntax) set_syntax_mode(c.train, *o.syntax, "--syntax");
  if (o.beta) {
    if (!c.train.syntax) throw ConfigError("--beta: syntax extensions are off");
    c.train.syntax->beta = *o.beta;
  }
  if (o.out) c.out = *o.out;
  c.validate();
}

// Corpus named by the config: a bundled grammar, a grammar file, or a corpus.
inline Dataset load_experiment_dataset(const ExperimentConfig& c) {
  const bool corpus = c.dataset.ends_with(".jsonl");
  if (corpus) return load_dataset(c.dataset);
  GrammarSpec g = resolve_grammar(c.dataset);
  if (c.per_intent) g.per_intent = *c.per_intent;
  return generate(g, c.dataset_seed);
}

inline std::string dataset_label(const ExperimentConfig& c) {
  auto slash = c.dataset.find_last_of('/');
  return slash == std::string::npos ? c.dataset : c.dataset.substr(slash + 1);
}

inline SplitSpec make_split(const Dataset& ds, const SplitConfig& s, std::uint64_t seed) {
  if (s.style == SplitStyle::Snips) return make_split_snips_style(ds, s.n_train, s.n_test, seed);
  return make_split_atis_style(ds, s.min_count, s.n_train, s.n_test, seed);
}

struct SeedRun {
  std::uint64_t seed = 0;
  SplitSpec split;
  std::vector<LossBreakdown> train_log;
  std::vector<EpisodeMetrics> episodes;
  SeedMetrics metrics;
};

struct ExperimentResult {
  std::vector<SeedRun> runs;
  MetricsSummary summary;
};

// Owns whatever augmentation dependencies a config needs.
struct AugmentResources {
  std::optional<SynonymLexicon> lexicon;
  std::unique_ptr<TranslationClient> client;

  explicit AugmentResources(const ExperimentConfig& c) {
    if (!c.lexicon.empty()) lexicon = SynonymLexicon::load(c.lexicon);
    if (c.train.augmentation && c.train.augmentation->method == AugmentMethod::Backtranslation) {
      if (c.translator.empty())
        client = std::make_unique<ParaphraseMockClient>(lex());
      else
        client = std::make_unique<PipeTranslationClient>(c.translator);
    }
  }
  const SynonymLexicon& lex() const { return lexicon ? *lexicon : builtin_lexicon(); }
};

inline SeedRun run_seed(const ExperimentConfig& c, const Dataset& ds, std::uint64_t seed,
                        AugmentResources& res) {
  SeedRun run;
  run.seed = seed;
  run.split = make_split(ds, c.split, seed);
  TrainConfig tc = c.train;
  tc.seed = seed;
  AugmentDeps deps;
  deps.lexicon = &res.lex();
  deps.client = res.client.get();
  deps.slot_vocab = &ds.slot_vocab;
  const SlotValueDict dict = build_slot_value_dict(ds, run.split);
  deps.dict = &dict;
  auto trained = meta_train(ds, run.split, tc, deps);
  run.train_log = std::move(trained.log);

  EvalConfig ec;
  ec.sampler = c.train.sampler;
  ec.n_episodes = c.n_test_episodes;
  ec.distance = c.train.distance;
  ec.augmentation = c.train.augmentation;
  ec.syntax = c.train.syntax;
  ec.seed = seed;
  run.episodes = evaluate(trained.model, ds, run.split.meta_test, ec, deps);
  run.metrics = summarize_episodes(run.episodes);
  return run;
}

inline ExperimentResult run_experiment(const ExperimentConfig& c, const Dataset& ds) {
  c.validate();
  AugmentResources res(c);
  ExperimentResult r;
  std::vector<SeedMetrics> per_seed;
  for (std::size_t i = 0; i < c.seeds; ++i) {
    r.runs.push_back(run_seed(c, ds, c.first_seed + i, res));
    per_seed.push_back(r.runs.back().metrics);
  }
  r.summary = aggregate(per_seed);
  return r;
}

inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  return run_experiment(c, load_experiment_dataset(c));
}

// Per-seed table, one row per seed.
inline void write_seed_table(std::ostream& out, const ExperimentConfig& c,
                             const ExperimentResult& r) {
  out << "config,dataset,kmax,seed,ic_mean,sf_mean,chance,sf_excluded_episodes\n";
  for (const auto& run : r.runs)
    out << c.name << ',' << dataset_label(c) << ',' << c.kmax() << ',' << run.seed << ','
        << format_metric(run.metrics.ic_mean) << ','
        << (run.metrics.sf_mean ? format_metric(*run.metrics.sf_mean) : "NA") << ','
        << format_metric(run.metrics.chance) << ',' << run.metrics.sf_excluded << '\n';
}

}  // namespace fsnlu

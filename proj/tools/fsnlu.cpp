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

// fsnlu command-line tool.
//
//   fsnlu run-experiment --config configs/baseline.json [--config ...] --out results.csv
//   fsnlu gen-synthetic --dataset snips-like --seed 0 --out snips.jsonl
//   fsnlu augment --dataset snips.jsonl --aug eda --seed 1 --out snips.eda.jsonl
//   fsnlu train --config configs/baseline.json --seed 0 --out model.ckpt
//   fsnlu evaluate --config configs/baseline.json --checkpoint model.ckpt --seed 0
//   fsnlu gradcheck --dim 8 --instances 20
//
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure, 1 other.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fsnlu/experiment.hpp"
#include "fsnlu/gradcheck.hpp"

namespace {

using namespace fsnlu;

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Flags shared by every subcommand that builds an experiment config.
struct ConfigFlags {
  std::vector<std::string> configs;
  ExperimentOverrides o;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool many) {
  auto* c = cmd->add_option("--config", f.configs, "experiment config file (JSON)");
  if (!many) c->expected(0, 1);
  cmd->add_option("--dataset", f.o.dataset, "bundled grammar, grammar file or .jsonl corpus");
  cmd->add_option("--kmax", f.o.kmax, "maximum support-set size");
  cmd->add_option("--seeds", f.o.seeds, "number of seeds");
  cmd->add_option("--episodes", f.o.episodes, "meta-training episodes");
  cmd->add_option("--lambda-ic", f.o.lambda_ic, "contrastive IC weight");
  cmd->add_option("--lambda-sf", f.o.lambda_sf, "contrastive SF weight");
  cmd->add_option("--beta", f.o.beta, "POS multitask weight");
  cmd->add_option("--aug", f.o.aug, "slotlist|bt|eda|off");
  cmd->add_option("--aug-level", f.o.aug_level, "s-mtrain|sq-mtrain|s-mtrain-mtest|s-mtest");
  cmd->add_option("--cl", f.o.cl, "ic|icsf|off");
  cmd->add_option("--cl-level", f.o.cl_level, "s-mtrain|sq-mtrain");
  cmd->add_option("--syntax", f.o.syntax, "comma list of feat|mtl|chunk, or off");
}

std::vector<ExperimentConfig> build_configs(const ConfigFlags& f,
                                            const std::optional<std::string>& out) {
  std::vector<ExperimentConfig> cs;
  if (f.configs.empty()) cs.emplace_back();
  for (const auto& path : f.configs) cs.push_back(load_experiment(path));
  ExperimentOverrides o = f.o;
  o.out = out;
  for (auto& c : cs) apply_overrides(c, o);
  return cs;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

std::string stem(const std::string& path) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path;
  return path.substr(0, dot);
}

int cmd_run_experiment(const ConfigFlags& f, const std::optional<std::string>& out_flag) {
  const auto cs = build_configs(f, out_flag);
  const std::string out_path = cs.front().out;
  std::vector<std::string> rows;
  for (const auto& c : cs) {
    std::cerr << "[" << c.name << "] " << c.seeds << " seeds on " << dataset_label(c)
              << ", kmax " << c.kmax() << "\n";
    const ExperimentResult r = run_experiment(c);
    const std::string base = stem(out_path) + "." + c.name;
    {
      auto seeds = open_out(base + ".seeds.csv");
      write_seed_table(seeds, c, r);
    }
    for (const auto& run : r.runs) {
      auto log = open_out(base + ".seed" + std::to_string(run.seed) + ".train.jsonl");
      write_train_log(log, run.train_log);
    }
    rows.push_back(results_row(c.name, dataset_label(c), c.kmax(), r.summary));
    std::cerr << "  " << rows.back() << "\n";
  }
  auto out = open_out(out_path);
  out << kResultsHeader << '\n';
  for (const auto& row : rows) out << row << '\n';
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_gen_synthetic(const std::string& grammar, std::optional<std::size_t> per_intent,
                      std::uint64_t seed, const std::string& out_path, bool dump_grammar) {
  GrammarSpec g = resolve_grammar(grammar);
  if (per_intent) g.per_intent = *per_intent;
  if (dump_grammar) {
    auto out = open_out(out_path);
    out << to_json(g).dump(2) << '\n';
    return 0;
  }
  const Dataset ds = generate(g, seed);
  save_dataset(ds, out_path);
  std::cout << "wrote " << ds.utterances.size() << " utterances to " << out_path << "\n";
  return 0;
}

struct AugmentFlags {
  std::string dataset = "snips-like";
  std::string method = "slotlist";
  std::uint64_t seed = 0;
  std::string lexicon;
  std::string translator;
  double eda_alpha = AugmentationConfig{}.eda_alpha;
  double bt_temperature = AugmentationConfig{}.bt_temperature;
};

// Whole-corpus augmentation: originals followed by one synthetic each.
int cmd_augment(const AugmentFlags& f, const std::string& out_path) {
  ExperimentConfig c;
  c.dataset = f.dataset;
  c.lexicon = f.lexicon;
  c.translator = f.translator;
  AugmentationConfig a;
  a.method = detail::parse_enum(f.method, detail::kAugMethods, "--aug");
  a.eda_alpha = f.eda_alpha;
  a.bt_temperature = f.bt_temperature;
  a.validate();
  c.train.augmentation = a;
  const Dataset ds = load_experiment_dataset(c);
  AugmentResources res(c);

  SplitSpec all;
  for (int i = 0; i < static_cast<int>(ds.intent_vocab.size()); ++i) all.meta_train.push_back(i);
  const SlotValueDict dict = build_slot_value_dict(ds, all);
  AugmentDeps deps;
  deps.dict = &dict;
  deps.lexicon = &res.lex();
  deps.client = res.client.get();
  deps.slot_vocab = &ds.slot_vocab;

  Rng rng = make_stream(f.seed, streams::kAugment);
  std::size_t flagged = 0;
  const auto outs = apply_augmentation(ds.utterances, a, deps, rng, &flagged);
  auto out = open_out(out_path);
  for (const auto& u : outs) {
    auto j = to_json(ds, u);
    j["flags"] = u.flags;
    out << j.dump() << '\n';
  }
  std::cout << "wrote " << outs.size() << " utterances (" << flagged << " flagged) to "
            << out_path << "\n";
  return 0;
}

int cmd_train(const ConfigFlags& f, std::optional<std::uint64_t> seed_flag,
              const std::string& out_path, const std::string& split_out,
              const std::string& log_path) {
  const ExperimentConfig c = build_configs(f, std::nullopt).front();
  const Dataset ds = load_experiment_dataset(c);
  const std::uint64_t seed = seed_flag.value_or(c.first_seed);
  const SplitSpec split = make_split(ds, c.split, seed);
  AugmentResources res(c);
  TrainConfig tc = c.train;
  tc.seed = seed;
  AugmentDeps deps;
  deps.lexicon = &res.lex();
  deps.client = res.client.get();
  deps.slot_vocab = &ds.slot_vocab;
  const auto trained = meta_train(ds, split, tc, deps);
  save_checkpoint(trained.model, out_path);
  if (!split_out.empty()) {
    auto out = open_out(split_out);
    out << to_json(ds, split).dump(2) << '\n';
  }
  if (!log_path.empty()) {
    auto out = open_out(log_path);
    write_train_log(out, trained.log);
  }
  const auto& last = trained.log.back();
  std::cout << "trained " << trained.log.size() << " episodes, final loss "
            << format_metric(last.l_total) << ", checkpoint " << out_path << "\n";
  return 0;
}

int cmd_evaluate(const ConfigFlags& f, std::optional<std::uint64_t> seed_flag,
                 const std::string& checkpoint, const std::string& split_path,
                 const std::string& out_path) {
  const ExperimentConfig c = build_configs(f, std::nullopt).front();
  const Dataset ds = load_experiment_dataset(c);
  const std::uint64_t seed = seed_flag.value_or(c.first_seed);
  SplitSpec split;
  if (split_path.empty()) {
    split = make_split(ds, c.split, seed);
  } else {
    std::ifstream in(split_path);
    if (!in) throw DataError("cannot open split file '" + split_path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(split_path + ": " + e.what());
    }
    split = split_from_json(ds, j);
  }
  const Model model = load_checkpoint(checkpoint);
  AugmentResources res(c);
  AugmentDeps deps;
  deps.lexicon = &res.lex();
  deps.client = res.client.get();
  deps.slot_vocab = &ds.slot_vocab;
  const SlotValueDict dict = build_slot_value_dict(ds, split);
  deps.dict = &dict;

  EvalConfig ec;
  ec.sampler = c.train.sampler;
  ec.n_episodes = c.n_test_episodes;
  ec.distance = c.train.distance;
  ec.augmentation = c.train.augmentation;
  ec.syntax = c.train.syntax;
  ec.seed = seed;
  const auto eps = evaluate(model, ds, split.meta_test, ec, deps);
  if (!out_path.empty()) {
    auto out = open_out(out_path);
    out << "episode,way,n_query,ic_accuracy,slot_f1\n";
    for (std::size_t i = 0; i < eps.size(); ++i)
      out << i << ',' << eps[i].way << ',' << eps[i].n_query << ','
          << format_metric(eps[i].ic_accuracy) << ','
          << (eps[i].slot_f1 ? format_metric(*eps[i].slot_f1) : "NA") << '\n';
  }
  const SeedMetrics m = summarize_episodes(eps);
  std::cout << "episodes " << m.n_episodes << "  ic " << format_metric(m.ic_mean) << "  sf "
            << (m.sf_mean ? format_metric(*m.sf_mean) : "NA") << "  chance "
            << format_metric(m.chance) << "  sf_excluded " << m.sf_excluded << "\n";
  return 0;
}

int cmd_gradcheck(const GradcheckOptions& opt) {
  const auto reports = run_gradcheck(opt);
  bool ok = true;
  for (const auto& r : reports) {
    std::printf("%-24s %s  instances=%zu coords=%zu max_rel_err=%.3e\n", r.name.c_str(),
                r.passed ? "PASS" : "FAIL", r.instances, r.coords, r.max_rel_error);
    ok = ok && r.passed;
  }
  if (!ok) {
    std::fflush(stdout);
    throw NumericError("gradient check failed");
  }
  return 0;
}

int cmd_mock_translator(const std::string& lexicon) {
  std::optional<SynonymLexicon> lex;
  if (!lexicon.empty()) lex = SynonymLexicon::load(lexicon);
  ParaphraseMockClient client(lex ? *lex : builtin_lexicon());
  serve_translation(std::cin, std::cout, client);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot joint intent classification and slot filling"};
  app.require_subcommand(1);

  std::optional<std::string> out;

  ConfigFlags run_flags;
  auto* run = app.add_subcommand("run-experiment", "multi-seed experiment, writes a results table");
  add_config_flags(run, run_flags, true);
  run->add_option("--out", out, "results table path");

  std::string grammar = "snips-like";
  std::optional<std::size_t> per_intent;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  bool dump_grammar = false;
  auto* gen = app.add_subcommand("gen-synthetic", "generate a synthetic corpus");
  gen->add_option("--dataset,--grammar", grammar, "bundled grammar name or grammar file");
  gen->add_option("--per-intent", per_intent, "utterances for the most frequent intent");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output .jsonl path")->required();
  gen->add_flag("--dump-grammar", dump_grammar, "write the grammar as JSON instead");

  AugmentFlags aug_flags;
  std::string aug_out;
  auto* aug = app.add_subcommand("augment", "double a corpus with one augmenter");
  aug->add_option("--dataset", aug_flags.dataset, "bundled grammar, grammar file or .jsonl corpus");
  aug->add_option("--aug", aug_flags.method, "slotlist|bt|eda");
  aug->add_option("--seed", aug_flags.seed, "augmentation seed");
  aug->add_option("--lexicon", aug_flags.lexicon, "synonym lexicon file");
  aug->add_option("--translator", aug_flags.translator, "translation command (default: mock)");
  aug->add_option("--eda-alpha", aug_flags.eda_alpha, "EDA change rate");
  aug->add_option("--bt-temperature", aug_flags.bt_temperature, "sampling temperature");
  aug->add_option("--out", aug_out, "output .jsonl path")->required();

  ConfigFlags train_flags;
  std::optional<std::uint64_t> train_seed;
  std::string train_out, split_out, log_path;
  auto* train = app.add_subcommand("train", "meta-train one seed and save a checkpoint");
  add_config_flags(train, train_flags, false);
  train->add_option("--seed", train_seed, "seed (default: first_seed)");
  train->add_option("--out", train_out, "checkpoint path")->required();
  train->add_option("--split-out", split_out, "write the class split as JSON");
  train->add_option("--log", log_path, "write the per-episode loss log");

  ConfigFlags eval_flags;
  std::optional<std::uint64_t> eval_seed;
  std::string checkpoint, split_path, eval_out;
  auto* eval = app.add_subcommand("evaluate", "score a checkpoint on meta-test episodes");
  add_config_flags(eval, eval_flags, false);
  eval->add_option("--seed", eval_seed, "seed (default: first_seed)");
  eval->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  eval->add_option("--split", split_path, "class split JSON (default: re-split by seed)");
  eval->add_option("--out", eval_out, "per-episode metrics CSV");

  GradcheckOptions gc;
  std::optional<std::string> corrupt;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  grad->add_option("--dim", gc.dim, "embedding dimension");
  grad->add_option("--seed", gc.seed, "instance seed");
  grad->add_option("--instances", gc.instances, "random instances per component");
  grad->add_option("--epsilon", gc.epsilon, "central difference step");
  grad->add_option("--tolerance", gc.tolerance, "relative error tolerance");
  grad->add_option("--corrupt", corrupt, "scale one component's gradient (negative control)");

  std::string mock_lexicon;
  auto* mock = app.add_subcommand("mock-translator", "serve the mock translator on stdin/stdout");
  mock->add_option("--lexicon", mock_lexicon, "synonym lexicon file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run_experiment(run_flags, out);
    if (*gen) return cmd_gen_synthetic(grammar, per_intent, gen_seed, gen_out, dump_grammar);
    if (*aug) return cmd_augment(aug_flags, aug_out);
    if (*train) return cmd_train(train_flags, train_seed, train_out, split_out, log_path);
    if (*eval) return cmd_evaluate(eval_flags, eval_seed, checkpoint, split_path, eval_out);
    if (*grad) {
      gc.corrupt = corrupt;
      return cmd_gradcheck(gc);
    }
    if (*mock) return cmd_mock_translator(mock_lexicon);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    if (!e.dump().empty()) std::cerr << e.dump();
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}

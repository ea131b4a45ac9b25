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


#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>

#include "fsnlu/experiment.hpp"
#include "fsnlu/gradcheck.hpp"
#include "test_support.hpp"

using namespace fsnlu;
using namespace fsnlu::testing;

#ifndef FSNLU_CLI
#error "FSNLU_CLI must name the command-line binary"
#endif

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(FSNLU_CLI) + " " + args + " 2>&1";
  RunResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

bool contains(const std::string& s, const std::string& what) { return s.find(what) != std::string::npos; }

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Small enough to run in a couple of seconds.
std::string small_config(const std::string& dir, const std::string& extra = "") {
  const std::string path = dir + "/small.json";
  write_file(path, R"({"name": "small", "dataset": "snips-like", "per_intent": 20, "seeds": 2,
    "n_test_episodes": 5, "kmax": 10,
    "train": {"episodes": 3, "encoder": {"dim": 16, "ff_dim": 32, "layers": 1}})" + extra + "}");
  return path;
}

}  // namespace

TEST(Cli, ConfigErrorsNameTheField) {
  const std::string dir = temp_dir("cli_config_errors").string();
  const std::pair<const char*, const char*> cases[] = {
      {R"({"train": {"encoder": {"dim": "big"}}})", "train.encoder.dim: wrong type"},
      {R"({"x": 1})", "x: unknown field"},
      {R"({"seeds": 0})", "seeds: must be >= 1"},
      {R"({"augmentation": {"method": "mixup"}})", "augmentation.method: 'mixup' is not one of"},
      {R"({"contrastive": {"mode": "icsf", "temperature": 0}})", "contrastive.temperature"},
      {R"({"train": {"episodes": 1,)", "parse error"},
  };
  for (const auto& [json, message] : cases) {
    write_file(dir + "/bad.json", json);
    auto r = run("run-experiment --config " + dir + "/bad.json --out " + dir + "/r.csv");
    EXPECT_EQ(r.code, 2) << json << "\n" << r.output;
    EXPECT_TRUE(contains(r.output, message)) << r.output;
  }
  EXPECT_EQ(run("run-experiment --no-such-flag").code, 2);
  EXPECT_EQ(run("run-experiment --aug-level s-mtest --out " + dir + "/r.csv").code, 2);
  EXPECT_EQ(run("gradcheck --corrupt no_such_component").code, 2);
}

TEST(Cli, BundledConfigsParse) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(FSNLU_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_experiment(e.path().string())) << e.path();
    ++n;
  }
  EXPECT_GE(n, 6u);
  const auto c = load_experiment(std::string(FSNLU_CONFIG_DIR) + "/cl_icsf_sq.json");
  ASSERT_TRUE(c.train.contrastive.has_value());
  EXPECT_EQ(c.train.contrastive->level, ContrastiveLevel::SupportAndQueryMetaTrain);
  const auto a = load_experiment(std::string(FSNLU_CONFIG_DIR) + "/atis_baseline.json");
  EXPECT_EQ(a.split.style, SplitStyle::Atis);
  EXPECT_EQ(a.split.n_train, 5u);
  EXPECT_EQ(a.split.n_test, 7u);
}

TEST(Cli, OverridesApply) {
  auto c = load_experiment(std::string(FSNLU_CONFIG_DIR) + "/baseline.json");
  ExperimentOverrides o;
  o.kmax = 100;
  o.cl = "ic";
  o.aug = "eda";
  o.aug_level = "sq-mtrain";
  o.syntax = "feat,chunk";
  o.beta = 0.5;
  apply_overrides(c, o);
  EXPECT_EQ(c.kmax(), 100u);
  ASSERT_TRUE(c.train.contrastive);
  EXPECT_EQ(c.train.contrastive->lambda_sf, 0.0);
  ASSERT_TRUE(c.train.augmentation);
  EXPECT_EQ(c.train.augmentation->method, AugmentMethod::EDA);
  EXPECT_EQ(c.train.augmentation->level, AugmentLevel::SupportQueryMetaTrain);
  ASSERT_TRUE(c.train.syntax);
  EXPECT_TRUE(c.train.syntax->noun_chunks);
  EXPECT_FALSE(c.train.syntax->multitask);
  EXPECT_EQ(c.train.syntax->beta, 0.5);
  ExperimentOverrides off;
  off.aug = "off";
  off.cl = "off";
  off.syntax = "off";
  apply_overrides(c, off);
  EXPECT_FALSE(c.train.augmentation || c.train.contrastive || c.train.syntax);
  ExperimentOverrides bad;
  bad.lambda_ic = 0.1;
  EXPECT_THROW(apply_overrides(c, bad), ConfigError);
}

TEST(Cli, ConfigJsonRoundTrip) {
  for (const auto& e : std::filesystem::directory_iterator(FSNLU_CONFIG_DIR)) {
    const auto c = load_experiment(e.path().string());
    EXPECT_EQ(to_json(experiment_from_json(to_json(c))), to_json(c)) << e.path();
  }
}

TEST(Cli, RunExperimentWritesTables) {
  const std::string dir = temp_dir("cli_run").string();
  const auto cfg = small_config(dir);
  auto r = run("run-experiment --config " + cfg + " --out " + dir + "/results.csv");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto table = read_file(dir + "/results.csv");
  EXPECT_EQ(count_lines(table), 2u);
  EXPECT_TRUE(table.starts_with(std::string(kResultsHeader) + "\nsmall,snips-like,10,"));
  EXPECT_EQ(count_lines(read_file(dir + "/results.small.seeds.csv")), 3u);
  EXPECT_EQ(count_lines(read_file(dir + "/results.small.seed1.train.jsonl")), 3u);

  auto one = run("run-experiment --config " + cfg + " --seeds 1 --out " + dir + "/one.csv");
  ASSERT_EQ(one.code, 0) << one.output;
  const auto row = read_file(dir + "/one.csv").substr(std::string(kResultsHeader).size() + 1);
  auto cells = std::vector<std::string>();
  std::stringstream in(row);
  for (std::string cell; std::getline(in, cell, ',');) cells.push_back(cell);
  ASSERT_EQ(cells.size(), 7u);
  EXPECT_EQ(cells[4], "0.0000");
}

TEST(Cli, RunExperimentIsByteDeterministic) {
  const std::string dir = temp_dir("cli_determinism").string();
  const auto cfg = small_config(dir, R"(, "augmentation": {"method": "bt", "level": "s-mtrain-mtest"})");
  ASSERT_EQ(run("run-experiment --config " + cfg + " --out " + dir + "/a.csv").code, 0);
  ASSERT_EQ(run("run-experiment --config " + cfg + " --out " + dir + "/b.csv").code, 0);
  EXPECT_EQ(read_file(dir + "/a.csv"), read_file(dir + "/b.csv"));
  EXPECT_EQ(read_file(dir + "/a.small.seeds.csv"), read_file(dir + "/b.small.seeds.csv"));
  EXPECT_EQ(read_file(dir + "/a.small.seed0.train.jsonl"), read_file(dir + "/b.small.seed0.train.jsonl"));
}

TEST(Cli, AugmentDoublesAndMatchesGolden) {
  const std::string dir = temp_dir("cli_augment").string();
  const std::string golden = FSNLU_GOLDEN_DIR;
  for (const char* m : {"eda", "bt"}) {
    const std::string out = dir + "/" + m + ".jsonl";
    auto r = run("augment --dataset " + golden + "/small.jsonl --aug " + m + " --seed 7 --out " + out);
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(read_file(out), read_file(golden + "/" + m + ".jsonl")) << m;
    EXPECT_EQ(count_lines(read_file(out)), 2 * count_lines(read_file(golden + "/small.jsonl")));
  }
  auto r = run("augment --dataset snips-like --aug slotlist --out " + dir + "/s.jsonl");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(count_lines(read_file(dir + "/s.jsonl")), 1200u);
  EXPECT_TRUE(contains(r.output, "wrote 1200 utterances"));
}

TEST(Cli, GenSyntheticIsDeterministic) {
  const std::string dir = temp_dir("cli_gen").string();
  ASSERT_EQ(run("gen-synthetic --dataset snips-like --per-intent 3 --seed 0 --out " + dir + "/a.jsonl").code, 0);
  EXPECT_EQ(read_file(dir + "/a.jsonl"), read_file(std::string(FSNLU_GOLDEN_DIR) + "/small.jsonl"));
  ASSERT_EQ(run("gen-synthetic --dataset atis-like --dump-grammar --out " + dir + "/g.json").code, 0);
  ASSERT_EQ(run("gen-synthetic --dataset " + dir + "/g.json --per-intent 20 --out " + dir + "/b.jsonl").code, 0);
  auto ds = load_dataset(dir + "/b.jsonl");
  EXPECT_EQ(ds.intent_counts().begin()->second, 20u);
}

TEST(Cli, GradcheckPassesAndCatchesCorruption) {
  auto ok = run("gradcheck --instances 2");
  EXPECT_EQ(ok.code, 0) << ok.output;
  EXPECT_EQ(count_lines(ok.output), gradcheck_components().size());
  auto bad = run("gradcheck --instances 2 --corrupt slot_loss");
  EXPECT_EQ(bad.code, 4) << bad.output;
  EXPECT_TRUE(contains(bad.output, "slot_loss"));
  EXPECT_TRUE(contains(bad.output, "FAIL"));
}

TEST(Cli, DataErrorsExitThree) {
  const std::string dir = temp_dir("cli_data_errors").string();
  write_file(dir + "/bad.jsonl", "{\"tokens\": [\"a\"], \"intent\": \"x\", \"slots\": [\"I-a\"]}\n");
  auto r = run("augment --dataset " + dir + "/bad.jsonl --out " + dir + "/o.jsonl");
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_TRUE(contains(r.output, "line 1"));
  EXPECT_EQ(run("augment --dataset " + dir + "/missing.jsonl --out " + dir + "/o.jsonl").code, 3);
  write_file(dir + "/bad.ckpt", "not a checkpoint");
  const auto cfg = small_config(dir);
  EXPECT_EQ(run("evaluate --config " + cfg + " --checkpoint " + dir + "/bad.ckpt").code, 3);
}

TEST(Cli, TrainThenEvaluate) {
  const std::string dir = temp_dir("cli_train_eval").string();
  const auto cfg = small_config(dir);
  auto t = run("train --config " + cfg + " --seed 1 --out " + dir + "/m.ckpt --split-out " + dir +
               "/split.json --log " + dir + "/log.jsonl");
  ASSERT_EQ(t.code, 0) << t.output;
  EXPECT_EQ(count_lines(read_file(dir + "/log.jsonl")), 3u);
  auto e = run("evaluate --config " + cfg + " --seed 1 --checkpoint " + dir + "/m.ckpt --split " +
               dir + "/split.json --out " + dir + "/eps.csv");
  ASSERT_EQ(e.code, 0) << e.output;
  EXPECT_EQ(count_lines(read_file(dir + "/eps.csv")), 6u);
  EXPECT_TRUE(contains(e.output, "episodes 5"));

  // same numbers as the in-process runner for that seed
  auto c = load_experiment(cfg);
  c.first_seed = 1;
  c.seeds = 1;
  const auto res = run_experiment(c);
  EXPECT_TRUE(contains(e.output, "ic " + format_metric(res.runs[0].metrics.ic_mean))) << e.output;
}

TEST(Cli, MockTranslatorOverPipesMatchesInProcess) {
  auto ds = generate(bundled_grammar("snips-like"), 3, 0);
  PipeTranslationClient pipe(std::string(FSNLU_CLI) + " mock-translator");
  ParaphraseMockClient local;
  AugmentationConfig cfg;
  cfg.method = AugmentMethod::Backtranslation;
  Rng a(9), b(9);
  auto ra = augment_backtranslation(ds.utterances, pipe, cfg, a);
  auto rb = augment_backtranslation(ds.utterances, local, cfg, b);
  ASSERT_EQ(ra.synthetic.size(), rb.synthetic.size());
  for (std::size_t i = 0; i < ra.synthetic.size(); ++i)
    EXPECT_EQ(ra.synthetic[i].tokens, rb.synthetic[i].tokens);
  EXPECT_EQ(ra.flagged, 0u);
}

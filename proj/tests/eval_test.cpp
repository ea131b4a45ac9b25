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

#include "fsnlu/eval.hpp"
#include "fsnlu/synthetic.hpp"
#include "test_support.hpp"

using namespace fsnlu;
using namespace fsnlu::testing;

namespace {

// All valid BIO sequences of length n over types a and b.
std::vector<std::vector<std::string>> valid_sequences(std::size_t n) {
  const std::vector<std::string> alphabet = {"O", "B-a", "I-a", "B-b", "I-b"};
  std::vector<std::vector<std::string>> out;
  std::vector<std::size_t> idx(n, 0);
  while (true) {
    std::vector<std::string> s;
    for (auto i : idx) s.push_back(alphabet[i]);
    if (is_valid_bio(s)) out.push_back(s);
    std::size_t k = 0;
    while (k < n && ++idx[k] == alphabet.size()) idx[k++] = 0;
    if (k == n) break;
  }
  return out;
}

std::vector<std::string> random_bio(Rng& rng, std::size_t n) {
  std::vector<std::string> s;
  std::string type;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = uniform_index(rng, 3);
    if (r == 0 || (r == 2 && type.empty())) {
      s.emplace_back("O");
      type.clear();
    } else if (r == 1) {
      type = uniform_index(rng, 2) ? "a" : "b";
      s.push_back("B-" + type);
    } else {
      s.push_back("I-" + type);
    }
  }
  return s;
}

class CountingClient : public TranslationClient {
 public:
  std::vector<std::string> translate(const TranslationRequest& r) override {
    ++calls;
    return r.tokens;
  }
  std::size_t calls = 0;
};

Model small_model(const Dataset& ds, std::uint64_t seed) {
  EncoderConfig ec;
  ec.dim = 16;
  ec.ff_dim = 32;
  ec.layers = 1;
  return init_model(build_token_vocab(ds), ec, seed);
}

}  // namespace

TEST(IntentAccuracy, Values) {
  std::vector<int> p = {1, 2, 3, 4}, g = {1, 2, 0, 4};
  EXPECT_DOUBLE_EQ(ic_accuracy(p, g), 0.75);
  EXPECT_DOUBLE_EQ(ic_accuracy(g, g), 1.0);
  std::vector<int> e, one = {1};
  EXPECT_THROW(ic_accuracy(e, e), DataError);
  EXPECT_THROW(ic_accuracy(one, g), DataError);
}

TEST(SlotF1, WorkedExample) {
  std::vector<std::vector<std::string>> gold = {words("B-a O B-b O B-c")};
  std::vector<std::vector<std::string>> pred = {words("B-a O B-b O B-d")};
  EXPECT_NEAR(*slot_f1(pred, gold), 2.0 / 3.0, 1e-12);
  // boundary errors count as both a false positive and a false negative
  std::vector<std::vector<std::string>> wide = {words("B-a I-a B-b O B-c")};
  EXPECT_NEAR(*slot_f1(wide, gold), 2.0 / 3.0, 1e-12);
}

TEST(SlotF1, UndefinedWithoutSpans) {
  std::vector<std::vector<std::string>> none = {words("O O"), words("O")};
  EXPECT_FALSE(slot_f1(none, none).has_value());
  std::vector<std::vector<std::string>> gold = {words("B-a O"), words("O")};
  EXPECT_DOUBLE_EQ(*slot_f1(none, gold), 0.0);
  std::vector<std::vector<std::string>> empty;
  EXPECT_FALSE(slot_f1(empty, empty).has_value());
  std::vector<std::vector<std::string>> short_gold = {words("O")};
  EXPECT_THROW(slot_f1(none, short_gold), DataError);
}

TEST(SlotF1, ExhaustiveShortSequences) {
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto seqs = valid_sequences(n);
    for (const auto& p : seqs)
      for (const auto& g : seqs) {
        std::vector<std::vector<std::string>> pp = {p}, gg = {g};
        bool defined = false;
        const double ref = naive_f1(pp, gg, &defined);
        const auto got = slot_f1(pp, gg);
        ASSERT_EQ(got.has_value(), defined);
        if (defined) {
          ASSERT_NEAR(*got, ref, 1e-12);
        }
      }
  }
}

TEST(SlotF1, RandomCorporaMatchNaive) {
  Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<std::vector<std::string>> p, g;
    const auto m = 1 + uniform_index(rng, 5);
    for (std::size_t i = 0; i < m; ++i) {
      const auto n = 1 + uniform_index(rng, 8);
      p.push_back(random_bio(rng, n));
      g.push_back(random_bio(rng, n));
    }
    bool defined = false;
    const double ref = naive_f1(p, g, &defined);
    const auto got = slot_f1(p, g);
    ASSERT_EQ(got.has_value(), defined);
    if (defined) {
      ASSERT_NEAR(*got, ref, 1e-12);
    }
  }
}

TEST(Evaluate, OneRowPerEpisode) {
  auto ds = generate(bundled_grammar("snips-like"), 12, 0);
  auto split = make_split_snips_style(ds, 7, 3, 0);
  auto model = small_model(ds, 0);
  EvalConfig cfg;
  auto rows = evaluate(model, ds, split.meta_test, cfg);
  ASSERT_EQ(rows.size(), 100u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.way, 3u);
    EXPECT_GE(r.ic_accuracy, 0.0);
    EXPECT_LE(r.ic_accuracy, 1.0);
    EXPECT_GT(r.n_query, 0u);
  }
  auto again = evaluate(model, ds, split.meta_test, cfg);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].ic_accuracy, again[i].ic_accuracy);
}

TEST(Evaluate, IndistinguishableIntentsScoreAtChance) {
  const auto g = grammar_from_json(nlohmann::json::parse(R"({
    "name": "shared",
    "per_intent": 30,
    "slots": {"genre": ["jazz", "rock", "pop", "blues"], "time": ["tonight", "now", "later"]},
    "intents": [
      {"name": "a", "templates": ["play [genre] [time]", "i want [genre] music", "put on some [genre]"]},
      {"name": "b", "templates": ["play [genre] [time]", "i want [genre] music", "put on some [genre]"]},
      {"name": "c", "templates": ["play [genre] [time]", "i want [genre] music", "put on some [genre]"]},
      {"name": "d", "templates": ["play [genre] [time]", "i want [genre] music", "put on some [genre]"]},
      {"name": "e", "templates": ["play [genre] [time]", "i want [genre] music", "put on some [genre]"]}
    ]})"));
  auto ds = generate(g, 0);
  std::vector<int> classes = {0, 1, 2, 3, 4};
  EvalConfig cfg;
  cfg.n_episodes = 300;
  double ic = 0, chance = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    cfg.seed = seed;
    const auto s = summarize_episodes(evaluate(small_model(ds, seed), ds, classes, cfg));
    ic += s.ic_mean / 3;
    chance += s.chance / 3;
  }
  EXPECT_NEAR(ic, chance, 0.05) << "ic " << ic << " chance " << chance;
}

TEST(Evaluate, MetaTestAugmentationCallsTranslatorPerSupportUtterance) {
  auto ds = generate(bundled_grammar("snips-like"), 12, 0);
  auto split = make_split_snips_style(ds, 7, 3, 0);
  auto model = small_model(ds, 0);
  EvalConfig cfg;
  cfg.n_episodes = 10;
  cfg.augmentation = AugmentationConfig{};
  cfg.augmentation->method = AugmentMethod::Backtranslation;

  // expected support sizes come from an identical sampler stream
  EpisodeSampler sampler(ds, split.meta_test, cfg.sampler);
  Rng rng = make_stream(cfg.seed, streams::kEvalSampler);
  std::size_t support = 0;
  for (std::size_t i = 0; i < cfg.n_episodes; ++i) support += sampler.sample(rng).support.size();

  for (auto level : {AugmentLevel::SupportMetaTest, AugmentLevel::SupportMetaTrainAndTest,
                     AugmentLevel::SupportMetaTrain, AugmentLevel::SupportQueryMetaTrain}) {
    cfg.augmentation->level = level;
    CountingClient client;
    AugmentDeps deps;
    deps.client = &client;
    evaluate(model, ds, split.meta_test, cfg, deps);
    const bool at_test = augments_support(level, Phase::MetaTest);
    EXPECT_EQ(client.calls, at_test ? 2 * support : 0u);
  }
}

TEST(Aggregate, MeanAndSampleStd) {
  std::vector<double> v = {0.8, 0.9};
  auto r = aggregate(v);
  EXPECT_NEAR(r.mean, 0.85, 1e-12);
  EXPECT_NEAR(r.std, 0.0707107, 1e-6);
  std::vector<double> one = {0.5};
  EXPECT_EQ(aggregate(one).std, 0.0);
  std::vector<double> none;
  EXPECT_THROW(aggregate(none), DataError);
}

TEST(Aggregate, SeedSummaryAndRow) {
  std::vector<EpisodeMetrics> eps = {{1.0, 0.5, 3, 6}, {0.5, std::nullopt, 4, 8}};
  auto s = summarize_episodes(eps);
  EXPECT_DOUBLE_EQ(s.ic_mean, 0.75);
  EXPECT_DOUBLE_EQ(*s.sf_mean, 0.5);
  EXPECT_EQ(s.sf_excluded, 1u);
  EXPECT_NEAR(s.chance, (1.0 / 3 + 1.0 / 4) / 2, 1e-12);

  SeedMetrics a{0.8, 0.4, 0.3, 10, 0}, b{0.9, 0.6, 0.3, 10, 0};
  std::vector<SeedMetrics> seeds = {a, b};
  auto m = aggregate(seeds);
  EXPECT_EQ(results_row("base", "snips-like", 20, m),
            "base,snips-like,20,0.8500,0.0707,0.5000,0.1414");
  SeedMetrics c{0.7, std::nullopt, 0.3, 10, 10};
  std::vector<SeedMetrics> no_sf = {c};
  EXPECT_EQ(results_row("x", "d", 100, aggregate(no_sf)), "x,d,100,0.7000,0.0000,NA,NA");
}

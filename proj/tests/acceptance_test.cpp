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


// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>

#include "fsnlu/experiment.hpp"
#include "fsnlu/gradcheck.hpp"
#include "test_support.hpp"

using namespace fsnlu;
using namespace fsnlu::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Check {
  bool ok = true;
  std::ostringstream note;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      if (ok) note << "first failure: " << what << "; ";
      ok = false;
    }
  }
};

Vector random_vec(Rng& rng, std::size_t d, double scale = 1.0) {
  Vector v(d);
  for (auto& x : v) x = uniform_real(rng, -scale, scale);
  return v;
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

// --- criteria -------------------------------------------------------------

Check ac2_gradients() {
  Check c;
  GradcheckOptions opt;
  opt.dim = 8;
  opt.instances = 20;
  opt.epsilon = 1e-4;
  opt.tolerance = 1e-3;
  const auto t0 = Clock::now();
  const auto reports = run_gradcheck(opt);
  const double secs = seconds_since(t0);
  double worst = 0;
  for (const auto& r : reports) {
    c.expect(r.passed, r.name + " max rel error " + std::to_string(r.max_rel_error));
    c.expect(r.instances >= 20, r.name + " ran fewer than 20 instances");
    worst = std::max(worst, r.max_rel_error);
  }
  c.expect(secs < 60.0, "runtime " + std::to_string(secs) + " s");
  c.note << reports.size() << " components, worst rel error " << worst << ", " << secs << " s";
  return c;
}

Check ac3_closed_forms() {
  Check c;
  // equidistant query: C prototypes on a circle around it
  for (int classes = 2; classes <= 8; ++classes) {
    PrototypeTable t;
    std::map<int, std::vector<double>> naive;
    for (int k = 0; k < classes; ++k) {
      const double a = 2 * M_PI * k / classes;
      t[k] = {{std::cos(a), std::sin(a)}, 1};
      naive[k] = t[k].mean;
    }
    const Vector q = {0.0, 0.0};
    const double got = prototype_nll(t, q, classes - 1, Distance::SquaredEuclidean).loss;
    c.expect(std::abs(got - std::log(classes)) < 1e-9, "equidistant C=" + std::to_string(classes));
    c.expect(std::abs(naive_nll(naive, q, classes - 1) - std::log(classes)) < 1e-9, "oracle ln C");
  }
  // scalar case
  PrototypeTable s;
  s[0] = {{0.0}, 1};
  s[1] = {{2.0}, 1};
  const Vector q = {1.5};
  const double scalar = prototype_nll(s, q, 1, Distance::SquaredEuclidean).loss;
  const double scalar_oracle = naive_nll({{0, {0.0}}, {1, {2.0}}}, {1.5}, 1);
  c.expect(std::abs(scalar - std::log1p(std::exp(-2.0))) < 1e-9, "scalar case");
  c.expect(std::abs(scalar - scalar_oracle) < 1e-9, "scalar case vs oracle");
  // three-sample contrastive case
  const std::vector<Vector> xs = {{1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  const std::vector<int> labels = {0, 0, 1};
  std::vector<std::span<const double>> rows(xs.begin(), xs.end());
  const double cl = supervised_contrastive(rows, labels, 1.0, true).loss;
  const double cl_oracle = naive_supcon(xs, labels, 1.0, true);
  c.expect(std::abs(cl - 2 * std::log1p(std::exp(-1.0))) < 1e-9, "contrastive case");
  c.expect(std::abs(cl - cl_oracle) < 1e-9, "contrastive case vs oracle");
  c.note << "scalar " << scalar << ", contrastive " << cl;
  return c;
}

Check ac4_brute_force() {
  Check c;
  Rng rng(2024);
  double worst = 0;
  auto close = [&](double a, double b, const std::string& what) {
    worst = std::max(worst, std::abs(a - b));
    c.expect(std::abs(a - b) <= 1e-9, what);
  };
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + uniform_index(rng, 4);
    const std::size_t m = 2 + uniform_index(rng, 5);  // <= 6 samples
    std::vector<Utterance> utts(m);
    std::vector<EncodedUtterance> enc;
    std::vector<std::vector<double>> rows, token_rows;
    std::vector<int> intents, token_labels;
    for (std::size_t i = 0; i < m; ++i) {
      auto& u = utts[i];
      u.id = std::to_string(i);
      u.intent = static_cast<int>(uniform_index(rng, 3));
      const auto n = 1 + uniform_index(rng, 3);
      u.tokens.assign(n, "w");
      u.slots = std::vector<int>();
      for (std::size_t t = 0; t < n; ++t) u.slots->push_back(static_cast<int>(uniform_index(rng, 3)));
    }
    for (std::size_t i = 0; i < m; ++i) {
      EncodedUtterance e{&utts[i], random_vec(rng, d, 2.0), Matrix(utts[i].size(), d)};
      for (auto& v : e.tokens.data()) v = uniform_real(rng, -2, 2);
      rows.push_back(e.utterance);
      intents.push_back(utts[i].intent);
      for (std::size_t t = 0; t < utts[i].size(); ++t) {
        token_rows.emplace_back(e.tokens.row(t).begin(), e.tokens.row(t).end());
        token_labels.push_back((*utts[i].slots)[t]);
      }
      enc.push_back(std::move(e));
    }
    const auto protos = compute_prototypes(enc);
    const auto ni = naive_means(rows, intents);
    const auto ns = naive_means(token_rows, token_labels);
    for (const auto& [k, p] : protos.intents)
      for (std::size_t j = 0; j < d; ++j) close(p.mean[j], ni.at(k)[j], "intent prototype");
    for (const auto& [k, p] : protos.slots)
      for (std::size_t j = 0; j < d; ++j) close(p.mean[j], ns.at(k)[j], "slot prototype");

    const Vector q = random_vec(rng, d, 2.0);
    const int target = intents[uniform_index(rng, m)];
    const bool euclid = trial % 2;
    const auto metric = euclid ? Distance::Euclidean : Distance::SquaredEuclidean;
    close(intent_loss(protos, q, target, metric).loss, naive_nll(ni, q, target, euclid), "intent loss");

    const std::size_t n = 1 + uniform_index(rng, 8);
    Matrix toks(n, d);
    for (auto& v : toks.data()) v = uniform_real(rng, -2, 2);
    std::vector<int> labels;
    for (std::size_t t = 0; t < n; ++t) labels.push_back(static_cast<int>(uniform_index(rng, 4)));
    double ref = 0;
    std::size_t scored = 0;
    for (std::size_t t = 0; t < n; ++t)
      if (ns.count(labels[t])) {
        ref += naive_nll(ns, {toks.row(t).begin(), toks.row(t).end()}, labels[t], euclid);
        ++scored;
      }
    if (scored > 0) close(slot_loss(protos, toks, labels, metric).loss, ref / scored, "slot loss");

    std::vector<int> cl_labels;
    for (std::size_t i = 0; i < m; ++i) cl_labels.push_back(static_cast<int>(uniform_index(rng, 3)));
    std::vector<std::span<const double>> spans(rows.begin(), rows.end());
    const double tau = uniform_real(rng, 0.05, 2.0);
    for (bool normalize : {true, false})
      close(supervised_contrastive(spans, cl_labels, tau, normalize).loss,
            naive_supcon(rows, cl_labels, tau, normalize), "contrastive loss");
  }
  // span F1: exhaustive up to length 4, random draws up to length 8
  std::size_t pairs = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto seqs = valid_sequences(n);
    for (const auto& p : seqs)
      for (const auto& g : seqs) {
        std::vector<std::vector<std::string>> pp = {p}, gg = {g};
        bool defined = false;
        const double ref = naive_f1(pp, gg, &defined);
        const auto got = slot_f1(pp, gg);
        c.expect(got.has_value() == defined, "F1 definedness");
        if (got && defined) close(*got, ref, "span F1");
        ++pairs;
      }
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = 1 + uniform_index(rng, 8);
    std::vector<std::vector<std::string>> pp = {random_bio(rng, n)}, gg = {random_bio(rng, n)};
    bool defined = false;
    const double ref = naive_f1(pp, gg, &defined);
    const auto got = slot_f1(pp, gg);
    c.expect(got.has_value() == defined, "F1 definedness");
    if (got && defined) close(*got, ref, "span F1");
  }
  c.note << "1000 loss draws, " << pairs << " exhaustive F1 pairs, max abs diff " << worst;
  return c;
}

Check ac5_augmentation() {
  Check c;
  auto ds = generate(bundled_grammar("snips-like"), 8, 0);
  SplitSpec all;
  for (int i = 0; i < static_cast<int>(ds.intent_vocab.size()); ++i) all.meta_train.push_back(i);
  const auto dict = build_slot_value_dict(ds, all);
  ParaphraseMockClient mock;
  AugmentDeps deps{&dict, &builtin_lexicon(), &mock, &ds.slot_vocab};
  const AugmentMethod methods[] = {AugmentMethod::SlotList, AugmentMethod::Backtranslation,
                                   AugmentMethod::EDA};
  const AugmentLevel levels[] = {AugmentLevel::SupportMetaTrain, AugmentLevel::SupportQueryMetaTrain,
                                 AugmentLevel::SupportMetaTrainAndTest, AugmentLevel::SupportMetaTest};
  std::vector<int> classes = {0, 1, 2, 3, 4};
  EpisodeSampler sampler(ds, classes, SamplerConfig{});
  Rng srng(1);
  std::size_t combos = 0;
  for (auto m : methods)
    for (auto level : levels)
      for (auto phase : {Phase::MetaTrain, Phase::MetaTest}) {
        AugmentationConfig cfg;
        cfg.method = m;
        cfg.level = level;
        const auto ep = sampler.sample(srng);
        Rng rng(combos);
        const auto out = augment_episode(ep, phase, cfg, deps, rng);
        const bool s = augments_support(level, phase), q = augments_query(level, phase);
        c.expect(out.support.size() == (s ? 2 : 1) * ep.support.size(), "support size");
        c.expect(out.query.size() == (q ? 2 : 1) * ep.query.size(), "query size");
        if (s || q) ++combos;
        // the whole training corpus doubles as well
        const auto doubled = apply_augmentation(ds.utterances, cfg, deps, rng);
        c.expect(doubled.size() == 2 * ds.utterances.size(), "corpus doubling");
      }
  // seeded draws are BIO-valid
  std::size_t draws = 0;
  for (auto m : methods) {
    AugmentationConfig cfg;
    cfg.method = m;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      Rng rng(seed);
      const auto& u = ds.utterances[uniform_index(rng, ds.utterances.size())];
      const auto r = run_augmenter(std::span<const Utterance>(&u, 1), cfg, deps, rng);
      const auto& s = r.synthetic.at(0);
      c.expect(!s.tokens.empty(), "empty synthetic");
      if (s.slots) {
        c.expect(s.slots->size() == s.tokens.size(), "label count");
        c.expect(is_valid_bio(ds.slot_labels(s)), "BIO validity");
      }
      ++draws;
    }
  }
  // pool -> indoor
  auto one = make_dataset({{"book a table at a pool bar", "BookRestaurant", "O O O O O B-facility O"}});
  SlotValueDict facilities;
  for (const char* v : {"smoking room", "spa", "indoor", "outdoor", "pool", "internet", "parking", "wifi"})
    facilities.add("facility", words(v));
  bool indoor = false;
  for (std::uint64_t seed = 0; seed < 100 && !indoor; ++seed) {
    Rng rng(seed);
    indoor = augment_slot_list(one.utterances, facilities, one.slot_vocab, rng).synthetic[0].tokens ==
             words("book a table at a indoor bar");
  }
  c.expect(indoor, "pool -> indoor not produced");
  c.note << "3 methods x 4 levels x 2 phases, " << draws << " seeded draws";
  return c;
}

Check ac6_sampler() {
  Check c;
  const auto t0 = Clock::now();
  std::size_t total = 0;
  for (const char* name : {"snips-like", "atis-like"}) {
    const auto ds = generate(bundled_grammar(name), 0);
    std::vector<int> classes;
    for (const auto& [intent, n] : ds.intent_counts())
      if (n >= 2) classes.push_back(intent);
    for (std::size_t kmax : {20u, 100u}) {
      SamplerConfig cfg;
      cfg.kmax = kmax;
      EpisodeSampler sampler(ds, classes, cfg);
      Rng rng(kmax);
      for (int i = 0; i < 10000; ++i) {
        const auto ep = sampler.sample(rng);
        const auto v = episode_violation(ep);
        c.expect(!v, std::string(name) + ": " + v.value_or(""));
        c.expect(ep.support.size() <= kmax, "support above kmax");
        ++total;
      }
    }
  }
  // slot vs intent shots on the imbalanced corpus, meta-train episodes of the split
  const auto atis = generate(bundled_grammar("atis-like"), 0);
  const auto split = make_split_atis_style(atis, 15, 5, 7, 0);
  EpisodeSampler sampler(atis, split.meta_train, SamplerConfig{});
  Rng rng(3);
  std::vector<Episode> eps;
  for (int i = 0; i < 1000; ++i) eps.push_back(sampler.sample(rng));
  const auto stats = slot_shot_statistics(eps, atis);
  c.expect(stats.slot_mean && *stats.slot_mean < stats.intent_mean, "slot shots not below intent shots");
  const double secs = seconds_since(t0);
  c.expect(secs < 30.0, "runtime " + std::to_string(secs) + " s");
  c.note << total << " episodes; atis shots per intent " << stats.intent_mean << ", per slot "
         << stats.slot_mean.value_or(-1) << "; " << secs << " s";
  return c;
}

struct Ac7Runs {
  ExperimentResult baseline, contrastive, slot_list;
  double max_seed_seconds = 0;
};

Ac7Runs run_ac7() {
  Ac7Runs r;
  ExperimentConfig base;
  base.name = "baseline";
  base.dataset = "snips-like";
  base.split = {SplitStyle::Snips, 7, 3, 15};
  base.seeds = 5;
  base.train.episodes = 50;
  base.train.sampler.kmax = 20;
  const auto ds = load_experiment_dataset(base);

  ExperimentConfig cl = base;
  cl.name = "cl-icsf-sq";
  cl.train.contrastive = ContrastiveConfig{};
  cl.train.contrastive->lambda_ic = 0.06;
  cl.train.contrastive->lambda_sf = 0.06;
  cl.train.contrastive->level = ContrastiveLevel::SupportAndQueryMetaTrain;

  ExperimentConfig sl = base;
  sl.name = "da-slotlist-smtest";
  sl.train.augmentation = AugmentationConfig{};
  sl.train.augmentation->method = AugmentMethod::SlotList;
  sl.train.augmentation->level = AugmentLevel::SupportMetaTest;

  for (auto [cfg, out] : {std::pair{&base, &r.baseline}, {&cl, &r.contrastive}, {&sl, &r.slot_list}}) {
    const auto t0 = Clock::now();
    *out = run_experiment(*cfg, ds);
    r.max_seed_seconds = std::max(r.max_seed_seconds, seconds_since(t0) / static_cast<double>(cfg->seeds));
    std::cerr << "  " << results_row(cfg->name, "snips-like", 20, out->summary) << "\n";
  }
  return r;
}

Check ac7_directional(const Ac7Runs& r) {
  Check c;
  double chance = 0;
  for (const auto& run : r.baseline.runs) chance += run.metrics.chance / r.baseline.runs.size();
  const auto& b = r.baseline.summary.ic;
  c.expect(b.mean - chance >= 0.25,
           "baseline IC " + std::to_string(b.mean) + " vs chance " + std::to_string(chance));
  auto pooled = [&](const MeanStd& x) { return std::sqrt((b.std * b.std + x.std * x.std) / 2); };
  const auto& cl = r.contrastive.summary.ic;
  const auto& sl = r.slot_list.summary.ic;
  c.expect(cl.mean >= b.mean - pooled(cl), "contrastive IC " + std::to_string(cl.mean));
  c.expect(sl.mean >= b.mean - pooled(sl), "slot-list IC " + std::to_string(sl.mean));
  c.expect(r.max_seed_seconds < 600.0, "seed runtime " + std::to_string(r.max_seed_seconds) + " s");
  c.note << "chance " << format_metric(chance) << ", baseline " << format_metric(b.mean) << "±"
         << format_metric(b.std) << ", cl " << format_metric(cl.mean) << "±" << format_metric(cl.std)
         << ", slot-list " << format_metric(sl.mean) << "±" << format_metric(sl.std) << ", "
         << r.max_seed_seconds << " s/seed";
  return c;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(FSNLU_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Check ac8_determinism() {
  Check c;
  const std::string dir = temp_dir("acceptance_determinism").string();
  const std::string cfg = std::string(FSNLU_CONFIG_DIR) + "/baseline.json";
  for (const char* tag : {"a", "b"})
    c.expect(run_cli("run-experiment --config " + cfg + " --seeds 2 --out " + dir + "/" + tag + ".csv") == 0,
             "run-experiment exit status");
  const std::string files[] = {".csv", ".baseline.seeds.csv", ".baseline.seed0.train.jsonl",
                               ".baseline.seed1.train.jsonl"};
  for (const auto& f : files) {
    const auto a = read_file(dir + "/a" + f), b = read_file(dir + "/b" + f);
    c.expect(!a.empty() && a == b, "files differ: " + f);
  }
  c.note << "2 runs of the baseline config, " << std::size(files) << " files compared byte-for-byte";
  return c;
}

Check ac9_protocol(const Ac7Runs& r) {
  Check c;
  const auto atis = generate(bundled_grammar("atis-like"), 0);
  const auto counts = atis.intent_counts();
  std::size_t eligible = 0;
  for (const auto& [k, n] : counts) eligible += n > 15;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = make_split_atis_style(atis, 15, 5, 7, seed);
    c.expect(s.meta_train.size() == 5 && s.meta_test.size() == 7, "atis 5/7");
    c.expect(s.dev.size() == eligible - 12, "atis dev gets the rest");
    for (const auto* part : {&s.meta_train, &s.meta_test, &s.dev})
      for (int k : *part) c.expect(counts.at(k) > 15, "small class included");
  }
  auto g = bundled_grammar("snips-like");
  g.intents.resize(7);
  const auto snips = generate(g, 0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = make_split_snips_style(snips, 4, 3, seed);
    c.expect(s.meta_train.size() == 4 && s.meta_test.size() == 3 && s.dev.empty(), "snips 4/3");
  }
  for (const auto* res : {&r.baseline, &r.contrastive, &r.slot_list})
    for (const auto& run : res->runs) c.expect(run.episodes.size() == 100, "test episodes per seed");
  c.note << "atis: " << counts.size() - eligible << " of " << counts.size()
         << " classes excluded, dev " << eligible - 12 << "; snips 4/3/0; 100 test episodes per seed";
  return c;
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, Check>> results;
  auto report = [&](const std::string& name, Check c) {
    std::cout << name << " " << (c.ok ? "PASS" : "FAIL") << "  " << c.note.str() << std::endl;
    results.emplace_back(name, std::move(c));
  };
  report("AC2 gradients", ac2_gradients());
  report("AC3 closed-form", ac3_closed_forms());
  report("AC4 brute-force", ac4_brute_force());
  report("AC5 augmentation", ac5_augmentation());
  report("AC6 sampler", ac6_sampler());
  const auto runs = run_ac7();
  report("AC7 directional", ac7_directional(runs));
  report("AC8 determinism", ac8_determinism());
  report("AC9 protocol", ac9_protocol(runs));

  // The umbrella criterion holds when every concrete check above holds.
  bool all = true;
  for (const auto& [name, c] : results) all = all && c.ok;
  std::cout << "AC1 desk-scale suite " << (all ? "PASS" : "FAIL") << "  " << results.size()
            << " criteria checked" << std::endl;
  return all ? 0 : 1;
}

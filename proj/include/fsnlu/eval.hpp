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

// Few-shot evaluation: intent accuracy, CoNLL-style span F1, and
// episode -> seed -> run aggregation.

#pragma once

#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fsnlu/augment.hpp"
#include "fsnlu/corpus.hpp"
#include "fsnlu/encoder.hpp"
#include "fsnlu/episode.hpp"
#include "fsnlu/protonet.hpp"
#include "fsnlu/syntax.hpp"
#include "fsnlu/trainer.hpp"

namespace fsnlu {

inline double ic_accuracy(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size()) throw DataError("ic accuracy: length mismatch");
  if (gold.empty()) throw DataError("ic accuracy: empty query set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += predicted[i] == gold[i];
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

struct SpanCounts {
  std::size_t tp = 0, fp = 0, fn = 0;

  // nullopt when neither side has any span.
  std::optional<double> f1() const {
    if (tp + fp + fn == 0) return std::nullopt;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  }
};

inline SpanCounts count_spans(const std::vector<std::string>& predicted,
                              const std::vector<std::string>& gold) {
  if (predicted.size() != gold.size()) throw DataError("slot f1: sequence length mismatch");
  const auto p = extract_spans(predicted);
  const auto g = extract_spans(gold);
  SpanCounts c;
  for (const auto& s : p) c.tp += std::find(g.begin(), g.end(), s) != g.end();
  c.fp = p.size() - c.tp;
  c.fn = g.size() - c.tp;
  return c;
}

// Micro-averaged exact-match span F1 over a set of sequences.
inline std::optional<double> slot_f1(const std::vector<std::vector<std::string>>& predicted,
                                     const std::vector<std::vector<std::string>>& gold) {
  if (predicted.size() != gold.size()) throw DataError("slot f1: sequence count mismatch");
  SpanCounts total;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto c = count_spans(predicted[i], gold[i]);
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
  }
  return total.f1();
}

struct EpisodeMetrics {
  double ic_accuracy = 0.0;
  std::optional<double> slot_f1;  // undefined when no spans on either side
  std::size_t way = 0;
  std::size_t n_query = 0;
};

struct Predictor {
  const Model* model = nullptr;
  Distance distance = Distance::SquaredEuclidean;
  std::optional<SyntaxConfig> syntax;
};

// Prototypes from the support set, nearest-prototype predictions on the query.
inline EpisodeMetrics score_episode(const Episode& ep, const Dataset& ds, const Predictor& p) {
  const EncodedEpisode e = encode_episode(ep, *p.model, p.syntax, false);
  const PrototypeSet protos = compute_prototypes(e.support_slot);
  std::vector<int> pred, gold;
  std::vector<std::vector<std::string>> pred_slots, gold_slots;
  for (const auto& q : e.query_slot) {
    pred.push_back(predict_intent(protos, q.utterance, p.distance));
    gold.push_back(q.source->intent);
    if (!q.source->slots || protos.slots.empty()) continue;
    const auto ids = predict_slots(protos, q.tokens, ds.slot_vocab, p.distance);
    std::vector<std::string> labels;
    for (int id : ids) labels.push_back(ds.slot_vocab.label(id));
    pred_slots.push_back(std::move(labels));
    gold_slots.push_back(ds.slot_labels(*q.source));
  }
  EpisodeMetrics m;
  m.ic_accuracy = ic_accuracy(pred, gold);
  m.slot_f1 = slot_f1(pred_slots, gold_slots);
  m.way = ep.intent_classes.size();
  m.n_query = ep.query.size();
  return m;
}

struct EvalConfig {
  SamplerConfig sampler;
  std::size_t n_episodes = 100;
  Distance distance = Distance::SquaredEuclidean;
  std::optional<AugmentationConfig> augmentation;  // applied per level at meta-test
  std::optional<SyntaxConfig> syntax;
  std::uint64_t seed = 0;
};

// Test episodes are drawn from `classes` with their own random streams, so
// the result does not depend on how training consumed randomness.
inline std::vector<EpisodeMetrics> evaluate(const Model& model, const Dataset& ds,
                                            std::span<const int> classes, const EvalConfig& cfg,
                                            AugmentDeps deps = {}) {
  EpisodeSampler sampler(ds, classes, cfg.sampler);
  Rng sample_rng = make_stream(cfg.seed, streams::kEvalSampler);
  Rng aug_rng = make_stream(cfg.seed, streams::kEvalAugment);
  if (!deps.slot_vocab) deps.slot_vocab = &ds.slot_vocab;
  const Predictor p{&model, cfg.distance, cfg.syntax};
  std::vector<EpisodeMetrics> out;
  out.reserve(cfg.n_episodes);
  for (std::size_t i = 0; i < cfg.n_episodes; ++i) {
    Episode ep = sampler.sample(sample_rng);
    if (cfg.augmentation) ep = augment_episode(ep, Phase::MetaTest, *cfg.augmentation, deps, aug_rng);
    out.push_back(score_episode(ep, ds, p));
  }
  return out;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

inline MeanStd aggregate(std::span<const double> values) {
  if (values.empty()) throw DataError("aggregate: no values");
  MeanStd r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

// Per-seed means over episodes.
struct SeedMetrics {
  double ic_mean = 0.0;
  std::optional<double> sf_mean;
  double chance = 0.0;  // mean of 1/way
  std::size_t n_episodes = 0;
  std::size_t sf_excluded = 0;  // episodes with undefined F1
};

inline SeedMetrics summarize_episodes(std::span<const EpisodeMetrics> eps) {
  if (eps.empty()) throw DataError("summary: no episodes");
  SeedMetrics s;
  std::vector<double> ic, sf;
  double chance = 0.0;
  for (const auto& m : eps) {
    ic.push_back(m.ic_accuracy);
    chance += 1.0 / static_cast<double>(m.way);
    if (m.slot_f1)
      sf.push_back(*m.slot_f1);
    else
      ++s.sf_excluded;
  }
  s.ic_mean = aggregate(ic).mean;
  if (!sf.empty()) s.sf_mean = aggregate(sf).mean;
  s.chance = chance / static_cast<double>(eps.size());
  s.n_episodes = eps.size();
  return s;
}

struct MetricsSummary {
  MeanStd ic;
  std::optional<MeanStd> sf;
  std::size_t n_seeds = 0;
  std::size_t n_episodes = 0;  // per seed
  std::vector<double> ic_per_seed;
  std::vector<double> sf_per_seed;
};

inline MetricsSummary aggregate(std::span<const SeedMetrics> seeds) {
  if (seeds.empty()) throw DataError("aggregate: no seeds");
  MetricsSummary m;
  for (const auto& s : seeds) {
    m.ic_per_seed.push_back(s.ic_mean);
    if (s.sf_mean) m.sf_per_seed.push_back(*s.sf_mean);
  }
  m.ic = aggregate(m.ic_per_seed);
  if (!m.sf_per_seed.empty()) m.sf = aggregate(m.sf_per_seed);
  m.n_seeds = seeds.size();
  m.n_episodes = seeds.front().n_episodes;
  return m;
}

inline constexpr const char* kResultsHeader = "config,dataset,kmax,ic_mean,ic_std,sf_mean,sf_std";

inline std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline std::string results_row(const std::string& config, const std::string& dataset,
                               std::size_t kmax, const MetricsSummary& m) {
  std::string row = config + "," + dataset + "," + std::to_string(kmax) + "," +
                    format_metric(m.ic.mean) + "," + format_metric(m.ic.std) + ",";
  row += m.sf ? format_metric(m.sf->mean) + "," + format_metric(m.sf->std) : std::string("NA,NA");
  return row;
}

}  // namespace fsnlu

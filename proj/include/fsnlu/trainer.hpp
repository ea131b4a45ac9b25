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

// Episodic meta-training: sample, augment, encode, score, one optimizer step
// per episode.

#pragma once

#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fsnlu/augment.hpp"
#include "fsnlu/contrastive.hpp"
#include "fsnlu/core.hpp"
#include "fsnlu/corpus.hpp"
#include "fsnlu/encoder.hpp"
#include "fsnlu/episode.hpp"
#include "fsnlu/protonet.hpp"
#include "fsnlu/syntax.hpp"
#include "json.hpp"

namespace fsnlu {

enum class OptimizerKind { SGD, Adam };

struct TrainConfig {
  std::size_t episodes = 50;
  double learning_rate = 5e-5;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  Distance distance = Distance::SquaredEuclidean;
  EncoderConfig encoder;  // vocab_size is filled in from the data
  SamplerConfig sampler;
  std::optional<ContrastiveConfig> contrastive;
  std::optional<AugmentationConfig> augmentation;
  std::optional<SyntaxConfig> syntax;
  std::uint64_t seed = 0;

  void validate() const {
    if (episodes < 1) throw ConfigError("train.episodes: must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("train.learning_rate: must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
      throw ConfigError("train.adam: betas must be in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps: must be > 0");
    if (sampler.kmax < sampler.min_way) throw ConfigError("kmax: must be >= min_way");
    if (contrastive) contrastive->validate();
    if (augmentation) augmentation->validate();
    if (syntax) syntax->validate();
  }
};

// Plain SGD or bias-corrected Adam over the flat parameter buffer.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

  void step(EncoderParams& params, const EncoderGrads& grads) {
    auto& w = params.values();
    const auto& g = grads.values();
    if (g.size() != w.size()) throw Error("optimizer: gradient size mismatch");
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == OptimizerKind::SGD) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
      return;
    }
    if (m_.empty()) {
      m_.assign(w.size(), 0.0);
      v_.assign(w.size(), 0.0);
    }
    ++t_;
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.adam_eps);
    }
  }

  std::size_t steps() const { return t_; }

 private:
  TrainConfig cfg_;
  Vector m_, v_;
  std::size_t t_ = 0;
};

// Forward state of one episode under a model.
struct EncodedEpisode {
  std::vector<EncoderOutput> support_out, query_out;
  std::vector<SyntacticAnnotation> support_ann, query_ann;
  std::vector<EncodedUtterance> support, query;              // raw encoder space
  std::vector<EncodedUtterance> support_slot, query_slot;    // slot space (maybe concatenated)
};

inline EncodedEpisode encode_episode(const Episode& ep, const Model& model,
                                     const std::optional<SyntaxConfig>& syntax, bool record) {
  EncodedEpisode e;
  const bool need_ann = syntax && syntax->any();
  auto run = [&](const std::vector<Utterance>& utts, std::vector<EncoderOutput>& outs,
                 std::vector<SyntacticAnnotation>& anns, std::vector<EncodedUtterance>& raw,
                 std::vector<EncodedUtterance>& slot) {
    for (const auto& u : utts) {
      const auto ids = model.vocab.encode(u.tokens);
      outs.push_back(encode(model.params, ids, record));
      const auto& o = outs.back();
      raw.push_back({&u, o.utterance, o.tokens});
      if (need_ann) anns.push_back(annotate(u));
      if (syntax && syntax->concat())
        slot.push_back({&u, o.utterance, concat_features(o.tokens, anns.back(), *syntax)});
      else
        slot.push_back(raw.back());
    }
  };
  run(ep.support, e.support_out, e.support_ann, e.support, e.support_slot);
  run(ep.query, e.query_out, e.query_ann, e.query, e.query_slot);
  return e;
}

struct PosLossResult {
  double loss = 0.0;  // (1/|Q|) sum_z mean_t L_pos(z_t)
  std::vector<Matrix> d_support, d_query;
  std::size_t queries_without_pos = 0;
};

// Auxiliary POS prototype loss over raw token embeddings. Prototypes come
// from support tokens; each query contributes the mean over its tokens whose
// tag has a prototype.
inline PosLossResult pos_multitask_loss(const EncodedEpisode& e, Distance metric, bool want_grads) {
  std::vector<const Matrix*> toks;
  std::vector<const SyntacticAnnotation*> anns;
  for (std::size_t i = 0; i < e.support.size(); ++i) {
    toks.push_back(&e.support[i].tokens);
    anns.push_back(&e.support_ann[i]);
  }
  const PrototypeTable protos = pos_prototypes(toks, anns);

  PosLossResult r;
  if (want_grads) {
    for (const auto& s : e.support) r.d_support.emplace_back(s.tokens.rows(), s.tokens.cols());
    for (const auto& q : e.query) r.d_query.emplace_back(q.tokens.rows(), q.tokens.cols());
  }
  const double wq = 1.0 / static_cast<double>(e.query.size());
  std::map<int, Vector> d_protos;
  for (std::size_t q = 0; q < e.query.size(); ++q) {
    const auto& tags = e.query_ann[q].pos_tags;
    std::size_t scorable = 0;
    for (int t : tags) scorable += protos.count(t);
    if (scorable == 0) {
      ++r.queries_without_pos;
      continue;
    }
    const double w = wq / static_cast<double>(scorable);
    for (std::size_t t = 0; t < tags.size(); ++t) {
      if (!protos.count(tags[t])) continue;
      auto one = pos_loss(protos, e.query[q].tokens.row(t), tags[t], metric);
      r.loss += w * one.loss;
      if (!want_grads) continue;
      axpy(w, one.d_query, r.d_query[q].row(t));
      detail::add_scaled(d_protos, one.d_prototypes, w);
    }
  }
  if (want_grads)
    for (std::size_t s = 0; s < e.support.size(); ++s) {
      const auto& tags = e.support_ann[s].pos_tags;
      for (std::size_t t = 0; t < tags.size(); ++t)
        if (auto it = d_protos.find(tags[t]); it != d_protos.end())
          axpy(1.0 / static_cast<double>(protos.at(tags[t]).count), it->second,
               r.d_support[s].row(t));
    }
  return r;
}

// The configured objective on one episode:
//   L_Total (+ lambda_ic L_cIC + lambda_sf L_cSF) (+ beta L_pos)
// When `grads` is non-null the encoder gradient is accumulated into it.
inline LossBreakdown loss_for_config(const Episode& ep, const Model& model, const TrainConfig& cfg,
                                     EncoderGrads* grads) {
  EncodedEpisode e = encode_episode(ep, model, cfg.syntax, grads != nullptr);
  EpisodeGrads g_slot, g_raw;
  if (grads) {
    g_slot = zero_grads(e.support_slot, e.query_slot);
    g_raw = zero_grads(e.support, e.query);
  }
  LossBreakdown lb =
      prototypical_loss(e.support_slot, e.query_slot, cfg.distance, grads ? &g_slot : nullptr);
  if (cfg.contrastive)
    lb = regularized_total_loss(lb, e.support, e.query, *cfg.contrastive, grads ? &g_raw : nullptr);
  std::optional<PosLossResult> pos;
  if (cfg.syntax && cfg.syntax->multitask) {
    pos = pos_multitask_loss(e, cfg.distance, grads != nullptr);
    lb.l_pos = pos->loss;
    lb.l_total += cfg.syntax->beta * pos->loss;
  }
  if (!grads) return lb;

  const std::size_t d = model.params.config().dim;
  auto push = [&](EncoderOutput& out, const EncodedGrad& gs, const EncodedGrad& gr,
                  const Matrix* gp) {
    Vector du = gs.utterance;
    axpy(1.0, gr.utterance, du);
    Matrix dt = gr.tokens;
    for (std::size_t t = 0; t < dt.rows(); ++t) {
      auto row = dt.row(t);
      axpy(1.0, gs.tokens.row(t).first(d), row);
      if (gp) axpy(cfg.syntax->beta, gp->row(t), row);
    }
    backward_into(out, du, dt, *grads);
  };
  for (std::size_t i = 0; i < e.support.size(); ++i)
    push(e.support_out[i], g_slot.support[i], g_raw.support[i], pos ? &pos->d_support[i] : nullptr);
  for (std::size_t i = 0; i < e.query.size(); ++i)
    push(e.query_out[i], g_slot.query[i], g_raw.query[i], pos ? &pos->d_query[i] : nullptr);
  return lb;
}

inline nlohmann::json to_json(const LossBreakdown& lb, std::size_t episode) {
  return {{"episode", episode},         {"l_ic", lb.l_ic},
          {"l_slots", lb.l_slots},      {"l_cl_ic", lb.l_contrastive_ic},
          {"l_cl_sf", lb.l_contrastive_sf}, {"l_pos", lb.l_pos},
          {"l_total", lb.l_total}};
}

inline bool all_finite(const LossBreakdown& lb) {
  for (double v : {lb.l_ic, lb.l_slots, lb.l_contrastive_ic, lb.l_contrastive_sf, lb.l_pos,
                   lb.l_total})
    if (!std::isfinite(v)) return false;
  return true;
}

// Word vocabulary: every dataset token plus every lexicon word and synonym,
// so augmentation never produces out-of-vocabulary rows at training time.
inline TokenVocab build_token_vocab(const Dataset& ds, const SynonymLexicon* lexicon = nullptr) {
  std::set<std::string> words;
  for (const auto& u : ds.utterances) words.insert(u.tokens.begin(), u.tokens.end());
  if (lexicon)
    for (const auto& w : lexicon->words()) {
      words.insert(w);
      for (const auto& s : lexicon->synonyms(w)) words.insert(s);
    }
  return TokenVocab::from_words(words);
}

inline Model init_model(TokenVocab vocab, EncoderConfig cfg, std::uint64_t seed) {
  cfg.vocab_size = vocab.size();
  Rng rng = make_stream(seed, streams::kInit);
  return {std::move(vocab), init_encoder(cfg, rng)};
}

struct TrainResult {
  Model model;
  std::vector<LossBreakdown> log;
  std::size_t flagged_synthetics = 0;
};

inline void write_train_log(std::ostream& out, std::span<const LossBreakdown> log) {
  for (std::size_t i = 0; i < log.size(); ++i) out << to_json(log[i], i).dump() << '\n';
}

// Trains from the given initial model. `deps` supplies augmentation inputs;
// a missing slot-value dict is built from the meta-train classes.
inline TrainResult meta_train(const Dataset& ds, const SplitSpec& split, const TrainConfig& cfg,
                              Model initial, AugmentDeps deps = {}) {
  cfg.validate();
  TrainResult res{std::move(initial), {}, 0};
  EpisodeSampler sampler(ds, split.meta_train, cfg.sampler);
  Rng sample_rng = make_stream(cfg.seed, streams::kSampler);
  Rng aug_rng = make_stream(cfg.seed, streams::kAugment);
  std::optional<SlotValueDict> dict;
  if (cfg.augmentation) {
    if (!deps.slot_vocab) deps.slot_vocab = &ds.slot_vocab;
    if (!deps.dict) {
      dict = build_slot_value_dict(ds, split);
      deps.dict = &*dict;
    }
  }
  Optimizer opt(cfg);
  EncoderGrads grads = EncoderParams::zeros_like(res.model.params);
  for (std::size_t i = 0; i < cfg.episodes; ++i) {
    Episode ep = sampler.sample(sample_rng);
    if (cfg.augmentation)
      ep = augment_episode(ep, Phase::MetaTrain, *cfg.augmentation, deps, aug_rng,
                           &res.flagged_synthetics);
    grads.set_zero();
    const LossBreakdown lb = loss_for_config(ep, res.model, cfg, &grads);
    if (!all_finite(lb) || !all_finite(grads.values())) {
      std::ostringstream dump;
      write_episode(dump, ds, ep);
      throw NumericError("non-finite loss or gradient at training episode " + std::to_string(i),
                         dump.str());
    }
    opt.step(res.model.params, grads);
    res.log.push_back(lb);
  }
  return res;
}

inline TrainResult meta_train(const Dataset& ds, const SplitSpec& split, const TrainConfig& cfg,
                              const AugmentDeps& deps = {}) {
  const SynonymLexicon* lex = deps.lexicon ? deps.lexicon : &builtin_lexicon();
  Model init = init_model(build_token_vocab(ds, lex), cfg.encoder, cfg.seed);
  return meta_train(ds, split, cfg, std::move(init), deps);
}

}  // namespace fsnlu

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

// Supervised contrastive regularizers over utterance embeddings (intent labels)
// and token embeddings (slot labels).
//
// For samples u_1..u_m (L2-normalised unless disabled) with labels y and
// positives P(i) = { j != i : y_j = y_i }:
//
//   L = sum_i -log( (1/|P(i)|) sum_{p in P(i)} exp(u_i.u_p / t)
//                                / sum_{j != i} exp(u_i.u_j / t) )
//
// Anchors with an empty P(i) are skipped.

#pragma once

#include <map>
#include <vector>

#include "fsnlu/core.hpp"
#include "fsnlu/protonet.hpp"

namespace fsnlu {

enum class ContrastiveLevel { SupportMetaTrain, SupportAndQueryMetaTrain };

struct ContrastiveConfig {
  double lambda_ic = 0.06;
  double lambda_sf = 0.06;
  double temperature = 0.1;
  ContrastiveLevel level = ContrastiveLevel::SupportMetaTrain;
  bool normalize = true;

  void validate() const {
    if (!(lambda_ic >= 0.0)) throw ConfigError("contrastive.lambda_ic: must be >= 0");
    if (!(lambda_sf >= 0.0)) throw ConfigError("contrastive.lambda_sf: must be >= 0");
    if (!(temperature > 0.0)) throw ConfigError("contrastive.temperature: must be > 0");
  }
};

struct ContrastiveResult {
  double loss = 0.0;
  std::vector<Vector> grads;       // d loss / d raw embedding, per sample
  std::vector<double> anchor_terms;  // per included anchor
  std::size_t anchors_used = 0;
  std::size_t anchors_skipped = 0;
  bool all_skipped() const { return anchors_used == 0; }
};

inline ContrastiveResult supervised_contrastive(std::span<const std::span<const double>> samples,
                                                std::span<const int> labels, double temperature,
                                                bool normalize) {
  const std::size_t m = samples.size();
  if (m < 2) throw DataError("contrastive loss: needs at least 2 samples");
  if (labels.size() != m) throw DataError("contrastive loss: label count mismatch");
  if (!(temperature > 0.0)) throw ConfigError("contrastive loss: temperature must be > 0");

  const std::size_t d = samples[0].size();
  std::vector<Vector> u(m);
  Vector norms(m, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (samples[i].size() != d) throw DataError("contrastive loss: inconsistent widths");
    u[i].assign(samples[i].begin(), samples[i].end());
    if (normalize) {
      norms[i] = std::sqrt(dot(u[i], u[i]));
      if (norms[i] == 0.0) throw NumericError("contrastive loss: zero-norm embedding");
      for (auto& v : u[i]) v /= norms[i];
    }
  }
  Matrix sim(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) sim(i, j) = sim(j, i) = dot(u[i], u[j]) / temperature;

  ContrastiveResult r;
  std::vector<Vector> du(m, Vector(d, 0.0));
  Vector all, pos;
  std::vector<std::size_t> all_idx, pos_idx;
  for (std::size_t i = 0; i < m; ++i) {
    all.clear();
    pos.clear();
    all_idx.clear();
    pos_idx.clear();
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      all.push_back(sim(i, j));
      all_idx.push_back(j);
      if (labels[j] == labels[i]) {
        pos.push_back(sim(i, j));
        pos_idx.push_back(j);
      }
    }
    if (pos.empty()) {
      ++r.anchors_skipped;
      continue;
    }
    const double lse_all = log_sum_exp(all);
    const double lse_pos = log_sum_exp(pos);
    const double term = lse_all + std::log(static_cast<double>(pos.size())) - lse_pos;
    r.loss += term;
    r.anchor_terms.push_back(term);
    ++r.anchors_used;

    // d term / d sim(i, j) = softmax_all(j) - [j in P] softmax_pos(j)
    auto push = [&](std::size_t j, double g) {
      axpy(g / temperature, u[j], du[i]);
      axpy(g / temperature, u[i], du[j]);
    };
    for (std::size_t k = 0; k < all.size(); ++k) push(all_idx[k], std::exp(all[k] - lse_all));
    for (std::size_t k = 0; k < pos.size(); ++k) push(pos_idx[k], -std::exp(pos[k] - lse_pos));
  }

  r.grads.assign(m, Vector(d, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    if (!normalize) {
      r.grads[i] = du[i];
      continue;
    }
    const double radial = dot(u[i], du[i]);
    for (std::size_t k = 0; k < d; ++k) r.grads[i][k] = (du[i][k] - u[i][k] * radial) / norms[i];
  }
  return r;
}

struct LabeledEmbedding {
  std::span<const double> embedding;
  int label = -1;
};

inline ContrastiveResult supervised_contrastive(std::span<const LabeledEmbedding> samples,
                                                double temperature, bool normalize) {
  std::vector<std::span<const double>> rows;
  std::vector<int> labels;
  for (const auto& s : samples) {
    rows.push_back(s.embedding);
    labels.push_back(s.label);
  }
  return supervised_contrastive(rows, labels, temperature, normalize);
}

// Intent-level loss over utterance embeddings.
inline ContrastiveResult contrastive_ic_loss(std::span<const LabeledEmbedding> samples,
                                             const ContrastiveConfig& cfg) {
  return supervised_contrastive(samples, cfg.temperature, cfg.normalize);
}

// Slot-level loss over token embeddings pooled across the episode.
inline ContrastiveResult contrastive_sf_loss(std::span<const LabeledEmbedding> tokens,
                                             const ContrastiveConfig& cfg) {
  return supervised_contrastive(tokens, cfg.temperature, cfg.normalize);
}

// Adds lambda_ic * L_contrastiveIC + lambda_sf * L_contrastiveSF to `base`.
// The samples are the support embeddings, or support and query, per
// cfg.level. `support`/`query` hold the raw encoder outputs; gradients are
// accumulated into `grads` when non-null (same shapes as the inputs).
inline LossBreakdown regularized_total_loss(LossBreakdown base,
                                            std::span<const EncodedUtterance> support,
                                            std::span<const EncodedUtterance> query,
                                            const ContrastiveConfig& cfg, EpisodeGrads* grads) {
  cfg.validate();
  struct Ref {
    const EncodedUtterance* enc;
    EncodedGrad* grad;
  };
  std::vector<Ref> pool;
  for (std::size_t i = 0; i < support.size(); ++i)
    pool.push_back({&support[i], grads ? &grads->support[i] : nullptr});
  if (cfg.level == ContrastiveLevel::SupportAndQueryMetaTrain)
    for (std::size_t i = 0; i < query.size(); ++i)
      pool.push_back({&query[i], grads ? &grads->query[i] : nullptr});

  if (cfg.lambda_ic > 0.0 && pool.size() >= 2) {
    std::vector<LabeledEmbedding> samples;
    for (const auto& r : pool) samples.push_back({r.enc->utterance, r.enc->source->intent});
    auto res = contrastive_ic_loss(samples, cfg);
    base.l_contrastive_ic = res.loss;
    base.skipped_contrastive_anchors += res.anchors_skipped;
    if (grads)
      for (std::size_t i = 0; i < pool.size(); ++i)
        axpy(cfg.lambda_ic, res.grads[i], pool[i].grad->utterance);
  }
  if (cfg.lambda_sf > 0.0) {
    std::vector<LabeledEmbedding> tokens;
    std::vector<std::pair<std::size_t, std::size_t>> where;  // (pool index, token)
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto* src = pool[i].enc->source;
      if (!src->slots) continue;
      for (std::size_t t = 0; t < src->slots->size(); ++t) {
        tokens.push_back({pool[i].enc->tokens.row(t), (*src->slots)[t]});
        where.emplace_back(i, t);
      }
    }
    if (tokens.size() >= 2) {
      auto res = contrastive_sf_loss(tokens, cfg);
      base.l_contrastive_sf = res.loss;
      base.skipped_contrastive_anchors += res.anchors_skipped;
      if (grads)
        for (std::size_t k = 0; k < where.size(); ++k)
          axpy(cfg.lambda_sf, res.grads[k], pool[where[k].first].grad->tokens.row(where[k].second));
    }
  }
  base.l_total += cfg.lambda_ic * base.l_contrastive_ic + cfg.lambda_sf * base.l_contrastive_sf;
  return base;
}

}  // namespace fsnlu

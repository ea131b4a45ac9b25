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

// Prototypical networks for joint intent classification and slot filling.
//
// Intent prototypes average utterance embeddings per intent; slot prototypes
// average token embeddings per slot label over every support token. A query
// is scored by a softmax over negative distances to the prototypes present in
// the support set:
//
//   L(z, y) = d(z, c_y) + log sum_k exp(-d(z, c_k))

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsnlu/core.hpp"
#include "fsnlu/corpus.hpp"

namespace fsnlu {

enum class Distance { SquaredEuclidean, Euclidean };

inline double distance(std::span<const double> a, std::span<const double> b, Distance metric) {
  const double sq = squared_distance(a, b);
  return metric == Distance::SquaredEuclidean ? sq : std::sqrt(sq);
}

// d distance / d a. The Euclidean gradient at a == b is taken as zero.
inline void distance_grad(std::span<const double> a, std::span<const double> b, Distance metric,
                          double scale, std::span<double> out) {
  double factor = 2.0;
  if (metric == Distance::Euclidean) {
    const double dist = std::sqrt(squared_distance(a, b));
    if (dist == 0.0) return;
    factor = 1.0 / dist;
  }
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += scale * factor * (a[i] - b[i]);
}

struct Prototype {
  Vector mean;
  std::size_t count = 0;
};

using PrototypeTable = std::map<int, Prototype>;

struct PrototypeSet {
  PrototypeTable intents;
  PrototypeTable slots;
  PrototypeTable pos;  // only filled by the syntax extension
};

// Running class-mean accumulator.
class PrototypeBuilder {
 public:
  void add(int label, std::span<const double> row) {
    auto& p = table_[label];
    if (p.mean.empty()) p.mean.assign(row.size(), 0.0);
    if (p.mean.size() != row.size()) throw Error("prototype: inconsistent embedding width");
    axpy(1.0, row, p.mean);
    ++p.count;
  }

  PrototypeTable finish() && {
    for (auto& [label, p] : table_)
      for (auto& v : p.mean) v /= static_cast<double>(p.count);
    return std::move(table_);
  }

 private:
  PrototypeTable table_;
};

// Embeddings of one utterance in the spaces the losses consume.
struct EncodedUtterance {
  const Utterance* source = nullptr;
  Vector utterance;  // intent space
  Matrix tokens;     // slot space, one row per token
};

struct EncodedGrad {
  Vector utterance;
  Matrix tokens;
};

inline EncodedGrad zero_grad_like(const EncodedUtterance& e) {
  return {Vector(e.utterance.size(), 0.0), Matrix(e.tokens.rows(), e.tokens.cols())};
}

// Intent prototypes from every support utterance; slot prototypes from every
// token of support utterances that carry slot labels.
inline PrototypeSet compute_prototypes(std::span<const EncodedUtterance> support) {
  PrototypeBuilder intents, slots;
  for (const auto& e : support) {
    intents.add(e.source->intent, e.utterance);
    if (!e.source->slots) continue;
    const auto& labels = *e.source->slots;
    for (std::size_t t = 0; t < labels.size(); ++t) slots.add(labels[t], e.tokens.row(t));
  }
  return {std::move(intents).finish(), std::move(slots).finish(), {}};
}

struct NllResult {
  double loss = 0.0;
  Vector d_query;
  std::map<int, Vector> d_prototypes;
};

// Negative log softmax of -distance at `target`, with gradients w.r.t. the
// query and every prototype.
inline NllResult prototype_nll(const PrototypeTable& protos, std::span<const double> query,
                               int target, Distance metric) {
  if (!protos.count(target))
    throw DataError("prototype loss: no prototype for class " + std::to_string(target));
  std::vector<int> labels;
  Vector neg;
  for (const auto& [label, p] : protos) {
    labels.push_back(label);
    neg.push_back(-distance(query, p.mean, metric));
  }
  const double lse = log_sum_exp(neg);
  NllResult r;
  r.d_query.assign(query.size(), 0.0);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double prob = std::exp(neg[k] - lse);
    const bool is_target = labels[k] == target;
    if (is_target) r.loss = -neg[k] + lse;
    // dL/dd_k = [k == target] - p_k
    const double coef = (is_target ? 1.0 : 0.0) - prob;
    const auto& c = protos.at(labels[k]).mean;
    distance_grad(query, c, metric, coef, r.d_query);
    Vector dc(query.size(), 0.0);
    distance_grad(c, query, metric, coef, dc);
    r.d_prototypes.emplace(labels[k], std::move(dc));
  }
  return r;
}

inline NllResult intent_loss(const PrototypeSet& protos, std::span<const double> query,
                             int intent, Distance metric = Distance::SquaredEuclidean) {
  return prototype_nll(protos.intents, query, intent, metric);
}

struct SlotLossResult {
  double loss = 0.0;  // mean over scored tokens
  Matrix d_tokens;
  std::map<int, Vector> d_prototypes;
  std::size_t scored = 0;
  std::size_t skipped = 0;  // tokens whose label has no prototype
};

// Mean per-token prototype loss over `tokens` (rows) labelled by `labels`.
// Tokens whose class has no prototype are skipped; zero scored tokens is an
// error.
inline SlotLossResult slot_loss(const PrototypeTable& protos, const Matrix& tokens,
                                std::span<const int> labels,
                                Distance metric = Distance::SquaredEuclidean) {
  if (labels.size() != tokens.rows()) throw DataError("slot loss: label/token count mismatch");
  SlotLossResult r;
  r.d_tokens = Matrix(tokens.rows(), tokens.cols());
  for (std::size_t t = 0; t < labels.size(); ++t)
    protos.count(labels[t]) ? ++r.scored : ++r.skipped;
  if (r.scored == 0) throw DataError("slot loss: no scorable tokens");
  const double w = 1.0 / static_cast<double>(r.scored);
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (!protos.count(labels[t])) continue;
    auto one = prototype_nll(protos, tokens.row(t), labels[t], metric);
    r.loss += w * one.loss;
    axpy(w, one.d_query, r.d_tokens.row(t));
    for (auto& [label, g] : one.d_prototypes) {
      auto& acc = r.d_prototypes[label];
      if (acc.empty()) acc.assign(g.size(), 0.0);
      axpy(w, g, acc);
    }
  }
  return r;
}

inline SlotLossResult slot_loss(const PrototypeSet& protos, const Matrix& tokens,
                                std::span<const int> labels,
                                Distance metric = Distance::SquaredEuclidean) {
  return slot_loss(protos.slots, tokens, labels, metric);
}

struct LossBreakdown {
  double l_ic = 0.0;
  double l_slots = 0.0;
  double l_contrastive_ic = 0.0;
  double l_contrastive_sf = 0.0;
  double l_pos = 0.0;
  double l_total = 0.0;
  // diagnostics
  std::size_t skipped_slot_tokens = 0;
  std::size_t queries_without_slot_loss = 0;
  std::size_t skipped_contrastive_anchors = 0;
};

struct EpisodeGrads {
  std::vector<EncodedGrad> support;
  std::vector<EncodedGrad> query;
};

inline EpisodeGrads zero_grads(std::span<const EncodedUtterance> support,
                               std::span<const EncodedUtterance> query) {
  EpisodeGrads g;
  for (const auto& e : support) g.support.push_back(zero_grad_like(e));
  for (const auto& e : query) g.query.push_back(zero_grad_like(e));
  return g;
}

namespace detail {

inline void add_scaled(std::map<int, Vector>& acc, const std::map<int, Vector>& g, double w) {
  for (const auto& [label, v] : g) {
    auto& a = acc[label];
    if (a.empty()) a.assign(v.size(), 0.0);
    axpy(w, v, a);
  }
}

}  // namespace detail

// Prototypical loss averaged over the query set:
//   l_total = (1/|Q|) sum_z [L_IC(z) + L_Slots(z)]
// Queries without slot labels, or whose tokens all lack a prototype,
// contribute no slot term. When `grads` is non-null it receives gradients
// w.r.t. every support and query embedding (support gradients flow through
// the prototype means).
inline LossBreakdown prototypical_loss(std::span<const EncodedUtterance> support,
                                       std::span<const EncodedUtterance> query, Distance metric,
                                       EpisodeGrads* grads) {
  if (query.empty()) throw DataError("prototypical loss: empty query set");
  const PrototypeSet protos = compute_prototypes(support);
  const double w = 1.0 / static_cast<double>(query.size());

  LossBreakdown out;
  std::map<int, Vector> d_intent_protos, d_slot_protos;
  for (std::size_t q = 0; q < query.size(); ++q) {
    const auto& e = query[q];
    auto ic = intent_loss(protos, e.utterance, e.source->intent, metric);
    out.l_ic += w * ic.loss;
    if (grads) {
      axpy(w, ic.d_query, grads->query[q].utterance);
      detail::add_scaled(d_intent_protos, ic.d_prototypes, w);
    }
    if (!e.source->slots) {
      ++out.queries_without_slot_loss;
      continue;
    }
    const auto& labels = *e.source->slots;
    std::size_t scorable = 0;
    for (int s : labels) scorable += protos.slots.count(s);
    out.skipped_slot_tokens += labels.size() - scorable;
    if (scorable == 0) {
      ++out.queries_without_slot_loss;
      continue;
    }
    auto sf = slot_loss(protos, e.tokens, labels, metric);
    out.l_slots += w * sf.loss;
    if (grads) {
      axpy(w, sf.d_tokens.data(), grads->query[q].tokens.data());
      detail::add_scaled(d_slot_protos, sf.d_prototypes, w);
    }
  }
  out.l_total = out.l_ic + out.l_slots;

  if (grads) {
    for (std::size_t s = 0; s < support.size(); ++s) {
      const auto& e = support[s];
      const auto& pi = protos.intents.at(e.source->intent);
      if (auto it = d_intent_protos.find(e.source->intent); it != d_intent_protos.end())
        axpy(1.0 / static_cast<double>(pi.count), it->second, grads->support[s].utterance);
      if (!e.source->slots) continue;
      const auto& labels = *e.source->slots;
      for (std::size_t t = 0; t < labels.size(); ++t) {
        auto it = d_slot_protos.find(labels[t]);
        if (it == d_slot_protos.end()) continue;
        const auto count = protos.slots.at(labels[t]).count;
        axpy(1.0 / static_cast<double>(count), it->second, grads->support[s].tokens.row(t));
      }
    }
  }
  return out;
}

// Values-only variant over fixed prototypes.
inline LossBreakdown total_loss(const PrototypeSet& protos,
                                std::span<const EncodedUtterance> query,
                                Distance metric = Distance::SquaredEuclidean) {
  if (query.empty()) throw DataError("total loss: empty query set");
  const double w = 1.0 / static_cast<double>(query.size());
  LossBreakdown out;
  for (const auto& e : query) {
    out.l_ic += w * intent_loss(protos, e.utterance, e.source->intent, metric).loss;
    if (!e.source->slots) {
      ++out.queries_without_slot_loss;
      continue;
    }
    std::size_t scorable = 0;
    for (int s : *e.source->slots) scorable += protos.slots.count(s);
    out.skipped_slot_tokens += e.source->slots->size() - scorable;
    if (scorable == 0) {
      ++out.queries_without_slot_loss;
      continue;
    }
    out.l_slots += w * slot_loss(protos, e.tokens, *e.source->slots, metric).loss;
  }
  out.l_total = out.l_ic + out.l_slots;
  return out;
}

// Nearest prototype; exact ties go to the lowest class id.
inline int nearest_prototype(const PrototypeTable& protos, std::span<const double> query,
                             Distance metric = Distance::SquaredEuclidean) {
  if (protos.empty()) throw DataError("prediction: no prototypes");
  int best = protos.begin()->first;
  double best_d = INFINITY;
  for (const auto& [label, p] : protos) {
    const double dist = distance(query, p.mean, metric);
    if (dist < best_d) {
      best_d = dist;
      best = label;
    }
  }
  return best;
}

inline int predict_intent(const PrototypeSet& protos, std::span<const double> query,
                          Distance metric = Distance::SquaredEuclidean) {
  return nearest_prototype(protos.intents, query, metric);
}

// Turns orphan I-X tags (not continuing an X span) into B-X.
inline std::vector<std::string> repair_bio(std::vector<std::string> labels) {
  std::string open;
  for (auto& l : labels) {
    BioTag t = parse_bio(l);
    if (t.prefix == 'I' && t.type != open) l = begin_tag(t.type);
    open = t.prefix == 'O' ? std::string{} : t.type;
  }
  return labels;
}

inline std::vector<int> predict_slots(const PrototypeSet& protos, const Matrix& tokens,
                                      const LabelVocab& slot_vocab,
                                      Distance metric = Distance::SquaredEuclidean) {
  std::vector<std::string> labels;
  for (std::size_t t = 0; t < tokens.rows(); ++t)
    labels.push_back(slot_vocab.label(nearest_prototype(protos.slots, tokens.row(t), metric)));
  std::vector<int> ids;
  for (const auto& l : repair_bio(std::move(labels))) ids.push_back(slot_vocab.id(l));
  return ids;
}

}  // namespace fsnlu

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

// Central finite-difference checks of every analytic gradient in the
// library, one suite per loss component.

#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fsnlu/contrastive.hpp"
#include "fsnlu/core.hpp"
#include "fsnlu/encoder.hpp"
#include "fsnlu/protonet.hpp"
#include "fsnlu/syntax.hpp"
#include "fsnlu/trainer.hpp"

namespace fsnlu {

struct GradcheckOptions {
  std::size_t dim = 8;
  std::size_t instances = 20;
  std::uint64_t seed = 0;
  double epsilon = 1e-4;
  double tolerance = 1e-3;
  double floor = 1e-7;  // denominator floor for the relative error
  std::size_t max_coords = 0;  // per instance; 0 checks every coordinate
  std::optional<std::string> corrupt;  // scale this component's analytic gradient
};

struct ComponentReport {
  std::string name;
  std::size_t instances = 0;
  std::size_t coords = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

inline const std::vector<std::string>& gradcheck_components() {
  static const std::vector<std::string> names = {
      "intent_loss",  "slot_loss",      "total_loss", "regularized_total_loss",
      "contrastive_ic", "contrastive_sf", "pos_loss",  "composite_pos_loss",
      "encoder",      "loss_for_config"};
  return names;
}

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace detail {

// Compares `analytic[k]` with the central difference of `f` in `*vars[k]`.
inline void fd_compare(const std::function<double()>& f, const std::vector<double*>& vars,
                       const Vector& analytic, const GradcheckOptions& opt, Rng& rng,
                       ComponentReport& rep) {
  if (vars.size() != analytic.size()) throw Error("gradcheck: variable/gradient count mismatch");
  std::vector<std::size_t> idx(vars.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (opt.max_coords && idx.size() > opt.max_coords) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(opt.max_coords);
  }
  const double scale = opt.corrupt && *opt.corrupt == rep.name ? 1.5 : 1.0;
  for (std::size_t k : idx) {
    double& x = *vars[k];
    const double saved = x;
    x = saved + opt.epsilon;
    const double up = f();
    x = saved - opt.epsilon;
    const double down = f();
    x = saved;
    const double numeric = (up - down) / (2.0 * opt.epsilon);
    // Rounding in f itself bounds what the difference quotient can resolve;
    // below that, compare absolutely.
    const double roundoff = 16.0 * std::numeric_limits<double>::epsilon() *
                            (std::abs(up) + std::abs(down)) / (2.0 * opt.epsilon);
    const double floor = std::max(opt.floor, roundoff / opt.tolerance);
    const double err = relative_error(scale * analytic[k], numeric, floor);
    rep.max_rel_error = std::max(rep.max_rel_error, err);
    if (!(err <= opt.tolerance)) rep.passed = false;
    ++rep.coords;
  }
  ++rep.instances;
}

inline double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

// Gaussian rows with norm >= 0.5: normalizing a near-zero row is too
// curved for finite differences at small d.
inline void fill_row(Rng& rng, std::span<double> row) {
  do {
    for (auto& x : row) x = normal(rng);
  } while (dot(row, row) < 0.25);
}

inline Vector random_vector(Rng& rng, std::size_t d) {
  Vector v(d);
  fill_row(rng, v);
  return v;
}

inline Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) fill_row(rng, m.row(i));
  return m;
}

// Valid BIO ids over O=0, B-a=1, I-a=2, B-b=3, I-b=4.
inline std::vector<int> random_bio(Rng& rng, std::size_t n) {
  std::vector<int> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> allowed = {0, 1, 3};
    if (!out.empty() && (out.back() == 1 || out.back() == 2)) allowed.push_back(2);
    if (!out.empty() && (out.back() == 3 || out.back() == 4)) allowed.push_back(4);
    out.push_back(allowed[uniform_index(rng, allowed.size())]);
  }
  return out;
}

inline PrototypeTable random_table(Rng& rng, std::size_t classes, std::size_t d) {
  PrototypeTable t;
  for (std::size_t c = 0; c < classes; ++c) t[static_cast<int>(c)] = {random_vector(rng, d), 1};
  return t;
}

// A random episode of embeddings; utterances own their labels.
struct ToyEpisode {
  std::vector<Utterance> support_utts, query_utts;
  std::vector<EncodedUtterance> support, query;
  std::vector<SyntacticAnnotation> support_ann, query_ann;
};

inline ToyEpisode random_episode(Rng& rng, std::size_t d) {
  ToyEpisode t;
  const int way = uniform_int(rng, 2, 3);
  const std::size_t n_support = static_cast<std::size_t>(way) + uniform_index(rng, 3);
  const std::size_t n_query = 1 + uniform_index(rng, 3);
  auto make = [&](std::size_t count, bool support, std::vector<Utterance>& utts,
                  std::vector<SyntacticAnnotation>& anns) {
    for (std::size_t i = 0; i < count; ++i) {
      Utterance u;
      u.id = (support ? "s" : "q") + std::to_string(i);
      u.intent = support && i < static_cast<std::size_t>(way) ? static_cast<int>(i)
                                                              : uniform_int(rng, 0, way - 1);
      const std::size_t n = 1 + uniform_index(rng, 4);
      u.tokens.assign(n, "w");
      if (i == 0 || bernoulli(rng, 0.8)) u.slots = random_bio(rng, n);
      SyntacticAnnotation a;
      for (std::size_t k = 0; k < n; ++k) {
        a.pos_tags.push_back(uniform_int(rng, 0, 3));
        a.noun_chunk.push_back(bernoulli(rng, 0.5));
      }
      utts.push_back(std::move(u));
      anns.push_back(std::move(a));
    }
  };
  make(n_support, true, t.support_utts, t.support_ann);
  make(n_query, false, t.query_utts, t.query_ann);
  for (const auto& u : t.support_utts)
    t.support.push_back({&u, random_vector(rng, d), random_matrix(rng, u.size(), d)});
  for (const auto& u : t.query_utts)
    t.query.push_back({&u, random_vector(rng, d), random_matrix(rng, u.size(), d)});
  return t;
}

inline void collect(std::vector<EncodedUtterance>& es, std::vector<double*>& vars) {
  for (auto& e : es) {
    for (auto& x : e.utterance) vars.push_back(&x);
    for (auto& x : e.tokens.data()) vars.push_back(&x);
  }
}

inline void collect(const std::vector<EncodedGrad>& gs, Vector& out) {
  for (const auto& g : gs) {
    out.insert(out.end(), g.utterance.begin(), g.utterance.end());
    out.insert(out.end(), g.tokens.data().begin(), g.tokens.data().end());
  }
}

inline void collect_table(PrototypeTable& t, std::vector<double*>& vars) {
  for (auto& [label, p] : t)
    for (auto& x : p.mean) vars.push_back(&x);
}

inline void collect_table_grad(const PrototypeTable& t, const std::map<int, Vector>& g,
                               Vector& out) {
  for (const auto& [label, p] : t) {
    auto it = g.find(label);
    for (std::size_t k = 0; k < p.mean.size(); ++k)
      out.push_back(it == g.end() ? 0.0 : it->second[k]);
  }
}

inline ContrastiveConfig random_contrastive(Rng& rng) {
  ContrastiveConfig c;
  c.lambda_ic = uniform_real(rng, 0.01, 1.0);
  c.lambda_sf = uniform_real(rng, 0.01, 1.0);
  c.level = bernoulli(rng, 0.5) ? ContrastiveLevel::SupportMetaTrain
                                : ContrastiveLevel::SupportAndQueryMetaTrain;
  return c;
}

// Labels with at least one positive pair.
inline std::vector<int> random_labels(Rng& rng, std::size_t m, int classes) {
  std::vector<int> y(m);
  for (auto& v : y) v = uniform_int(rng, 0, classes - 1);
  y[1] = y[0];
  return y;
}

// Toy corpus and model for checks through the encoder.
struct ToyModelEpisode {
  Dataset ds;
  Episode ep;
  Model model;
};

inline ToyModelEpisode random_model_episode_once(Rng& rng, std::size_t d) {
  ToyModelEpisode t;
  const std::vector<std::string> words = {"book", "a", "table", "one", "blue", "ribbon",
                                          "barbecue", "in", "paris", "play", "jazz"};
  for (const char* s : {"a", "b"}) t.ds.add_slot_type(s);
  for (const char* name : {"I0", "I1", "I2"}) t.ds.intent_vocab.add(name);
  auto utt = [&](const std::string& id, int intent) {
    Utterance u;
    u.id = id;
    u.intent = intent;
    const std::size_t n = 1 + uniform_index(rng, 4);
    for (std::size_t k = 0; k < n; ++k) u.tokens.push_back(words[uniform_index(rng, words.size())]);
    u.slots = random_bio(rng, n);
    return u;
  };
  for (int c = 0; c < 3; ++c) {
    t.ep.intent_classes.push_back(c);
    for (int s = 0; s < 2; ++s) t.ep.support.push_back(utt("s" + std::to_string(c * 2 + s), c));
    t.ep.query.push_back(utt("q" + std::to_string(c), c));
  }
  t.ep.kmax = 20;
  EncoderConfig cfg;
  cfg.dim = d;
  cfg.ff_dim = 2 * d;
  cfg.layers = 1;
  cfg.max_len = 6;
  cfg.init_range = 0.5;
  std::vector<std::string> vocab_words(words.begin(), words.end());
  t.model = init_model(TokenVocab::from_words(vocab_words), cfg, rng());
  return t;
}

// Layer norm over few features is close to a step function when a row's
// spread is small; finite differences are meaningless there, so such
// instances are redrawn.
inline bool well_conditioned(const EncoderParams& p, std::span<const int> ids) {
  const auto out = encode(p, ids);
  for (const auto& b : out.tape->blocks)
    for (const auto* c : {&b.ln1, &b.ln2})
      for (double inv : c->inv_std)
        if (inv > 30.0) return false;
  return true;
}

inline ToyModelEpisode random_model_episode(Rng& rng, std::size_t d) {
  for (;;) {
    ToyModelEpisode t = random_model_episode_once(rng, d);
    bool ok = true;
    for (const auto* set : {&t.ep.support, &t.ep.query})
      for (const auto& u : *set) ok = ok && well_conditioned(t.model.params, t.model.vocab.encode(u.tokens));
    if (ok) return t;
  }
}

}  // namespace detail

inline ComponentReport check_component(const std::string& name, const GradcheckOptions& opt) {
  ComponentReport rep;
  rep.name = name;
  Rng rng = make_stream(opt.seed, std::hash<std::string>{}(name));
  const std::size_t d = opt.dim;
  const Distance sq = Distance::SquaredEuclidean;

  for (std::size_t inst = 0; inst < opt.instances; ++inst) {
    std::vector<double*> vars;
    Vector analytic;
    std::function<double()> f;

    if (name == "intent_loss" || name == "pos_loss") {
      auto table = detail::random_table(rng, 2 + uniform_index(rng, 4), d);
      Vector q = detail::random_vector(rng, d);
      const int target = static_cast<int>(uniform_index(rng, table.size()));
      auto eval = [&] {
        if (name == "pos_loss") return pos_loss(table, q, target, sq);
        PrototypeSet ps;
        ps.intents = table;
        return intent_loss(ps, q, target, sq);
      };
      auto r = eval();
      for (auto& x : q) vars.push_back(&x);
      detail::collect_table(table, vars);
      analytic = r.d_query;
      detail::collect_table_grad(table, r.d_prototypes, analytic);
      f = [&] { return eval().loss; };
      detail::fd_compare(f, vars, analytic, opt, rng, rep);
    } else if (name == "slot_loss") {
      auto table = detail::random_table(rng, 2 + uniform_index(rng, 3), d);
      const std::size_t n = 1 + uniform_index(rng, 6);
      Matrix toks = detail::random_matrix(rng, n, d);
      std::vector<int> labels(n);
      for (auto& l : labels) l = static_cast<int>(uniform_index(rng, table.size() + 1));
      labels[0] = 0;  // at least one scorable token
      auto r = slot_loss(table, toks, labels, sq);
      for (auto& x : toks.data()) vars.push_back(&x);
      detail::collect_table(table, vars);
      analytic.assign(r.d_tokens.data().begin(), r.d_tokens.data().end());
      detail::collect_table_grad(table, r.d_prototypes, analytic);
      f = [&] { return slot_loss(table, toks, labels, sq).loss; };
      detail::fd_compare(f, vars, analytic, opt, rng, rep);
    } else if (name == "total_loss" || name == "regularized_total_loss") {
      auto t = detail::random_episode(rng, d);
      const auto cc = detail::random_contrastive(rng);
      const bool reg = name == "regularized_total_loss";
      auto eval = [&](EpisodeGrads* g) {
        auto lb = prototypical_loss(t.support, t.query, sq, g);
        if (reg) lb = regularized_total_loss(lb, t.support, t.query, cc, g);
        return lb.l_total;
      };
      EpisodeGrads g = zero_grads(t.support, t.query);
      eval(&g);
      detail::collect(t.support, vars);
      detail::collect(t.query, vars);
      detail::collect(g.support, analytic);
      detail::collect(g.query, analytic);
      f = [&] { return eval(nullptr); };
      detail::fd_compare(f, vars, analytic, opt, rng, rep);
    } else if (name == "contrastive_ic" || name == "contrastive_sf") {
      const std::size_t m = 2 + uniform_index(rng, 5);
      std::vector<Vector> xs;
      for (std::size_t i = 0; i < m; ++i) xs.push_back(detail::random_vector(rng, d));
      const auto labels = detail::random_labels(rng, m, name == "contrastive_ic" ? 3 : 4);
      ContrastiveConfig cc;
      auto eval = [&] {
        std::vector<LabeledEmbedding> s;
        for (std::size_t i = 0; i < m; ++i) s.push_back({xs[i], labels[i]});
        return name == "contrastive_ic" ? contrastive_ic_loss(s, cc) : contrastive_sf_loss(s, cc);
      };
      auto r = eval();
      for (std::size_t i = 0; i < m; ++i) {
        for (auto& x : xs[i]) vars.push_back(&x);
        analytic.insert(analytic.end(), r.grads[i].begin(), r.grads[i].end());
      }
      f = [&] { return eval().loss; };
      detail::fd_compare(f, vars, analytic, opt, rng, rep);
    } else if (name == "composite_pos_loss") {
      auto t = detail::random_episode(rng, d);
      double beta = uniform_real(rng, 0.0, 1.0);
      auto eval = [&](EpisodeGrads* g, PosLossResult* out) {
        auto lb = prototypical_loss(t.support, t.query, sq, g);
        EncodedEpisode e;
        e.support = t.support;
        e.query = t.query;
        e.support_ann = t.support_ann;
        e.query_ann = t.query_ann;
        auto pos = pos_multitask_loss(e, sq, out != nullptr);
        if (out) *out = pos;
        return lb.l_total + beta * pos.loss;
      };
      EpisodeGrads g = zero_grads(t.support, t.query);
      PosLossResult pos;
      eval(&g, &pos);
      for (std::size_t i = 0; i < t.support.size(); ++i)
        axpy(beta, pos.d_support[i].data(), g.support[i].tokens.data());
      for (std::size_t i = 0; i < t.query.size(); ++i)
        axpy(beta, pos.d_query[i].data(), g.query[i].tokens.data());
      detail::collect(t.support, vars);
      detail::collect(t.query, vars);
      vars.push_back(&beta);
      detail::collect(g.support, analytic);
      detail::collect(g.query, analytic);
      analytic.push_back(pos.loss);
      f = [&] { return eval(nullptr, nullptr); };
      detail::fd_compare(f, vars, analytic, opt, rng, rep);
    } else if (name == "encoder") {
      EncoderConfig cfg;
      cfg.vocab_size = 7;
      cfg.dim = d;
      cfg.ff_dim = 2 * d;
      cfg.layers = 1;
      cfg.max_len = 6;
      cfg.init_range = 0.5;
      EncoderParams params;
      std::vector<int> ids;
      do {
        params = init_encoder(cfg, rng);
        ids.assign(1 + uniform_index(rng, 5), 0);
        for (auto& id : ids) id = static_cast<int>(uniform_index(rng, cfg.vocab_size));
      } while (!detail::well_conditioned(params, ids));
      const Vector wu = detail::random_vector(rng, d);
      const Matrix wt = detail::random_matrix(rng, ids.size(), d);
      auto out = encode(params, ids);
      auto g = backward(out, wu, wt);
      for (auto& x : params.values()) vars.push_back(&x);
      analytic = g.values();
      f = [&] {
        auto o = encode(params, ids, false);
        return dot(o.utterance, wu) + dot(o.tokens.data(), wt.data());
      };
      detail::fd_compare(f, vars, analytic, opt, rng, rep);
    } else if (name == "loss_for_config") {
      auto t = detail::random_model_episode(rng, d);
      TrainConfig cfg;
      cfg.contrastive = detail::random_contrastive(rng);
      SyntaxConfig sx;
      sx.feature_concat = bernoulli(rng, 0.5);
      sx.noun_chunks = bernoulli(rng, 0.5);
      sx.multitask = true;
      sx.beta = uniform_real(rng, 0.01, 1.0);
      cfg.syntax = sx;
      EncoderGrads g = EncoderParams::zeros_like(t.model.params);
      loss_for_config(t.ep, t.model, cfg, &g);
      for (auto& x : t.model.params.values()) vars.push_back(&x);
      analytic = g.values();
      f = [&] { return loss_for_config(t.ep, t.model, cfg, nullptr).l_total; };
      GradcheckOptions sub = opt;
      if (!sub.max_coords) sub.max_coords = 200;
      detail::fd_compare(f, vars, analytic, sub, rng, rep);
    } else {
      throw ConfigError("gradcheck: unknown component '" + name + "'");
    }
  }
  return rep;
}

inline std::vector<ComponentReport> run_gradcheck(const GradcheckOptions& opt) {
  if (opt.corrupt) {
    const auto& names = gradcheck_components();
    if (std::find(names.begin(), names.end(), *opt.corrupt) == names.end())
      throw ConfigError("gradcheck: unknown component '" + *opt.corrupt + "'");
  }
  std::vector<ComponentReport> out;
  for (const auto& name : gradcheck_components()) out.push_back(check_component(name, opt));
  return out;
}

}  // namespace fsnlu

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

#include <numeric>
#include <sstream>

#include "fsnlu/encoder.hpp"
#include "test_support.hpp"

using namespace fsnlu;

namespace {

EncoderConfig small_config(std::size_t dim = 8, std::size_t layers = 1) {
  EncoderConfig c;
  c.vocab_size = 12;
  c.max_len = 10;
  c.dim = dim;
  c.ff_dim = 2 * dim;
  c.layers = layers;
  return c;
}

std::vector<double> naive_layer_norm(std::vector<double> x, double eps) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  for (double& v : x) v = (v - mean) / std::sqrt(var + eps);
  return x;
}

// Linear probe loss: <a, utterance> + <B, tokens>.
struct Probe {
  Vector a;
  Matrix b;
  double operator()(const EncoderOutput& o) const {
    double s = dot(a, o.utterance);
    for (std::size_t t = 0; t < b.rows(); ++t) s += dot(b.row(t), o.tokens.row(t));
    return s;
  }
};

Probe random_probe(Rng& rng, std::size_t n, std::size_t d) {
  Probe p{Vector(d), Matrix(n, d)};
  for (auto& v : p.a) v = uniform_real(rng, -1, 1);
  for (auto& v : p.b.data()) v = uniform_real(rng, -1, 1);
  return p;
}

}  // namespace

TEST(Encoder, OutputShapes) {
  Rng rng(0);
  auto p = init_encoder(small_config(), rng);
  std::vector<int> ids = {1, 2, 3, 4, 5};
  auto out = encode(p, ids);
  EXPECT_EQ(out.utterance.size(), 8u);
  EXPECT_EQ(out.tokens.rows(), 5u);
  EXPECT_EQ(out.tokens.cols(), 8u);
}

TEST(Encoder, DeterministicForward) {
  Rng r1(5), r2(5);
  auto p1 = init_encoder(small_config(8, 2), r1);
  auto p2 = init_encoder(small_config(8, 2), r2);
  EXPECT_TRUE(p1 == p2);
  std::vector<int> ids = {3, 1, 4, 1, 5};
  auto a = encode(p1, ids), b = encode(p2, ids);
  EXPECT_EQ(a.utterance, b.utterance);
  EXPECT_EQ(a.tokens, b.tokens);
}

TEST(Encoder, ZeroMixingReducesToLayerNorm) {
  for (std::size_t layers : {1u, 2u}) {
    Rng rng(1);
    auto cfg = small_config(6, layers);
    auto p = init_encoder(cfg, rng);
    for (std::size_t l = 0; l < layers; ++l)
      for (const char* n : {"wq", "wk", "wv", "w1", "b1", "w2", "b2"}) {
        auto t = p.tensor("block" + std::to_string(l) + "." + n);
        std::fill(t.data, t.data + t.size(), 0.0);
      }
    std::vector<int> ids = {2, 7, 7};
    auto out = encode(p, ids);
    const auto tok = p.tensor("tok_embed");
    const auto pos = p.tensor("pos_embed");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::vector<double> x(cfg.dim);
      for (std::size_t j = 0; j < cfg.dim; ++j) x[j] = tok(ids[i], j) + pos(i + 1, j);
      for (std::size_t k = 0; k < 2 * layers; ++k) x = naive_layer_norm(x, cfg.ln_eps);
      for (std::size_t j = 0; j < cfg.dim; ++j) EXPECT_NEAR(out.tokens(i, j), x[j], 1e-12);
    }
  }
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
  for (int draw = 0; draw < 20; ++draw) {
    Rng rng(100 + draw);
    auto cfg = small_config(8, 1 + draw % 2);
    auto p = init_encoder(cfg, rng);
    std::vector<int> ids;
    const auto n = 2 + uniform_index(rng, 5);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(static_cast<int>(uniform_index(rng, 12)));
    const auto probe = random_probe(rng, n, cfg.dim);

    auto out = encode(p, ids);
    Matrix db = probe.b;
    auto g = backward(out, probe.a, db);

    auto& w = p.values();
    for (int k = 0; k < 40; ++k) {
      const auto i = uniform_index(rng, w.size());
      const double saved = w[i], h = 1e-5;
      w[i] = saved + h;
      const double up = probe(encode(p, ids, false));
      w[i] = saved - h;
      const double down = probe(encode(p, ids, false));
      w[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double an = g.values()[i];
      EXPECT_LE(std::abs(an - fd), 1e-4 * std::max({std::abs(an), std::abs(fd), 1e-3}))
          << "param " << i << " draw " << draw;
    }
  }
}

TEST(Encoder, SingleTokenGradientTouchesOneEmbeddingRow) {
  Rng rng(7);
  auto cfg = small_config();
  auto p = init_encoder(cfg, rng);
  std::vector<int> ids = {4};
  auto probe = random_probe(rng, 1, cfg.dim);
  auto out = encode(p, ids);
  auto g = backward(out, probe.a, probe.b);
  const auto gt = g.tensor("tok_embed");
  for (std::size_t r = 0; r < gt.rows; ++r) {
    double norm = 0;
    for (std::size_t c = 0; c < gt.cols; ++c) norm += gt(r, c) * gt(r, c);
    if (r == 4)
      EXPECT_GT(norm, 0.0);
    else
      EXPECT_EQ(norm, 0.0);
  }
}

TEST(Encoder, ZeroUpstreamGivesZeroGradient) {
  Rng rng(8);
  auto cfg = small_config(8, 2);
  auto p = init_encoder(cfg, rng);
  std::vector<int> ids = {1, 2, 3};
  auto out = encode(p, ids);
  auto g = backward(out, Vector(8, 0.0), Matrix(3, 8));
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, TapeIsSingleUse) {
  Rng rng(9);
  auto p = init_encoder(small_config(), rng);
  std::vector<int> ids = {1, 2};
  auto out = encode(p, ids);
  backward(out, Vector(8, 1.0), Matrix(2, 8));
  EXPECT_THROW(backward(out, Vector(8, 1.0), Matrix(2, 8)), Error);
  auto no_tape = encode(p, ids, false);
  EXPECT_THROW(backward(no_tape, Vector(8, 1.0), Matrix(2, 8)), Error);
}

TEST(Encoder, InputErrors) {
  Rng rng(10);
  auto p = init_encoder(small_config(), rng);
  std::vector<int> too_long(11, 1), bad_id = {1, 12}, empty;
  EXPECT_THROW(encode(p, too_long), DataError);
  EXPECT_THROW(encode(p, bad_id), DataError);
  EXPECT_THROW(encode(p, empty), DataError);
  std::vector<int> at_limit(10, 1);
  EXPECT_NO_THROW(encode(p, at_limit));
}

TEST(Encoder, VocabularyPermutationInvariance) {
  Rng rng(11);
  auto cfg = small_config(8, 2);
  auto p = init_encoder(cfg, rng);
  std::vector<int> perm(cfg.vocab_size);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto q = p;
  auto src = p.tensor("tok_embed");
  auto dst = q.tensor("tok_embed");
  for (std::size_t r = 0; r < cfg.vocab_size; ++r)
    for (std::size_t c = 0; c < cfg.dim; ++c) dst(perm[r], c) = src(r, c);
  std::vector<int> ids = {0, 5, 3, 11, 5}, mapped;
  for (int i : ids) mapped.push_back(perm[i]);
  auto a = encode(p, ids, false), b = encode(q, mapped, false);
  EXPECT_EQ(a.utterance, b.utterance);
  EXPECT_EQ(a.tokens, b.tokens);
}

TEST(TokenVocab, UnknownMapsToReservedRow) {
  std::vector<std::string> ws = {"b", "a", "c", "a"};
  auto v = TokenVocab::from_words(ws);
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.lookup("a"), 1);
  EXPECT_EQ(v.lookup("c"), 3);
  EXPECT_EQ(v.lookup("zzz"), TokenVocab::kUnk);
  std::vector<std::string> toks = {"c", "nope"};
  EXPECT_EQ(v.encode(toks), std::vector<int>({3, 0}));
}

TEST(Checkpoint, RoundTrip) {
  Rng rng(12);
  std::vector<std::string> ws = {"book", "a", "table"};
  Model m{TokenVocab::from_words(ws), {}};
  auto cfg = small_config(8, 2);
  cfg.vocab_size = m.vocab.size();
  m.params = init_encoder(cfg, rng);
  std::stringstream buf;
  write_checkpoint(buf, m);
  auto back = read_checkpoint(buf);
  EXPECT_TRUE(back.params == m.params);
  EXPECT_EQ(back.vocab.words(), m.vocab.words());
  std::stringstream again;
  write_checkpoint(again, back);
  EXPECT_EQ(again.str(), buf.str());
}

TEST(Checkpoint, CorruptionDetected) {
  Rng rng(13);
  std::vector<std::string> ws = {"x"};
  Model m{TokenVocab::from_words(ws), {}};
  auto cfg = small_config();
  cfg.vocab_size = m.vocab.size();
  m.params = init_encoder(cfg, rng);
  std::stringstream buf;
  write_checkpoint(buf, m);
  const std::string bytes = buf.str();

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream s1(bad_magic);
  EXPECT_THROW(read_checkpoint(s1), DataError);

  std::stringstream s2(bytes.substr(0, bytes.size() - 16));
  EXPECT_THROW(read_checkpoint(s2), DataError);

  std::string renamed = bytes;
  const auto at = renamed.find("block0.wq");
  ASSERT_NE(at, std::string::npos);
  renamed[at + 7] = 'x';
  std::stringstream s3(renamed);
  EXPECT_THROW(read_checkpoint(s3), DataError);
}

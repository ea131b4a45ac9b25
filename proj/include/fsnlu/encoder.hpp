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

// Small transformer-style text encoder trained from scratch.
//
// A learned sentinel vector is prepended at position 0 and its final state is
// the utterance embedding; positions 1..n are the token embeddings. Each block
// is post-norm:
//
//   H  = LN1(X + softmax(X Wq (X Wk)^T / sqrt(d)) X Wv)
//   X' = LN2(H + gelu(H W1 + b1) W2 + b2)
//
// All parameters live in one flat buffer with a fixed named layout, so the
// same type doubles as the gradient accumulator.

#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fsnlu/core.hpp"

namespace fsnlu {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t max_len = 64;  // tokens, excluding the sentinel
  std::size_t dim = 64;
  std::size_t ff_dim = 128;
  std::size_t layers = 2;
  double ln_eps = 1e-5;
  double init_range = 0.1;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Word -> row of the token embedding table. Id 0 is the reserved UNK row.
class TokenVocab {
 public:
  static constexpr int kUnk = 0;
  static constexpr const char* kUnkWord = "<unk>";

  TokenVocab() { words_.push_back(kUnkWord); }

  // Builds a vocabulary from a set of words; order is lexicographic so the
  // result does not depend on insertion order.
  template <class Range>
  static TokenVocab from_words(const Range& words) {
    std::vector<std::string> sorted(std::begin(words), std::end(words));
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    TokenVocab v;
    for (auto& w : sorted)
      if (w != kUnkWord) v.add(w);
    return v;
  }

  int add(const std::string& w) {
    auto [it, inserted] = ids_.emplace(w, static_cast<int>(words_.size()));
    if (inserted) words_.push_back(w);
    return it->second;
  }

  int lookup(const std::string& w) const {
    auto it = ids_.find(w);
    return it == ids_.end() ? kUnk : it->second;
  }

  std::vector<int> encode(std::span<const std::string> tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(lookup(t));
    return ids;
  }

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
};

// Non-owning view of one parameter tensor.
template <class T>
struct TensorView {
  T* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<T> row(std::size_t r) const { return {data + r * cols, cols}; }
  std::size_t size() const { return rows * cols; }
};

struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

class EncoderParams {
 public:
  EncoderParams() = default;

  // Zero-filled parameters with the layout implied by `cfg`.
  explicit EncoderParams(const EncoderConfig& cfg) : cfg_(cfg) {
    if (cfg.vocab_size == 0 || cfg.dim == 0 || cfg.ff_dim == 0 || cfg.layers == 0 ||
        cfg.max_len == 0)
      throw ConfigError("encoder: vocab_size, dim, ff_dim, layers and max_len must be > 0");
    auto add = [&](std::string name, std::size_t r, std::size_t c) {
      index_[name] = slots_.size();
      slots_.push_back({std::move(name), size_, r, c});
      size_ += r * c;
    };
    const std::size_t d = cfg.dim, f = cfg.ff_dim;
    add("tok_embed", cfg.vocab_size, d);
    add("pos_embed", cfg.max_len + 1, d);
    add("sentinel", 1, d);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string p = "block" + std::to_string(l) + ".";
      add(p + "wq", d, d);
      add(p + "wk", d, d);
      add(p + "wv", d, d);
      add(p + "ln1_gain", 1, d);
      add(p + "ln1_bias", 1, d);
      add(p + "w1", d, f);
      add(p + "b1", 1, f);
      add(p + "w2", f, d);
      add(p + "b2", 1, d);
      add(p + "ln2_gain", 1, d);
      add(p + "ln2_bias", 1, d);
    }
    values_.assign(size_, 0.0);
  }

  static EncoderParams zeros_like(const EncoderParams& other) {
    return EncoderParams(other.config());
  }

  const EncoderConfig& config() const { return cfg_; }
  const std::vector<TensorSlot>& layout() const { return slots_; }
  std::size_t size() const { return size_; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  TensorView<double> tensor(const std::string& name) { return view<double>(*this, name); }
  TensorView<const double> tensor(const std::string& name) const {
    return view<const double>(*this, name);
  }

  void set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

  friend bool operator==(const EncoderParams& a, const EncoderParams& b) {
    return a.cfg_ == b.cfg_ && a.values_ == b.values_;
  }

 private:
  template <class T, class Self>
  static TensorView<T> view(Self& self, const std::string& name) {
    auto it = self.index_.find(name);
    if (it == self.index_.end()) throw Error("encoder: no tensor named '" + name + "'");
    const auto& s = self.slots_[it->second];
    return {self.values_.data() + s.offset, s.rows, s.cols};
  }

  EncoderConfig cfg_;
  std::vector<TensorSlot> slots_;
  std::map<std::string, std::size_t> index_;
  std::size_t size_ = 0;
  std::vector<double> values_;
};

using EncoderGrads = EncoderParams;

// Embedding tables uniform in [-r, r]; projections uniform in [-r, r] / sqrt(d);
// biases zero; layer-norm gains one.
inline EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng) {
  EncoderParams p(cfg);
  const double r = cfg.init_range;
  const double proj = r / std::sqrt(static_cast<double>(cfg.dim));
  for (const auto& slot : p.layout()) {
    auto t = p.tensor(slot.name);
    const auto& n = slot.name;
    const bool gain = n.ends_with("_gain");
    const bool bias = n.ends_with("_bias") || n.ends_with(".b1") || n.ends_with(".b2");
    const bool embed = n == "tok_embed" || n == "pos_embed" || n == "sentinel";
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (gain)
        t.data[i] = 1.0;
      else if (bias)
        t.data[i] = 0.0;
      else if (embed)
        t.data[i] = uniform_real(rng, -r, r);
      else
        t.data[i] = uniform_real(rng, -proj, proj);
    }
  }
  return p;
}

namespace detail {

inline double gelu(double x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
  constexpr double k = 0.7978845608028654;
  const double inner = k * (x + 0.044715 * x * x * x);
  const double t = std::tanh(inner);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * 0.044715 * x * x);
}

// out (n x m) = a (n x k) * b (k x m)
template <class B>
inline Matrix matmul(const Matrix& a, const TensorView<B>& b) {
  Matrix out(a.rows(), b.cols);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double av = a(i, k);
      if (av == 0.0) continue;
      const auto br = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

// grad (k x m) += a^T (k x n) * g (n x m)
inline void accumulate_at_b(const Matrix& a, const Matrix& g, TensorView<double> grad) {
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double av = a(i, k);
      if (av == 0.0) continue;
      auto gr = grad.row(k);
      const auto grow = g.row(i);
      for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += av * grow[j];
    }
}

// out (n x k) += g (n x m) * w^T (m x k), w is (k x m)
inline void accumulate_a_bt(const Matrix& g, const TensorView<const double>& w, Matrix& out) {
  for (std::size_t i = 0; i < g.rows(); ++i) {
    auto o = out.row(i);
    const auto gr = g.row(i);
    for (std::size_t k = 0; k < w.rows; ++k) o[k] += dot(gr, w.row(k));
  }
}

struct LayerNormCache {
  Matrix normalized;  // xhat
  Vector inv_std;
};

inline Matrix layer_norm(const Matrix& x, std::span<const double> gain, std::span<const double> bias,
                         double eps, LayerNormCache* cache) {
  const std::size_t n = x.rows(), d = x.cols();
  Matrix y(n, d);
  if (cache) {
    cache->normalized = Matrix(n, d);
    cache->inv_std.assign(n, 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = (r[j] - mean) * inv;
      y(i, j) = gain[j] * xhat + bias[j];
      if (cache) cache->normalized(i, j) = xhat;
    }
    if (cache) cache->inv_std[i] = inv;
  }
  return y;
}

inline Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& c,
                                  std::span<const double> gain, std::span<double> dgain,
                                  std::span<double> dbias) {
  const std::size_t n = dy.rows(), d = dy.cols();
  Matrix dx(n, d);
  Vector dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = c.normalized(i, j);
      dgain[j] += dy(i, j) * xhat;
      dbias[j] += dy(i, j);
      dxhat[j] = dy(i, j) * gain[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xhat;
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j)
      dx(i, j) = c.inv_std[i] * (dxhat[j] - mean_dxhat - c.normalized(i, j) * mean_dxhat_xhat);
  }
  return dx;
}

struct BlockCache {
  Matrix input, q, k, v, attn;
  LayerNormCache ln1;
  Matrix h, pre_act, act;
  LayerNormCache ln2;
};

struct Tape {
  const EncoderParams* params = nullptr;
  std::vector<int> ids;
  std::vector<BlockCache> blocks;
  bool consumed = false;
};

}  // namespace detail

struct EncoderOutput {
  Vector utterance;  // d
  Matrix tokens;     // n x d
  std::shared_ptr<detail::Tape> tape;

  bool has_tape() const { return tape && !tape->consumed; }
};

// Forward pass. `ids` must be valid rows of the token table (callers map
// unknown words to TokenVocab::kUnk). The tape keeps a pointer to `params`,
// which must outlive the backward call.
inline EncoderOutput encode(const EncoderParams& params, std::span<const int> ids,
                            bool record = true) {
  const auto& cfg = params.config();
  const std::size_t n = ids.size();
  if (n == 0) throw DataError("encoder: empty token sequence");
  if (n > cfg.max_len)
    throw DataError("encoder: sequence of " + std::to_string(n) + " tokens exceeds max_len " +
                    std::to_string(cfg.max_len));
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
      throw DataError("encoder: token id " + std::to_string(id) + " outside vocabulary");

  const std::size_t d = cfg.dim;
  const std::size_t len = n + 1;
  const auto tok = params.tensor("tok_embed");
  const auto pos = params.tensor("pos_embed");
  const auto sentinel = params.tensor("sentinel");

  Matrix x(len, d);
  for (std::size_t j = 0; j < d; ++j) x(0, j) = sentinel(0, j) + pos(0, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      x(i + 1, j) = tok(static_cast<std::size_t>(ids[i]), j) + pos(i + 1, j);

  auto tape = record ? std::make_shared<detail::Tape>() : nullptr;
  if (tape) {
    tape->params = &params;
    tape->ids.assign(ids.begin(), ids.end());
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    detail::BlockCache c;
    c.input = x;
    c.q = detail::matmul(x, params.tensor(p + "wq"));
    c.k = detail::matmul(x, params.tensor(p + "wk"));
    c.v = detail::matmul(x, params.tensor(p + "wv"));
    c.attn = Matrix(len, len);
    for (std::size_t i = 0; i < len; ++i) {
      auto a = c.attn.row(i);
      for (std::size_t j = 0; j < len; ++j) a[j] = scale * dot(c.q.row(i), c.k.row(j));
      const double lse = log_sum_exp(a);
      for (auto& e : a) e = std::exp(e - lse);
    }
    Matrix r1 = x;
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < len; ++j) axpy(c.attn(i, j), c.v.row(j), r1.row(i));
    c.h = detail::layer_norm(r1, params.tensor(p + "ln1_gain").row(0),
                             params.tensor(p + "ln1_bias").row(0), cfg.ln_eps, &c.ln1);
    c.pre_act = detail::matmul(c.h, params.tensor(p + "w1"));
    const auto b1 = params.tensor(p + "b1").row(0);
    c.act = Matrix(len, cfg.ff_dim);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < cfg.ff_dim; ++j) {
        c.pre_act(i, j) += b1[j];
        c.act(i, j) = detail::gelu(c.pre_act(i, j));
      }
    Matrix r2 = detail::matmul(c.act, params.tensor(p + "w2"));
    const auto b2 = params.tensor(p + "b2").row(0);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < d; ++j) r2(i, j) += c.h(i, j) + b2[j];
    x = detail::layer_norm(r2, params.tensor(p + "ln2_gain").row(0),
                           params.tensor(p + "ln2_bias").row(0), cfg.ln_eps, &c.ln2);
    if (tape) tape->blocks.push_back(std::move(c));
  }

  EncoderOutput out;
  out.utterance.assign(x.row(0).begin(), x.row(0).end());
  out.tokens = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(x.row(i + 1).begin(), x.row(i + 1).end(), out.tokens.row(i).begin());
  out.tape = std::move(tape);
  return out;
}

// Reverse pass: accumulates dLoss/dParams into `grads` given the loss
// gradient w.r.t. the utterance embedding and each token embedding. Consumes
// the tape.
inline void backward_into(EncoderOutput& out, std::span<const double> d_utterance,
                          const Matrix& d_tokens, EncoderGrads& grads) {
  if (!out.tape) throw Error("encoder backward: output was produced without a tape");
  if (out.tape->consumed) throw Error("encoder backward: tape already consumed");
  auto& tape = *out.tape;
  const auto& params = *tape.params;
  const auto& cfg = params.config();
  if (!(grads.config() == cfg)) throw Error("encoder backward: gradient layout mismatch");
  const std::size_t d = cfg.dim;
  const std::size_t n = tape.ids.size();
  const std::size_t len = n + 1;
  if (d_utterance.size() != d || d_tokens.rows() != n || d_tokens.cols() != d)
    throw Error("encoder backward: upstream gradient shape mismatch");

  Matrix dx(len, d);
  std::copy(d_utterance.begin(), d_utterance.end(), dx.row(0).begin());
  for (std::size_t i = 0; i < n; ++i)
    std::copy(d_tokens.row(i).begin(), d_tokens.row(i).end(), dx.row(i + 1).begin());

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t l = cfg.layers; l-- > 0;) {
    const std::string p = "block" + std::to_string(l) + ".";
    const auto& c = tape.blocks[l];

    // Output layer norm and feed-forward residual.
    Matrix dr2 = detail::layer_norm_backward(dx, c.ln2, params.tensor(p + "ln2_gain").row(0),
                                             grads.tensor(p + "ln2_gain").row(0),
                                             grads.tensor(p + "ln2_bias").row(0));
    Matrix dh = dr2;
    auto db2 = grads.tensor(p + "b2").row(0);
    for (std::size_t i = 0; i < len; ++i) axpy(1.0, dr2.row(i), db2);
    detail::accumulate_at_b(c.act, dr2, grads.tensor(p + "w2"));
    Matrix dact(len, cfg.ff_dim);
    detail::accumulate_a_bt(dr2, params.tensor(p + "w2"), dact);
    auto db1 = grads.tensor(p + "b1").row(0);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < cfg.ff_dim; ++j) {
        dact(i, j) *= detail::gelu_grad(c.pre_act(i, j));
        db1[j] += dact(i, j);
      }
    detail::accumulate_at_b(c.h, dact, grads.tensor(p + "w1"));
    detail::accumulate_a_bt(dact, params.tensor(p + "w1"), dh);

    // Attention layer norm and residual.
    Matrix dr1 = detail::layer_norm_backward(dh, c.ln1, params.tensor(p + "ln1_gain").row(0),
                                             grads.tensor(p + "ln1_gain").row(0),
                                             grads.tensor(p + "ln1_bias").row(0));
    Matrix dinput = dr1;
    Matrix dv(len, d), dq(len, d), dk(len, d);
    for (std::size_t i = 0; i < len; ++i) {
      Vector da(len);
      double weighted = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        da[j] = dot(dr1.row(i), c.v.row(j));
        axpy(c.attn(i, j), dr1.row(i), dv.row(j));
        weighted += da[j] * c.attn(i, j);
      }
      for (std::size_t j = 0; j < len; ++j) {
        const double ds = c.attn(i, j) * (da[j] - weighted) * scale;
        if (ds == 0.0) continue;
        axpy(ds, c.k.row(j), dq.row(i));
        axpy(ds, c.q.row(i), dk.row(j));
      }
    }
    detail::accumulate_at_b(c.input, dq, grads.tensor(p + "wq"));
    detail::accumulate_at_b(c.input, dk, grads.tensor(p + "wk"));
    detail::accumulate_at_b(c.input, dv, grads.tensor(p + "wv"));
    detail::accumulate_a_bt(dq, params.tensor(p + "wq"), dinput);
    detail::accumulate_a_bt(dk, params.tensor(p + "wk"), dinput);
    detail::accumulate_a_bt(dv, params.tensor(p + "wv"), dinput);
    dx = std::move(dinput);
  }

  auto gtok = grads.tensor("tok_embed");
  auto gpos = grads.tensor("pos_embed");
  auto gsent = grads.tensor("sentinel");
  axpy(1.0, dx.row(0), gsent.row(0));
  axpy(1.0, dx.row(0), gpos.row(0));
  for (std::size_t i = 0; i < n; ++i) {
    axpy(1.0, dx.row(i + 1), gtok.row(static_cast<std::size_t>(tape.ids[i])));
    axpy(1.0, dx.row(i + 1), gpos.row(i + 1));
  }
  tape.consumed = true;
  tape.blocks.clear();
}

inline EncoderGrads backward(EncoderOutput& out, std::span<const double> d_utterance,
                             const Matrix& d_tokens) {
  if (!out.tape) throw Error("encoder backward: output was produced without a tape");
  EncoderGrads g = EncoderParams::zeros_like(*out.tape->params);
  backward_into(out, d_utterance, d_tokens, g);
  return g;
}

// Checkpoint: magic, format version, config, vocabulary, then every tensor as
// (name, rows, cols, little-endian doubles).
inline constexpr char kCheckpointMagic[8] = {'F', 'S', 'N', 'L', 'U', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint: truncated file");
  return v;
}

inline std::string get_string(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1u << 20)) throw DataError("checkpoint: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw DataError("checkpoint: truncated file");
  return s;
}

}  // namespace detail

struct Model {
  TokenVocab vocab;
  EncoderParams params;
};

inline void write_checkpoint(std::ostream& out, const Model& m) {
  const auto& cfg = m.params.config();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  for (std::uint64_t v : {cfg.vocab_size, cfg.max_len, cfg.dim, cfg.ff_dim, cfg.layers})
    detail::put<std::uint64_t>(out, v);
  detail::put<double>(out, cfg.ln_eps);
  detail::put<double>(out, cfg.init_range);
  detail::put<std::uint64_t>(out, m.vocab.size());
  for (const auto& w : m.vocab.words()) detail::put_string(out, w);
  detail::put<std::uint64_t>(out, m.params.layout().size());
  for (const auto& slot : m.params.layout()) {
    detail::put_string(out, slot.name);
    detail::put<std::uint64_t>(out, slot.rows);
    detail::put<std::uint64_t>(out, slot.cols);
    const auto t = m.params.tensor(slot.name);
    out.write(reinterpret_cast<const char*>(t.data),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

inline Model read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw DataError("checkpoint: bad magic");
  const auto version = detail::get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  EncoderConfig cfg;
  cfg.vocab_size = detail::get<std::uint64_t>(in);
  cfg.max_len = detail::get<std::uint64_t>(in);
  cfg.dim = detail::get<std::uint64_t>(in);
  cfg.ff_dim = detail::get<std::uint64_t>(in);
  cfg.layers = detail::get<std::uint64_t>(in);
  cfg.ln_eps = detail::get<double>(in);
  cfg.init_range = detail::get<double>(in);

  Model m;
  const auto n_words = detail::get<std::uint64_t>(in);
  if (n_words != cfg.vocab_size) throw DataError("checkpoint: vocabulary size mismatch");
  for (std::uint64_t i = 0; i < n_words; ++i) {
    auto w = detail::get_string(in);
    if (i == 0) {
      if (w != TokenVocab::kUnkWord) throw DataError("checkpoint: first word must be <unk>");
      continue;
    }
    if (m.vocab.add(w) != static_cast<int>(i)) throw DataError("checkpoint: duplicate word");
  }
  m.params = EncoderParams(cfg);
  const auto n_tensors = detail::get<std::uint64_t>(in);
  if (n_tensors != m.params.layout().size()) throw DataError("checkpoint: tensor count mismatch");
  for (const auto& slot : m.params.layout()) {
    const auto name = detail::get_string(in);
    const auto rows = detail::get<std::uint64_t>(in);
    const auto cols = detail::get<std::uint64_t>(in);
    if (name != slot.name || rows != slot.rows || cols != slot.cols)
      throw DataError("checkpoint: tensor '" + name + "' has unexpected name or shape");
    auto t = m.params.tensor(slot.name);
    in.read(reinterpret_cast<char*>(t.data),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw DataError("checkpoint: truncated tensor data");
  }
  if (!all_finite(m.params.values())) throw DataError("checkpoint: non-finite parameter");
  return m;
}

inline void save_checkpoint(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, m);
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace fsnlu

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

// Syntactic side information for slot filling: universal POS tags and noun
// chunks from a rule-based tagger, one-hot feature concatenation for the slot
// space, and the auxiliary POS prototype loss.

#pragma once

#include <array>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "fsnlu/core.hpp"
#include "fsnlu/protonet.hpp"

namespace fsnlu {

inline constexpr std::array<const char*, 17> kUposTags = {
    "ADJ", "ADP",  "ADV",   "AUX",   "CCONJ", "DET",  "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"};
inline constexpr std::size_t kNumPosTags = kUposTags.size();
inline constexpr std::size_t kChunkWidth = 2;  // outside, inside
inline constexpr std::size_t kSyntaxFeatureWidth = kNumPosTags + kChunkWidth;

inline int pos_index(const std::string& tag) {
  for (std::size_t i = 0; i < kUposTags.size(); ++i)
    if (tag == kUposTags[i]) return static_cast<int>(i);
  throw DataError("unknown POS tag '" + tag + "'");
}

inline const int kPosX = 16;

struct SyntacticAnnotation {
  std::vector<int> pos_tags;    // indices into kUposTags
  std::vector<bool> noun_chunk;  // inside a noun chunk
};

class Tagger {
 public:
  virtual ~Tagger() = default;
  virtual SyntacticAnnotation annotate(std::span<const std::string> tokens) const = 0;
};

// Lexicon lookup, then ordered suffix rules, then X. Numerals get NUM.
// Noun chunks are maximal matches of DET? (ADJ|NUM)* (NOUN|PROPN)+ over the
// tag sequence.
class RuleTagger : public Tagger {
 public:
  RuleTagger() = default;
  RuleTagger(std::map<std::string, int> lexicon, std::vector<std::pair<std::string, int>> suffixes)
      : lexicon_(std::move(lexicon)), suffixes_(std::move(suffixes)) {}

  int tag(const std::string& word) const {
    if (auto it = lexicon_.find(word); it != lexicon_.end()) return it->second;
    if (!word.empty() && std::all_of(word.begin(), word.end(), [](char c) {
          return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == ':';
        }) && std::isdigit(static_cast<unsigned char>(word[0])))
      return pos_index("NUM");
    for (const auto& [suffix, t] : suffixes_)
      if (word.size() > suffix.size() && word.ends_with(suffix)) return t;
    return kPosX;
  }

  SyntacticAnnotation annotate(std::span<const std::string> tokens) const override {
    SyntacticAnnotation a;
    std::string code;
    for (const auto& t : tokens) {
      a.pos_tags.push_back(tag(t));
      code.push_back(chunk_code(a.pos_tags.back()));
    }
    a.noun_chunk.assign(tokens.size(), false);
    static const std::regex chunk("D?[A#]*[NP]+");
    for (auto it = std::sregex_iterator(code.begin(), code.end(), chunk);
         it != std::sregex_iterator(); ++it)
      for (auto i = it->position(); i < it->position() + it->length(); ++i)
        a.noun_chunk[static_cast<std::size_t>(i)] = true;
    return a;
  }

  // `word<TAB>TAG` per line.
  static std::map<std::string, int> parse_lexicon(std::istream& in) {
    std::map<std::string, int> lex;
    for (auto& [word, tag] : parse_pairs(in, "tagger lexicon")) lex[word] = tag;
    return lex;
  }

  // `suffix<TAB>TAG` per line, first match wins.
  static std::vector<std::pair<std::string, int>> parse_rules(std::istream& in) {
    return parse_pairs(in, "tagger rules");
  }

  static RuleTagger load(const std::string& lexicon_path, const std::string& rules_path) {
    std::ifstream lex(lexicon_path), rules(rules_path);
    if (!lex) throw DataError("cannot open tagger lexicon '" + lexicon_path + "'");
    if (!rules) throw DataError("cannot open tagger rules '" + rules_path + "'");
    return RuleTagger(parse_lexicon(lex), parse_rules(rules));
  }

 private:
  static std::vector<std::pair<std::string, int>> parse_pairs(std::istream& in, const char* what) {
    std::vector<std::pair<std::string, int>> out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw DataError(std::string(what) + " line " + std::to_string(no) +
                        ": expected key<TAB>TAG");
      std::string tag = line.substr(tab + 1);
      while (!tag.empty() && (tag.back() == '\r' || tag.back() == ' ')) tag.pop_back();
      out.emplace_back(line.substr(0, tab), pos_index(tag));
    }
    return out;
  }

  static char chunk_code(int tag) {
    const std::string t = kUposTags[static_cast<std::size_t>(tag)];
    if (t == "DET") return 'D';
    if (t == "ADJ") return 'A';
    if (t == "NUM") return '#';
    if (t == "NOUN") return 'N';
    if (t == "PROPN") return 'P';
    return '.';
  }

  std::map<std::string, int> lexicon_;
  std::vector<std::pair<std::string, int>> suffixes_;
};

inline const RuleTagger& builtin_tagger() {
  static const RuleTagger tagger = [] {
    std::istringstream lex(
#include "fsnlu/detail/tagger_lexicon.inc"
    );
    std::istringstream rules(
        "ing\tVERB\n"
        "ed\tVERB\n"
        "ly\tADV\n"
        "tion\tNOUN\n"
        "sion\tNOUN\n"
        "ment\tNOUN\n"
        "ness\tNOUN\n"
        "ity\tNOUN\n"
        "ous\tADJ\n"
        "ful\tADJ\n"
        "able\tADJ\n"
        "ive\tADJ\n"
        "ist\tNOUN\n"
        "er\tNOUN\n"
        "or\tNOUN\n"
        "ia\tPROPN\n"
        "ton\tPROPN\n"
        "s\tNOUN\n");
    return RuleTagger(RuleTagger::parse_lexicon(lex), RuleTagger::parse_rules(rules));
  }();
  return tagger;
}

inline SyntacticAnnotation annotate(const Utterance& u, const Tagger& tagger = builtin_tagger()) {
  return tagger.annotate(u.tokens);
}

struct SyntaxConfig {
  bool feature_concat = false;  // POS one-hot appended to slot-space tokens
  bool noun_chunks = false;     // chunk one-hot appended to slot-space tokens
  bool multitask = false;       // auxiliary POS prototype loss
  double beta = 0.01;

  bool any() const { return feature_concat || noun_chunks || multitask; }
  bool concat() const { return feature_concat || noun_chunks; }
  void validate() const {
    if (!(beta >= 0.0)) throw ConfigError("syntax.beta: must be >= 0");
  }
};

// token (+) pos one-hot (+) chunk one-hot, width d + 17 + 2. A disabled block
// stays all-zero so widths agree across configurations.
inline Vector concat_features(std::span<const double> token, const SyntacticAnnotation& ann,
                              std::size_t position, bool include_pos = true,
                              bool include_chunk = true) {
  if (position >= ann.pos_tags.size()) throw DataError("concat_features: position out of range");
  Vector out(token.begin(), token.end());
  out.resize(token.size() + kSyntaxFeatureWidth, 0.0);
  if (include_pos) out[token.size() + static_cast<std::size_t>(ann.pos_tags[position])] = 1.0;
  if (include_chunk) out[token.size() + kNumPosTags + (ann.noun_chunk[position] ? 1 : 0)] = 1.0;
  return out;
}

inline Matrix concat_features(const Matrix& tokens, const SyntacticAnnotation& ann,
                              const SyntaxConfig& cfg) {
  Matrix out(tokens.rows(), tokens.cols() + kSyntaxFeatureWidth);
  for (std::size_t t = 0; t < tokens.rows(); ++t) {
    const auto row = concat_features(tokens.row(t), ann, t, cfg.feature_concat, cfg.noun_chunks);
    std::copy(row.begin(), row.end(), out.row(t).begin());
  }
  return out;
}

// POS prototypes over raw token embeddings of the support set.
inline PrototypeTable pos_prototypes(std::span<const Matrix* const> tokens,
                                     std::span<const SyntacticAnnotation* const> anns) {
  PrototypeBuilder b;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    for (std::size_t t = 0; t < tokens[i]->rows(); ++t) b.add(anns[i]->pos_tags[t], tokens[i]->row(t));
  return std::move(b).finish();
}

inline NllResult pos_loss(const PrototypeTable& pos_protos, std::span<const double> token,
                          int tag, Distance metric = Distance::SquaredEuclidean) {
  return prototype_nll(pos_protos, token, tag, metric);
}

// (1/|Q|) sum_z [L_IC(z) + L_Slots(z) + beta * L_pos(z)]
inline double composite_loss_with_pos(std::span<const double> ic, std::span<const double> slots,
                                      std::span<const double> pos, double beta) {
  if (ic.size() != slots.size() || ic.size() != pos.size())
    throw DataError("composite loss: per-query loss lists differ in length");
  if (ic.empty()) throw DataError("composite loss: empty query set");
  double sum = 0.0;
  for (std::size_t i = 0; i < ic.size(); ++i) sum += ic[i] + slots[i] + beta * pos[i];
  return sum / static_cast<double>(ic.size());
}

}  // namespace fsnlu

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

// Data augmentation for labelled utterances. Every augmenter produces exactly
// one synthetic utterance per input so augmented sets are exactly twice the
// original size. Synthetic utterances carry the "synthetic" flag; those that
// could not be perturbed are verbatim copies flagged "verbatim".
//
//  * slot-list values: swap one slot span for another dictionary value of the
//    same slot type
//  * EDA: synonym replacement, random insertion, swap or deletion; insert,
//    swap and delete touch only O tokens so BIO labels stay valid
//  * backtranslation: round trip through a TranslationClient; the result is
//    intent-only (no slot labels)

#pragma once

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fsnlu/core.hpp"
#include "fsnlu/corpus.hpp"
#include "fsnlu/episode.hpp"
#include "json.hpp"

namespace fsnlu {

enum class AugmentMethod { SlotList, Backtranslation, EDA };

enum class AugmentLevel {
  SupportMetaTrain,
  SupportQueryMetaTrain,
  SupportMetaTrainAndTest,
  SupportMetaTest,
};

enum class EdaOp { SynonymReplace, RandomInsert, RandomSwap, RandomDelete };

enum class Phase { MetaTrain, MetaTest };

struct AugmentationConfig {
  AugmentMethod method = AugmentMethod::SlotList;
  AugmentLevel level = AugmentLevel::SupportMetaTrain;
  double eda_alpha = 0.1;
  std::vector<EdaOp> eda_ops = {EdaOp::SynonymReplace, EdaOp::RandomInsert, EdaOp::RandomSwap,
                                EdaOp::RandomDelete};
  double bt_temperature = 0.8;
  std::string bt_pivot = "es";

  void validate() const {
    if (!(eda_alpha >= 0.0 && eda_alpha < 1.0))
      throw ConfigError("augmentation.eda_alpha: must be in [0, 1)");
    if (eda_ops.empty()) throw ConfigError("augmentation.eda_ops: must not be empty");
    if (!(bt_temperature > 0.0)) throw ConfigError("augmentation.bt_temperature: must be > 0");
  }
};

inline bool augments_support(AugmentLevel level, Phase phase) {
  switch (level) {
    case AugmentLevel::SupportMetaTrain:
    case AugmentLevel::SupportQueryMetaTrain:
      return phase == Phase::MetaTrain;
    case AugmentLevel::SupportMetaTrainAndTest:
      return true;
    case AugmentLevel::SupportMetaTest:
      return phase == Phase::MetaTest;
  }
  return false;
}

inline bool augments_query(AugmentLevel level, Phase phase) {
  return level == AugmentLevel::SupportQueryMetaTrain && phase == Phase::MetaTrain;
}

inline constexpr const char* kFlagSynthetic = "synthetic";
inline constexpr const char* kFlagVerbatim = "verbatim";
inline constexpr const char* kFlagTranslationFailed = "bt-failed";

// word -> single-token synonyms.
class SynonymLexicon {
 public:
  void add(const std::string& word, const std::string& synonym) {
    if (synonym.empty() || synonym == word || synonym.find(' ') != std::string::npos) return;
    auto& list = entries_[word];
    if (std::find(list.begin(), list.end(), synonym) == list.end()) list.push_back(synonym);
  }

  const std::vector<std::string>& synonyms(const std::string& word) const {
    static const std::vector<std::string> none;
    auto it = entries_.find(word);
    return it == entries_.end() ? none : it->second;
  }

  bool has(const std::string& word) const { return !synonyms(word).empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }

  // Every word and synonym mentioned by the lexicon.
  std::vector<std::string> words() const {
    std::vector<std::string> out;
    for (const auto& [w, syns] : entries_) {
      out.push_back(w);
      out.insert(out.end(), syns.begin(), syns.end());
    }
    return out;
  }

  // Format: one entry per line, `word<TAB>syn1,syn2,...`; '#' starts a
  // comment line. Multi-word synonyms are ignored.
  static SynonymLexicon parse(std::istream& in) {
    SynonymLexicon lex;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw DataError("lexicon line " + std::to_string(no) + ": expected word<TAB>synonyms");
      const std::string word = line.substr(0, tab);
      std::stringstream rest(line.substr(tab + 1));
      std::string syn;
      while (std::getline(rest, syn, ',')) {
        while (!syn.empty() && (syn.back() == '\r' || syn.back() == ' ')) syn.pop_back();
        while (!syn.empty() && syn.front() == ' ') syn.erase(syn.begin());
        lex.add(word, syn);
      }
    }
    return lex;
  }

  static SynonymLexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon '" + path + "'");
    return parse(in);
  }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

// Small built-in lexicon covering common request vocabulary.
inline const SynonymLexicon& builtin_lexicon() {
  static const SynonymLexicon lex = [] {
    std::istringstream in(
        "book\treserve,schedule\n"
        "reserve\tbook\n"
        "find\tsearch,locate,get\n"
        "show\tdisplay,list\n"
        "play\tput,start\n"
        "want\tneed,wish\n"
        "need\twant,require\n"
        "please\tkindly\n"
        "table\tspot\n"
        "restaurant\teatery,diner\n"
        "movie\tfilm\n"
        "film\tmovie\n"
        "song\ttrack,tune\n"
        "music\ttunes,songs\n"
        "weather\tforecast\n"
        "forecast\tweather\n"
        "cold\tchilly\n"
        "hot\twarm\n"
        "add\tput,insert\n"
        "playlist\tlist,collection\n"
        "rate\tscore,grade\n"
        "flight\tplane,trip\n"
        "flights\tplanes,trips\n"
        "cheap\tinexpensive,affordable\n"
        "fare\tprice,cost\n"
        "fares\tprices,costs\n"
        "airline\tcarrier\n"
        "airport\tairfield\n"
        "ground\tland\n"
        "transportation\ttransit,transport\n"
        "meal\tfood\n"
        "city\ttown\n"
        "tell\tshow,give\n"
        "give\tshow,tell\n"
        "what\twhich\n"
        "near\tclose\n"
        "today\tnow\n"
        "tonight\tthis-evening\n"
        "schedule\ttimetable,times\n"
        "times\tschedule\n"
        "list\tshow\n"
        "bar\tpub,lounge\n"
        "hotel\tinn,lodge\n"
        "room\tsuite\n"
        "current\tpresent\n"
        "new\tfresh\n"
        "top\tbest\n"
        "best\ttop\n"
        "search\tfind,look\n"
        "look\tsearch\n"
        "alarm\treminder\n"
        "set\tcreate,make\n"
        "turn\tswitch\n"
        "lights\tlamps\n"
        "order\trequest,get\n"
        "pizza\tpie\n"
        "ride\tcar,cab\n"
        "taxi\tcab\n"
        "stars\tpoints\n"
        "want\tneed\n");
    return SynonymLexicon::parse(in);
  }();
  return lex;
}

// --- translation clients ----------------------------------------------------

struct TranslationRequest {
  std::vector<std::string> tokens;
  std::string source;
  std::string target;
  double temperature = 1.0;
  std::uint64_t seed = 0;  // drives sampled decoding; fixed seed => fixed output
};

inline nlohmann::json to_json(const TranslationRequest& r) {
  return {{"tokens", r.tokens},
          {"source", r.source},
          {"target", r.target},
          {"temperature", r.temperature},
          {"seed", r.seed}};
}

inline TranslationRequest translation_request_from_json(const nlohmann::json& j) {
  TranslationRequest r;
  r.tokens = j.at("tokens").get<std::vector<std::string>>();
  r.source = j.at("source").get<std::string>();
  r.target = j.at("target").get<std::string>();
  r.temperature = j.value("temperature", 1.0);
  r.seed = j.value("seed", std::uint64_t{0});
  return r;
}

// Translation backend with sampled decoding. Implementations must tolerate
// concurrent calls (or serialize internally). Failures are reported by
// throwing; an empty result is a contract violation handled by the caller.
class TranslationClient {
 public:
  virtual ~TranslationClient() = default;
  virtual std::vector<std::string> translate(const TranslationRequest& request) = 0;
};

class IdentityTranslationClient : public TranslationClient {
 public:
  std::vector<std::string> translate(const TranslationRequest& request) override {
    return request.tokens;
  }
};

// Deterministic stand-in for an NMT model. The outbound leg paraphrases with
// seeded synonym substitution, function-word dropping and an adjacent swap,
// with perturbation strength growing with temperature; the return leg is the
// identity.
class ParaphraseMockClient : public TranslationClient {
 public:
  explicit ParaphraseMockClient(const SynonymLexicon& lexicon = builtin_lexicon(),
                                std::string home = "en")
      : lexicon_(&lexicon), home_(std::move(home)) {}

  std::vector<std::string> translate(const TranslationRequest& req) override {
    if (req.target == home_) return req.tokens;
    Rng rng = make_stream(req.seed, std::hash<std::string>{}(join(req.tokens)));
    const double p = std::min(0.9, 0.5 * req.temperature);
    std::vector<std::string> out;
    for (const auto& t : req.tokens) {
      if (is_function_word(t) && req.tokens.size() > 2 && bernoulli(rng, p / 3.0)) continue;
      const auto& syns = lexicon_->synonyms(t);
      if (!syns.empty() && bernoulli(rng, p))
        out.push_back(syns[uniform_index(rng, syns.size())]);
      else
        out.push_back(t);
    }
    if (out.empty()) out = req.tokens;
    if (out.size() >= 2 && bernoulli(rng, p / 2.0)) {
      const auto i = uniform_index(rng, out.size() - 1);
      std::swap(out[i], out[i + 1]);
    }
    return out;
  }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& t : v) s += t + ' ';
    return s;
  }
  static bool is_function_word(const std::string& t) {
    static const char* words[] = {"the", "a", "an", "to", "of", "please", "me", "for", "i"};
    return std::any_of(std::begin(words), std::end(words), [&](const char* w) { return t == w; });
  }

  const SynonymLexicon* lexicon_;
  std::string home_;
};

// Serves the line-delimited translation protocol: each input line is a JSON
// request {tokens, source, target, temperature, seed}; each output line is
// {"tokens": [...]} or {"error": "..."}.
inline void serve_translation(std::istream& in, std::ostream& out, TranslationClient& backend) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json resp;
    try {
      resp["tokens"] = backend.translate(translation_request_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      resp = {{"error", e.what()}};
    }
    out << resp.dump() << '\n' << std::flush;
  }
}

// Client speaking the line protocol to a subprocess over stdin/stdout pipes.
// Calls are serialized.
class PipeTranslationClient : public TranslationClient {
 public:
  explicit PipeTranslationClient(const std::string& command) {
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
      throw Error("translation client: pipe() failed");
    pid_ = fork();
    if (pid_ < 0) throw Error("translation client: fork() failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    write_fd_ = to_child[1];
    read_ = fdopen(from_child[0], "r");
    if (!read_) throw Error("translation client: fdopen() failed");
    signal(SIGPIPE, SIG_IGN);
  }

  PipeTranslationClient(const PipeTranslationClient&) = delete;
  PipeTranslationClient& operator=(const PipeTranslationClient&) = delete;

  ~PipeTranslationClient() override {
    if (write_fd_ >= 0) close(write_fd_);
    if (read_) fclose(read_);
    if (pid_ > 0) {
      int status = 0;
      waitpid(pid_, &status, 0);
    }
  }

  std::vector<std::string> translate(const TranslationRequest& request) override {
    std::lock_guard<std::mutex> lock(mu_);
    const std::string line = to_json(request).dump() + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
      const auto n = write(write_fd_, line.data() + off, line.size() - off);
      if (n <= 0) throw Error("translation client: write to translator failed");
      off += static_cast<std::size_t>(n);
    }
    std::string reply;
    int ch;
    while ((ch = fgetc(read_)) != EOF && ch != '\n') reply.push_back(static_cast<char>(ch));
    if (reply.empty()) throw Error("translation client: translator closed the connection");
    const auto j = nlohmann::json::parse(reply);
    if (j.contains("error")) throw Error("translator: " + j["error"].get<std::string>());
    return j.at("tokens").get<std::vector<std::string>>();
  }

 private:
  std::mutex mu_;
  pid_t pid_ = -1;
  int write_fd_ = -1;
  FILE* read_ = nullptr;
};

// --- augmenters -------------------------------------------------------------

struct AugmentResult {
  std::vector<Utterance> synthetic;  // one per input, same order
  std::size_t flagged = 0;           // verbatim copies / failed translations
};

namespace detail {

inline Utterance synthetic_copy(const Utterance& u) {
  Utterance s = u;
  s.id = u.id + "+aug";
  s.flags = {kFlagSynthetic};
  return s;
}

inline Utterance verbatim_copy(const Utterance& u, const char* reason = kFlagVerbatim) {
  Utterance s = synthetic_copy(u);
  s.flags.push_back(reason);
  return s;
}

inline std::vector<std::string> labels_of(const Utterance& u, const LabelVocab& vocab) {
  std::vector<std::string> out;
  if (u.slots)
    for (int s : *u.slots) out.push_back(vocab.label(s));
  else
    out.assign(u.tokens.size(), std::string(kOutsideTag));
  return out;
}

inline std::optional<std::vector<int>> ids_of(const Utterance& src,
                                              const std::vector<std::string>& labels,
                                              const LabelVocab& vocab) {
  if (!src.slots) return std::nullopt;
  std::vector<int> ids;
  for (const auto& l : labels) ids.push_back(vocab.id(l));
  return ids;
}

}  // namespace detail

// Replaces one uniformly chosen replaceable span with a different value of
// its slot type. A span is replaceable when its type has >= 2 dictionary
// values (so a different one exists).
inline AugmentResult augment_slot_list(std::span<const Utterance> utts, const SlotValueDict& dict,
                                       const LabelVocab& slot_vocab, Rng& rng) {
  AugmentResult r;
  for (const auto& u : utts) {
    if (!u.slots) {
      r.synthetic.push_back(detail::verbatim_copy(u));
      ++r.flagged;
      continue;
    }
    const auto labels = detail::labels_of(u, slot_vocab);
    std::vector<Span> candidates;
    for (const auto& span : extract_spans(labels)) {
      auto it = dict.entries.find(span.type);
      if (it != dict.entries.end() && it->second.size() >= 2) candidates.push_back(span);
    }
    if (candidates.empty()) {
      r.synthetic.push_back(detail::verbatim_copy(u));
      ++r.flagged;
      continue;
    }
    const Span span = candidates[uniform_index(rng, candidates.size())];
    const std::vector<std::string> current(u.tokens.begin() + static_cast<std::ptrdiff_t>(span.start),
                                           u.tokens.begin() + static_cast<std::ptrdiff_t>(span.end) + 1);
    std::vector<const std::vector<std::string>*> choices;
    for (const auto& v : dict.entries.at(span.type))
      if (v != current) choices.push_back(&v);
    const auto& value = *choices[uniform_index(rng, choices.size())];

    Utterance s = detail::synthetic_copy(u);
    s.tokens.clear();
    std::vector<std::string> out_labels;
    for (std::size_t i = 0; i < span.start; ++i) {
      s.tokens.push_back(u.tokens[i]);
      out_labels.push_back(labels[i]);
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      s.tokens.push_back(value[i]);
      out_labels.push_back(i == 0 ? begin_tag(span.type) : inside_tag(span.type));
    }
    for (std::size_t i = span.end + 1; i < u.tokens.size(); ++i) {
      s.tokens.push_back(u.tokens[i]);
      out_labels.push_back(labels[i]);
    }
    s.slots = detail::ids_of(u, out_labels, slot_vocab);
    r.synthetic.push_back(std::move(s));
  }
  return r;
}

// Applies one EDA operation drawn from cfg.eda_ops to each utterance.
// Replacement count is max(1, ceil(alpha * n)); deletion removes each O token
// with probability alpha, at least one, never emptying the utterance.
inline AugmentResult augment_eda(std::span<const Utterance> utts, const AugmentationConfig& cfg,
                                 const SynonymLexicon& lexicon, const LabelVocab& slot_vocab,
                                 Rng& rng) {
  cfg.validate();
  AugmentResult r;
  const std::string outside(kOutsideTag);
  for (const auto& u : utts) {
    const EdaOp op = cfg.eda_ops[uniform_index(rng, cfg.eda_ops.size())];
    const std::size_t n = u.tokens.size();
    const auto changes = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(cfg.eda_alpha * static_cast<double>(n) - 1e-12)));
    std::vector<std::string> tokens = u.tokens;
    std::vector<std::string> labels = detail::labels_of(u, slot_vocab);
    bool changed = false;

    auto outside_positions = [&] {
      std::vector<std::size_t> pos;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == outside) pos.push_back(i);
      return pos;
    };

    switch (op) {
      case EdaOp::SynonymReplace: {
        std::vector<std::size_t> cand;
        for (std::size_t i = 0; i < n; ++i)
          if (lexicon.has(tokens[i])) cand.push_back(i);
        std::shuffle(cand.begin(), cand.end(), rng);
        for (std::size_t k = 0; k < std::min(changes, cand.size()); ++k) {
          const auto& syns = lexicon.synonyms(tokens[cand[k]]);
          tokens[cand[k]] = syns[uniform_index(rng, syns.size())];
          changed = true;
        }
        break;
      }
      case EdaOp::RandomInsert: {
        for (std::size_t k = 0; k < changes; ++k) {
          std::vector<std::size_t> sources;
          for (std::size_t i = 0; i < tokens.size(); ++i)
            if (lexicon.has(tokens[i])) sources.push_back(i);
          if (sources.empty()) break;
          const auto& syns = lexicon.synonyms(tokens[sources[uniform_index(rng, sources.size())]]);
          const std::string word = syns[uniform_index(rng, syns.size())];
          // Inserting in front of an I- tag would split a span.
          std::vector<std::size_t> slots_ok;
          for (std::size_t p = 0; p <= tokens.size(); ++p)
            if (p == tokens.size() || parse_bio(labels[p]).prefix != 'I') slots_ok.push_back(p);
          const auto at = slots_ok[uniform_index(rng, slots_ok.size())];
          tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(at), word);
          labels.insert(labels.begin() + static_cast<std::ptrdiff_t>(at), outside);
          changed = true;
        }
        break;
      }
      case EdaOp::RandomSwap: {
        const auto pos = outside_positions();
        if (pos.size() < 2) break;
        for (std::size_t k = 0; k < changes; ++k) {
          const auto a = uniform_index(rng, pos.size());
          auto b = uniform_index(rng, pos.size() - 1);
          if (b >= a) ++b;
          std::swap(tokens[pos[a]], tokens[pos[b]]);
          changed = changed || tokens[pos[a]] != tokens[pos[b]];
        }
        break;
      }
      case EdaOp::RandomDelete: {
        if (n <= 1) break;
        const auto pos = outside_positions();
        if (pos.empty()) break;
        std::vector<bool> drop(n, false);
        std::size_t dropped = 0;
        for (auto p : pos)
          if (bernoulli(rng, cfg.eda_alpha)) {
            drop[p] = true;
            ++dropped;
          }
        if (dropped == 0) {
          drop[pos[uniform_index(rng, pos.size())]] = true;
          dropped = 1;
        }
        if (dropped == n) {
          drop[pos[uniform_index(rng, pos.size())]] = false;
          --dropped;
        }
        std::vector<std::string> t2, l2;
        for (std::size_t i = 0; i < n; ++i)
          if (!drop[i]) {
            t2.push_back(tokens[i]);
            l2.push_back(labels[i]);
          }
        tokens = std::move(t2);
        labels = std::move(l2);
        changed = dropped > 0;
        break;
      }
    }

    if (!changed) {
      r.synthetic.push_back(detail::verbatim_copy(u));
      ++r.flagged;
      continue;
    }
    Utterance s = detail::synthetic_copy(u);
    s.tokens = std::move(tokens);
    s.slots = detail::ids_of(u, labels, slot_vocab);
    r.synthetic.push_back(std::move(s));
  }
  return r;
}

// Round trip home -> pivot -> home. Synthetic utterances keep the intent and
// drop slot labels. Client failures or empty results yield a flagged verbatim
// copy.
inline AugmentResult augment_backtranslation(std::span<const Utterance> utts,
                                             TranslationClient& client,
                                             const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  AugmentResult r;
  for (const auto& u : utts) {
    const std::uint64_t seed = rng();
    std::vector<std::string> back;
    try {
      auto pivot = client.translate({u.tokens, "en", cfg.bt_pivot, cfg.bt_temperature, seed});
      if (!pivot.empty())
        back = client.translate({pivot, cfg.bt_pivot, "en", cfg.bt_temperature, seed + 1});
    } catch (const std::exception&) {
      back.clear();
    }
    if (back.empty()) {
      r.synthetic.push_back(detail::verbatim_copy(u, kFlagTranslationFailed));
      ++r.flagged;
      continue;
    }
    Utterance s = detail::synthetic_copy(u);
    s.tokens = std::move(back);
    s.slots.reset();
    r.synthetic.push_back(std::move(s));
  }
  return r;
}

// What the augmenters may need; unused members can be null.
struct AugmentDeps {
  const SlotValueDict* dict = nullptr;
  const SynonymLexicon* lexicon = nullptr;
  TranslationClient* client = nullptr;
  const LabelVocab* slot_vocab = nullptr;
};

inline AugmentResult run_augmenter(std::span<const Utterance> input, const AugmentationConfig& cfg,
                                   const AugmentDeps& deps, Rng& rng) {
  if (!deps.slot_vocab) throw ConfigError("augmentation: slot vocabulary missing");
  switch (cfg.method) {
    case AugmentMethod::SlotList:
      if (!deps.dict) throw ConfigError("augmentation: slot-list method needs a slot-value dict");
      return augment_slot_list(input, *deps.dict, *deps.slot_vocab, rng);
    case AugmentMethod::EDA:
      return augment_eda(input, cfg, deps.lexicon ? *deps.lexicon : builtin_lexicon(),
                         *deps.slot_vocab, rng);
    case AugmentMethod::Backtranslation:
      if (!deps.client) throw ConfigError("augmentation: backtranslation needs a client");
      return augment_backtranslation(input, *deps.client, cfg, rng);
  }
  throw ConfigError("augmentation: unknown method");
}

// Originals followed by one synthetic per original.
inline std::vector<Utterance> apply_augmentation(std::span<const Utterance> input,
                                                 const AugmentationConfig& cfg,
                                                 const AugmentDeps& deps, Rng& rng,
                                                 std::size_t* flagged = nullptr) {
  auto res = run_augmenter(input, cfg, deps, rng);
  std::vector<Utterance> out(input.begin(), input.end());
  out.insert(out.end(), std::make_move_iterator(res.synthetic.begin()),
             std::make_move_iterator(res.synthetic.end()));
  if (flagged) *flagged += res.flagged;
  return out;
}

// Doubles the support and/or query set of an episode as the level dictates
// for the given phase; other sets are returned unchanged.
inline Episode augment_episode(const Episode& ep, Phase phase, const AugmentationConfig& cfg,
                               const AugmentDeps& deps, Rng& rng,
                               std::size_t* flagged = nullptr) {
  Episode out = ep;
  if (augments_support(cfg.level, phase))
    out.support = apply_augmentation(ep.support, cfg, deps, rng, flagged);
  if (augments_query(cfg.level, phase))
    out.query = apply_augmentation(ep.query, cfg, deps, rng, flagged);
  return out;
}

}  // namespace fsnlu

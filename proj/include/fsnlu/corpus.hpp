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

// Labelled utterance corpora: loading, BIO validation, few-shot class splits
// and slot-value dictionaries.
//
// On-disk format is JSON Lines, one utterance per line:
//   {"id": "u17", "tokens": ["book", "a", "table"], "intent": "BookRestaurant",
//    "slots": ["O", "O", "O"]}
// `slots` may be omitted (intent-only utterance) and `id` defaults to the
// zero-based line index. Augmented records may carry a `flags` array.

#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fsnlu/core.hpp"
#include "json.hpp"

namespace fsnlu {

// Bidirectional label <-> id map. Ids are dense and assigned in insertion order.
class LabelVocab {
 public:
  int add(const std::string& label) {
    auto it = ids_.find(label);
    if (it != ids_.end()) return it->second;
    const int id = static_cast<int>(labels_.size());
    labels_.push_back(label);
    ids_.emplace(label, id);
    return id;
  }

  std::optional<int> find(const std::string& label) const {
    auto it = ids_.find(label);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  int id(const std::string& label) const {
    auto it = ids_.find(label);
    if (it == ids_.end()) throw DataError("unknown label '" + label + "'");
    return it->second;
  }

  const std::string& label(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= labels_.size())
      throw DataError("label id out of range: " + std::to_string(id));
    return labels_[static_cast<std::size_t>(id)];
  }

  bool contains(int id) const { return id >= 0 && static_cast<std::size_t>(id) < labels_.size(); }
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> ids_;
};

inline constexpr std::string_view kOutsideTag = "O";

struct BioTag {
  char prefix = 'O';  // 'B', 'I' or 'O'
  std::string type;   // empty for O
};

inline BioTag parse_bio(const std::string& label) {
  if (label == kOutsideTag) return {};
  if (label.size() > 2 && (label[0] == 'B' || label[0] == 'I') && label[1] == '-')
    return {label[0], label.substr(2)};
  throw DataError("not a BIO tag: '" + label + "'");
}

inline std::string begin_tag(const std::string& type) { return "B-" + type; }
inline std::string inside_tag(const std::string& type) { return "I-" + type; }

// Index of the first BIO violation (I-X not preceded by B-X or I-X), or -1.
inline int first_bio_violation(const std::vector<std::string>& labels) {
  std::string open;  // type of the span currently open, empty if none
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const BioTag tag = parse_bio(labels[i]);
    if (tag.prefix == 'I' && tag.type != open) return static_cast<int>(i);
    open = tag.prefix == 'O' ? std::string{} : tag.type;
  }
  return -1;
}

inline bool is_valid_bio(const std::vector<std::string>& labels) {
  return first_bio_violation(labels) < 0;
}

// A typed span [start, end] (inclusive) in a BIO sequence.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string type;
  friend auto operator<=>(const Span&, const Span&) = default;
};

// Spans of a valid BIO sequence.
inline std::vector<Span> extract_spans(const std::vector<std::string>& labels) {
  std::vector<Span> spans;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const BioTag tag = parse_bio(labels[i]);
    if (tag.prefix == 'B') {
      spans.push_back({i, i, tag.type});
    } else if (tag.prefix == 'I') {
      if (spans.empty() || spans.back().end + 1 != i || spans.back().type != tag.type)
        throw DataError("invalid BIO sequence at position " + std::to_string(i));
      spans.back().end = i;
    }
  }
  return spans;
}

struct Utterance {
  std::string id;
  std::vector<std::string> tokens;
  int intent = -1;
  // Slot label ids, aligned with tokens. Absent for intent-only utterances.
  std::optional<std::vector<int>> slots;
  // Provenance markers set by augmentation ("synthetic", "verbatim", ...).
  std::vector<std::string> flags;

  bool has_slots() const { return slots.has_value(); }
  std::size_t size() const { return tokens.size(); }
};

struct Dataset {
  std::vector<Utterance> utterances;
  LabelVocab intent_vocab;
  LabelVocab slot_vocab;  // id 0 is always "O"

  Dataset() { slot_vocab.add(std::string(kOutsideTag)); }

  std::vector<std::string> slot_labels(const Utterance& u) const {
    std::vector<std::string> out;
    if (!u.slots) return out;
    out.reserve(u.slots->size());
    for (int s : *u.slots) out.push_back(slot_vocab.label(s));
    return out;
  }

  // Registers a slot type, making sure both its B- and I- tags exist so that
  // augmenters can re-emit spans of any length.
  void add_slot_type(const std::string& type) {
    slot_vocab.add(begin_tag(type));
    slot_vocab.add(inside_tag(type));
  }

  std::map<int, std::size_t> intent_counts() const {
    std::map<int, std::size_t> counts;
    for (const auto& u : utterances) ++counts[u.intent];
    return counts;
  }

  std::vector<std::string> slot_types() const {
    std::vector<std::string> types;
    for (const auto& label : slot_vocab.labels()) {
      const BioTag t = parse_bio(label);
      if (t.prefix == 'B') types.push_back(t.type);
    }
    return types;
  }
};

// Checks every Dataset invariant; throws DataError describing the first failure.
inline void validate(const Dataset& ds) {
  std::set<std::string> ids;
  for (const auto& u : ds.utterances) {
    if (!ids.insert(u.id).second) throw DataError("duplicate utterance id '" + u.id + "'");
    if (u.tokens.empty()) throw DataError("utterance '" + u.id + "' has no tokens");
    if (!ds.intent_vocab.contains(u.intent))
      throw DataError("utterance '" + u.id + "' has unknown intent id");
    if (u.slots) {
      if (u.slots->size() != u.tokens.size())
        throw DataError("utterance '" + u.id + "': " + std::to_string(u.tokens.size()) +
                        " tokens but " + std::to_string(u.slots->size()) + " slots");
      for (int s : *u.slots)
        if (!ds.slot_vocab.contains(s))
          throw DataError("utterance '" + u.id + "' has unknown slot id");
      const int bad = first_bio_violation(ds.slot_labels(u));
      if (bad >= 0)
        throw DataError("BIO violation in utterance '" + u.id + "' at position " +
                        std::to_string(bad));
    }
  }
}

namespace detail {

inline std::vector<std::string> string_array(const nlohmann::json& j, const char* field,
                                             std::size_t line) {
  if (!j.is_array())
    throw DataError("line " + std::to_string(line) + ": field '" + field + "' must be an array");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_string())
      throw DataError("line " + std::to_string(line) + ": field '" + field +
                      "' must contain strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace detail

// Adds one record (already parsed from JSON) to `ds`. `line` is 1-based and
// only used for messages; `index` is the default id.
inline void add_record(Dataset& ds, const nlohmann::json& rec, std::size_t line,
                       std::size_t index) {
  const std::string where = "line " + std::to_string(line);
  if (!rec.is_object()) throw DataError(where + ": record is not an object");
  if (!rec.contains("tokens")) throw DataError(where + ": missing field 'tokens'");
  if (!rec.contains("intent") || !rec["intent"].is_string())
    throw DataError(where + ": missing or non-string field 'intent'");

  Utterance u;
  u.tokens = detail::string_array(rec["tokens"], "tokens", line);
  if (u.tokens.empty()) throw DataError(where + ": empty token list");
  u.intent = ds.intent_vocab.add(rec["intent"].get<std::string>());
  if (rec.contains("id")) {
    if (!rec["id"].is_string()) throw DataError(where + ": field 'id' must be a string");
    u.id = rec["id"].get<std::string>();
  } else {
    u.id = std::to_string(index);
  }
  if (rec.contains("flags")) u.flags = detail::string_array(rec["flags"], "flags", line);

  if (rec.contains("slots")) {
    auto labels = detail::string_array(rec["slots"], "slots", line);
    if (labels.size() != u.tokens.size())
      throw DataError(where + ": utterance '" + u.id + "' has " + std::to_string(u.tokens.size()) +
                      " tokens but " + std::to_string(labels.size()) + " slot labels");
    for (const auto& l : labels) {
      try {
        parse_bio(l);
      } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
      }
    }
    const int bad = first_bio_violation(labels);
    if (bad >= 0)
      throw DataError(where + ": BIO violation in utterance '" + u.id + "' at position " +
                      std::to_string(bad) + " ('" + labels[static_cast<std::size_t>(bad)] + "')");
    std::vector<int> ids;
    ids.reserve(labels.size());
    for (const auto& l : labels) {
      const BioTag t = parse_bio(l);
      if (t.prefix != 'O') ds.add_slot_type(t.type);
      ids.push_back(ds.slot_vocab.id(l));
    }
    u.slots = std::move(ids);
  }
  ds.utterances.push_back(std::move(u));
}

inline Dataset parse_dataset(std::istream& in) {
  Dataset ds;
  std::string text;
  std::size_t line = 0;
  std::size_t index = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("line " + std::to_string(line) + ": malformed record: " + e.what());
    }
    add_record(ds, rec, line, index++);
  }
  validate(ds);
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file '" + path + "'");
  try {
    return parse_dataset(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline nlohmann::json to_json(const Dataset& ds, const Utterance& u) {
  nlohmann::json j;
  j["id"] = u.id;
  j["tokens"] = u.tokens;
  j["intent"] = ds.intent_vocab.label(u.intent);
  if (u.slots) j["slots"] = ds.slot_labels(u);
  if (!u.flags.empty()) j["flags"] = u.flags;
  return j;
}

inline void write_utterances(std::ostream& out, const Dataset& ds,
                             std::span<const Utterance> utts) {
  for (const auto& u : utts) out << to_json(ds, u).dump() << '\n';
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file '" + path + "'");
  write_utterances(out, ds, ds.utterances);
}

// Few-shot partition of intent classes. Each set is sorted ascending.
struct SplitSpec {
  std::vector<int> meta_train;
  std::vector<int> meta_test;
  std::vector<int> dev;
  std::uint64_t seed = 0;
};

namespace detail {

inline SplitSpec partition_classes(std::vector<int> eligible, std::size_t n_train,
                                   std::size_t n_test, std::uint64_t seed) {
  if (n_train < 3 || n_test < 3)
    throw ConfigError("split needs at least 3 intents in meta-train and in meta-test");
  if (n_train + n_test > eligible.size())
    throw ConfigError("split needs " + std::to_string(n_train + n_test) +
                      " eligible intents but only " + std::to_string(eligible.size()) +
                      " are available");
  std::sort(eligible.begin(), eligible.end());
  Rng rng = make_stream(seed, streams::kSplit);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  SplitSpec s;
  s.seed = seed;
  const auto first = eligible.begin();
  s.meta_train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
  s.meta_test.assign(first + static_cast<std::ptrdiff_t>(n_train),
                     first + static_cast<std::ptrdiff_t>(n_train + n_test));
  s.dev.assign(first + static_cast<std::ptrdiff_t>(n_train + n_test), eligible.end());
  std::sort(s.meta_train.begin(), s.meta_train.end());
  std::sort(s.meta_test.begin(), s.meta_test.end());
  std::sort(s.dev.begin(), s.dev.end());
  return s;
}

}  // namespace detail

// Random partition of all intents; classes beyond n_train + n_test go to dev.
inline SplitSpec make_split_snips_style(const Dataset& ds, std::size_t n_train, std::size_t n_test,
                                        std::uint64_t seed) {
  std::vector<int> all;
  for (const auto& [intent, count] : ds.intent_counts()) all.push_back(intent);
  return detail::partition_classes(std::move(all), n_train, n_test, seed);
}

// Only intents with strictly more than `min_count` utterances are eligible.
inline SplitSpec make_split_atis_style(const Dataset& ds, std::size_t min_count,
                                       std::size_t n_train, std::size_t n_test,
                                       std::uint64_t seed) {
  std::vector<int> eligible;
  for (const auto& [intent, count] : ds.intent_counts())
    if (count > min_count) eligible.push_back(intent);
  return detail::partition_classes(std::move(eligible), n_train, n_test, seed);
}

inline nlohmann::json to_json(const Dataset& ds, const SplitSpec& s) {
  auto names = [&](const std::vector<int>& ids) {
    std::vector<std::string> out;
    for (int i : ids) out.push_back(ds.intent_vocab.label(i));
    return out;
  };
  return {{"meta_train", names(s.meta_train)},
          {"meta_test", names(s.meta_test)},
          {"dev", names(s.dev)},
          {"seed", s.seed}};
}

inline SplitSpec split_from_json(const Dataset& ds, const nlohmann::json& j) {
  auto ids = [&](const char* key) {
    std::vector<int> out;
    if (!j.contains(key) || !j[key].is_array())
      throw ConfigError(std::string("split.") + key + ": expected an array of intent labels");
    for (const auto& name : j[key]) out.push_back(ds.intent_vocab.id(name.get<std::string>()));
    std::sort(out.begin(), out.end());
    return out;
  };
  SplitSpec s;
  s.meta_train = ids("meta_train");
  s.meta_test = ids("meta_test");
  s.dev = ids("dev");
  s.seed = j.value("seed", std::uint64_t{0});
  std::set<int> seen;
  for (const auto* part : {&s.meta_train, &s.meta_test, &s.dev})
    for (int i : *part)
      if (!seen.insert(i).second) throw ConfigError("split: intent sets are not disjoint");
  return s;
}

// slot type -> distinct value token sequences, in order of first observation.
struct SlotValueDict {
  std::map<std::string, std::vector<std::vector<std::string>>> entries;

  void add(const std::string& type, std::vector<std::string> value) {
    auto& values = entries[type];
    if (std::find(values.begin(), values.end(), value) == values.end())
      values.push_back(std::move(value));
  }
  bool empty() const { return entries.empty(); }
};

// Collects every span value observed in utterances of the meta-train intents.
inline SlotValueDict build_slot_value_dict(const Dataset& ds, const SplitSpec& split) {
  const std::set<int> train(split.meta_train.begin(), split.meta_train.end());
  SlotValueDict dict;
  for (const auto& u : ds.utterances) {
    if (!u.slots || !train.count(u.intent)) continue;
    for (const auto& span : extract_spans(ds.slot_labels(u))) {
      std::vector<std::string> value(u.tokens.begin() + static_cast<std::ptrdiff_t>(span.start),
                                     u.tokens.begin() + static_cast<std::ptrdiff_t>(span.end) + 1);
      dict.add(span.type, std::move(value));
    }
  }
  return dict;
}

// Utterances whose intent is in `classes`.
inline std::vector<const Utterance*> select_by_intent(const Dataset& ds,
                                                      std::span<const int> classes) {
  const std::set<int> keep(classes.begin(), classes.end());
  std::vector<const Utterance*> out;
  for (const auto& u : ds.utterances)
    if (keep.count(u.intent)) out.push_back(&u);
  return out;
}

}  // namespace fsnlu

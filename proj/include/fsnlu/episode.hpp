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

// Episodic sampling with a dynamic way and frequency-proportional shots under
// a total support budget (Kmax).
//
// One draw:
//   1. way ~ Uniform[min_way, min(|classes|, kmax)]
//   2. `way` classes chosen uniformly without replacement
//   3. support size S ~ Uniform[way, kmax]
//   4. shots allocated in proportion to class size by largest remainder
//      (ties to the lower intent id), floored at 1 and capped at size - 1
//   5. up to max_query_per_class queries per class from the remaining pool

#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "fsnlu/core.hpp"
#include "fsnlu/corpus.hpp"

namespace fsnlu {

struct SamplerConfig {
  std::size_t kmax = 20;
  std::size_t max_query_per_class = 10;
  std::size_t min_way = 3;
  // Class-set redraws allowed when a drawn class has fewer than 2 examples.
  std::size_t max_retries = 100;
};

struct Episode {
  std::vector<Utterance> support;
  std::vector<Utterance> query;
  std::vector<int> intent_classes;  // ascending
  std::size_t kmax = 0;
};

// Support shots per class. `sizes` are class sizes in ascending intent-id
// order; `budget` is the target support size (>= sizes.size()).
inline std::vector<std::size_t> allocate_shots(std::span<const std::size_t> sizes,
                                               std::size_t budget) {
  const std::size_t way = sizes.size();
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (way == 0 || total == 0) return {};

  std::vector<std::size_t> shots(way);
  std::vector<std::size_t> remainder(way);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < way; ++i) {
    shots[i] = budget * sizes[i] / total;
    remainder[i] = budget * sizes[i] % total;
    assigned += shots[i];
  }
  std::vector<std::size_t> order(way);
  for (std::size_t i = 0; i < way; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < budget && k < way; ++k, ++assigned) ++shots[order[k]];

  std::size_t sum = 0;
  for (std::size_t i = 0; i < way; ++i) {
    shots[i] = std::clamp<std::size_t>(shots[i], 1, std::max<std::size_t>(sizes[i], 2) - 1);
    sum += shots[i];
  }
  // The floor of 1 can overshoot the budget; take shots back from the largest
  // allocation, preferring the smaller class and then the higher id.
  while (sum > budget) {
    std::size_t pick = way;
    for (std::size_t i = 0; i < way; ++i) {
      if (shots[i] <= 1) continue;
      if (pick == way || shots[i] > shots[pick] ||
          (shots[i] == shots[pick] && sizes[i] <= sizes[pick]))
        pick = i;
    }
    if (pick == way) break;
    --shots[pick];
    --sum;
  }
  return shots;
}

// Describes the first violated Episode invariant, or nullopt when well formed.
inline std::optional<std::string> episode_violation(const Episode& ep, std::size_t min_way = 3) {
  if (ep.support.size() > ep.kmax) return "support exceeds kmax";
  if (ep.intent_classes.size() < min_way) return "way below minimum";
  std::set<std::string> support_ids;
  std::map<int, std::size_t> support_count, query_count;
  for (const auto& u : ep.support) {
    support_ids.insert(u.id);
    ++support_count[u.intent];
  }
  for (const auto& u : ep.query) {
    if (support_ids.count(u.id)) return "utterance '" + u.id + "' in both support and query";
    ++query_count[u.intent];
  }
  for (int c : ep.intent_classes) {
    if (!support_count[c]) return "class " + std::to_string(c) + " has no support";
    if (!query_count[c]) return "class " + std::to_string(c) + " has no query";
  }
  if (support_count.size() != ep.intent_classes.size()) return "support has foreign classes";
  return std::nullopt;
}

class EpisodeSampler {
 public:
  EpisodeSampler(const Dataset& ds, std::span<const int> classes, SamplerConfig cfg)
      : ds_(&ds), cfg_(cfg) {
    if (cfg_.kmax < cfg_.min_way) throw ConfigError("sampler: kmax must be >= min_way");
    std::set<int> wanted(classes.begin(), classes.end());
    for (std::size_t i = 0; i < ds.utterances.size(); ++i) {
      const int c = ds.utterances[i].intent;
      if (wanted.count(c)) by_class_[c].push_back(i);
    }
    for (int c : wanted) classes_.push_back(c);  // ascending, includes empty classes
    if (classes_.size() < cfg_.min_way)
      throw ConfigError("sampler: need at least " + std::to_string(cfg_.min_way) +
                        " classes, got " + std::to_string(classes_.size()));
  }

  const SamplerConfig& config() const { return cfg_; }

  Episode sample(Rng& rng) const {
    const std::size_t max_way = std::min(classes_.size(), cfg_.kmax);
    for (std::size_t attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      const auto way = static_cast<std::size_t>(
          uniform_int(rng, static_cast<int>(cfg_.min_way), static_cast<int>(max_way)));
      std::vector<int> pool = classes_;
      std::shuffle(pool.begin(), pool.end(), rng);
      std::vector<int> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(way));
      std::sort(chosen.begin(), chosen.end());
      bool ok = true;
      for (int c : chosen) ok = ok && class_size(c) >= 2;
      if (!ok) continue;
      return build(chosen, rng);
    }
    throw DataError("sampler: could not draw a class set with >= 2 examples per class after " +
                    std::to_string(cfg_.max_retries + 1) + " attempts");
  }

 private:
  std::size_t class_size(int c) const {
    auto it = by_class_.find(c);
    return it == by_class_.end() ? 0 : it->second.size();
  }

  Episode build(const std::vector<int>& chosen, Rng& rng) const {
    const std::size_t way = chosen.size();
    const auto budget = static_cast<std::size_t>(
        uniform_int(rng, static_cast<int>(way), static_cast<int>(cfg_.kmax)));
    std::vector<std::size_t> sizes;
    for (int c : chosen) sizes.push_back(class_size(c));
    const auto shots = allocate_shots(sizes, budget);

    Episode ep;
    ep.kmax = cfg_.kmax;
    ep.intent_classes = chosen;
    for (std::size_t k = 0; k < way; ++k) {
      std::vector<std::size_t> idx = by_class_.at(chosen[k]);
      std::shuffle(idx.begin(), idx.end(), rng);
      const std::size_t n_query = std::min(cfg_.max_query_per_class, idx.size() - shots[k]);
      for (std::size_t i = 0; i < shots[k]; ++i) ep.support.push_back(ds_->utterances[idx[i]]);
      for (std::size_t i = 0; i < n_query; ++i)
        ep.query.push_back(ds_->utterances[idx[shots[k] + i]]);
    }
    return ep;
  }

  const Dataset* ds_;
  SamplerConfig cfg_;
  std::vector<int> classes_;
  std::map<int, std::vector<std::size_t>> by_class_;
};

inline Episode sample_episode(const Dataset& ds, std::span<const int> classes,
                              const SamplerConfig& cfg, Rng& rng) {
  return EpisodeSampler(ds, classes, cfg).sample(rng);
}

struct ShotStatistics {
  double intent_mean = 0.0;  // support utterances per (episode, intent class)
  std::optional<double> slot_mean;  // support tokens per (episode, non-O slot label present)
  std::size_t intent_pairs = 0;
  std::size_t slot_pairs = 0;
};

inline ShotStatistics slot_shot_statistics(std::span<const Episode> episodes, const Dataset& ds) {
  if (episodes.empty()) throw DataError("shot statistics: empty episode list");
  const int outside = ds.slot_vocab.id(std::string(kOutsideTag));
  ShotStatistics st;
  double intent_total = 0.0;
  double slot_total = 0.0;
  for (const auto& ep : episodes) {
    intent_total += static_cast<double>(ep.support.size());
    st.intent_pairs += ep.intent_classes.size();
    std::map<int, std::size_t> tokens;
    for (const auto& u : ep.support) {
      if (!u.slots) continue;
      for (int s : *u.slots)
        if (s != outside) ++tokens[s];
    }
    for (const auto& [slot, n] : tokens) slot_total += static_cast<double>(n);
    st.slot_pairs += tokens.size();
  }
  st.intent_mean = intent_total / static_cast<double>(st.intent_pairs);
  if (st.slot_pairs) st.slot_mean = slot_total / static_cast<double>(st.slot_pairs);
  return st;
}

// Episode as corpus records with an extra "role" field.
inline void write_episode(std::ostream& out, const Dataset& ds, const Episode& ep) {
  for (const auto& u : ep.support) {
    auto j = to_json(ds, u);
    j["role"] = "support";
    out << j.dump() << '\n';
  }
  for (const auto& u : ep.query) {
    auto j = to_json(ds, u);
    j["role"] = "query";
    out << j.dump() << '\n';
  }
}

}  // namespace fsnlu

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

// Template grammars that generate labelled corpora. A template is a
// whitespace-separated token pattern where `[type]` stands for one value of
// slot `type`; values may span several tokens.

#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fsnlu/core.hpp"
#include "fsnlu/corpus.hpp"
#include "json.hpp"

namespace fsnlu {

enum class FrequencyProfile { Balanced, Zipf };

struct IntentGrammar {
  std::string name;
  std::vector<std::string> templates;
};

struct GrammarSpec {
  std::string name;
  std::vector<IntentGrammar> intents;
  std::map<std::string, std::vector<std::string>> slots;  // type -> values
  FrequencyProfile profile = FrequencyProfile::Balanced;
  std::size_t per_intent = 60;  // balanced count, or the head count under Zipf
  double zipf_exponent = 1.0;
  std::size_t min_per_intent = 2;

  // Every placeholder must name a slot type with at least one value.
  void validate() const {
    if (intents.empty()) throw ConfigError("grammar '" + name + "': no intents");
    if (per_intent < 2) throw ConfigError("grammar '" + name + "': per_intent must be >= 2");
    if (min_per_intent < 1) throw ConfigError("grammar '" + name + "': min_per_intent must be >= 1");
    for (const auto& [type, values] : slots) {
      if (values.empty())
        throw ConfigError("grammar '" + name + "': slot '" + type + "' has no values");
      for (const auto& v : values)
        if (split_words(v).empty())
          throw ConfigError("grammar '" + name + "': slot '" + type + "' has an empty value");
    }
    for (const auto& in : intents) {
      if (in.templates.empty())
        throw ConfigError("grammar '" + name + "': intent '" + in.name + "' has no templates");
      for (const auto& t : in.templates) {
        const auto words = split_words(t);
        if (words.empty())
          throw ConfigError("grammar '" + name + "': empty template in '" + in.name + "'");
        for (const auto& w : words)
          if (auto type = placeholder(w); !type.empty() && !slots.count(type))
            throw ConfigError("grammar '" + name + "': template '" + t +
                              "' uses unknown slot type '" + type + "'");
      }
    }
  }

  // Utterances per intent, in intent order. Zipf counts are forced strictly
  // decreasing down to the floor.
  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts;
    for (std::size_t i = 0; i < intents.size(); ++i) {
      if (profile == FrequencyProfile::Balanced) {
        counts.push_back(per_intent);
        continue;
      }
      auto c = static_cast<std::size_t>(
          std::lround(static_cast<double>(per_intent) /
                      std::pow(static_cast<double>(i + 1), zipf_exponent)));
      if (i > 0 && c >= counts.back()) c = counts.back() - 1;
      counts.push_back(std::max(c, min_per_intent));
    }
    return counts;
  }

  static std::vector<std::string> split_words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
  }

  // "[type]" -> "type", anything else -> "".
  static std::string placeholder(const std::string& word) {
    if (word.size() > 2 && word.front() == '[' && word.back() == ']')
      return word.substr(1, word.size() - 2);
    return {};
  }
};

inline GrammarSpec grammar_from_json(const nlohmann::json& j) {
  auto field = [](const std::string& path) { return ConfigError("grammar: bad field '" + path + "'"); };
  GrammarSpec g;
  try {
    g.name = j.value("name", std::string("custom"));
    const std::string profile = j.value("profile", std::string("balanced"));
    if (profile == "balanced")
      g.profile = FrequencyProfile::Balanced;
    else if (profile == "zipf")
      g.profile = FrequencyProfile::Zipf;
    else
      throw field("profile");
    g.per_intent = j.value("per_intent", g.per_intent);
    g.zipf_exponent = j.value("zipf_exponent", g.zipf_exponent);
    g.min_per_intent = j.value("min_per_intent", g.min_per_intent);
    if (!j.contains("slots") || !j["slots"].is_object()) throw field("slots");
    for (const auto& [type, values] : j["slots"].items())
      g.slots[type] = values.get<std::vector<std::string>>();
    if (!j.contains("intents") || !j["intents"].is_array()) throw field("intents");
    for (const auto& in : j["intents"])
      g.intents.push_back(
          {in.at("name").get<std::string>(), in.at("templates").get<std::vector<std::string>>()});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("grammar: ") + e.what());
  }
  g.validate();
  return g;
}

inline nlohmann::json to_json(const GrammarSpec& g) {
  nlohmann::json j;
  j["name"] = g.name;
  j["profile"] = g.profile == FrequencyProfile::Balanced ? "balanced" : "zipf";
  j["per_intent"] = g.per_intent;
  j["zipf_exponent"] = g.zipf_exponent;
  j["min_per_intent"] = g.min_per_intent;
  j["slots"] = g.slots;
  j["intents"] = nlohmann::json::array();
  for (const auto& in : g.intents) j["intents"].push_back({{"name", in.name}, {"templates", in.templates}});
  return j;
}

inline GrammarSpec load_grammar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grammar file '" + path + "'");
  try {
    return grammar_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

namespace detail {

inline constexpr const char* kSnipsLikeGrammar = R"({
  "name": "snips-like",
  "profile": "balanced",
  "per_intent": 60,
  "slots": {
    "city": ["new york", "paris", "boston", "tokyo", "san francisco", "berlin", "chicago",
             "rome", "los angeles", "madrid"],
    "time": ["tonight", "tomorrow", "this weekend", "next week", "at noon", "in the morning",
             "on friday", "at seven pm"],
    "facility": ["smoking room", "spa", "indoor", "outdoor", "pool", "internet", "parking", "wifi"],
    "party_size": ["two", "three", "four", "five", "six", "eight"],
    "restaurant_type": ["restaurant", "bar", "diner", "cafe", "pub", "bistro"],
    "cuisine": ["italian", "thai", "mexican", "indian", "french", "chinese", "greek", "barbecue"],
    "playlist": ["road trip", "chill vibes", "workout mix", "rainy day", "indie favorites",
                 "summer hits"],
    "artist": ["taylor swift", "miles davis", "adele", "the beatles", "nina simone", "drake"],
    "music_item": ["song", "track", "album", "tune"],
    "genre": ["jazz", "rock", "pop", "blues", "classical", "hip hop"],
    "service": ["spotify", "deezer", "youtube", "pandora"],
    "object_name": ["the hobbit", "war and peace", "dune", "moby dick", "blue ribbon barbecue",
                    "the road"],
    "rating_value": ["one", "two", "three", "four", "five"],
    "best_rating": ["five", "ten"],
    "object_type": ["book", "novel", "movie", "show", "game", "saga"],
    "movie_name": ["the matrix", "inception", "up", "jaws", "frozen", "alien"],
    "cinema": ["the grand cinema", "main street theater", "the odeon", "city cinema"],
    "condition": ["rain", "snow", "sunshine", "wind", "fog"],
    "alarm_name": ["wake up", "gym", "meeting", "medicine"],
    "dish": ["pizza", "sushi", "noodles", "tacos", "curry", "burgers"]
  },
  "intents": [
    {"name": "AddToPlaylist", "templates": [
      "add [artist] to my [playlist] playlist",
      "put this [music_item] on [playlist]",
      "add the [music_item] by [artist] to [playlist]",
      "please add [artist] to the [playlist] list",
      "include some [genre] in my [playlist] playlist"]},
    {"name": "BookRestaurant", "templates": [
      "book a table for [party_size] at a [restaurant_type]",
      "book a table at a [facility] [restaurant_type]",
      "reserve a [restaurant_type] with [facility] for [party_size] [time]",
      "i need a table for [party_size] at a [restaurant_type] [time]",
      "book a [restaurant_type] with [facility] [time]"]},
    {"name": "GetWeather", "templates": [
      "what is the weather in [city] [time]",
      "will there be [condition] in [city] [time]",
      "is there going to be [condition] [time]",
      "tell me the forecast for [city]",
      "how cold will it be in [city] [time]"]},
    {"name": "PlayMusic", "templates": [
      "play [artist] on [service]",
      "play some [genre] [music_item]",
      "put on a [music_item] by [artist]",
      "play the latest [music_item] on [service]",
      "i want to hear [genre] from [artist]"]},
    {"name": "RateBook", "templates": [
      "rate [object_name] [rating_value] out of [best_rating]",
      "give this [object_type] [rating_value] stars",
      "i would rate [object_name] a [rating_value]",
      "give [object_name] [rating_value] points out of [best_rating]"]},
    {"name": "SearchCreativeWork", "templates": [
      "find the [object_type] called [object_name]",
      "search for [movie_name]",
      "show me the [object_type] [movie_name]",
      "where can i find [object_name]",
      "look up the [object_type] [object_name]"]},
    {"name": "SearchScreeningEvent", "templates": [
      "what movies are playing at [cinema] [time]",
      "find showtimes for [movie_name] in [city]",
      "when is [movie_name] showing at [cinema]",
      "show me movie times [time] in [city]"]},
    {"name": "BookHotel", "templates": [
      "book a hotel in [city] for [party_size] people",
      "find a hotel with a [facility] in [city]",
      "reserve a room with [facility] [time]",
      "i need a hotel room in [city] [time]"]},
    {"name": "SetAlarm", "templates": [
      "set an alarm for [time]",
      "wake me up [time]",
      "set a [alarm_name] alarm [time]",
      "remind me about [alarm_name] [time]"]},
    {"name": "OrderFood", "templates": [
      "order [dish] from a [cuisine] place",
      "i want [dish] delivered [time]",
      "get me some [cuisine] [dish]",
      "send [dish] to my place in [city] [time]"]}
  ]
})";

inline constexpr const char* kAtisLikeGrammar = R"({
  "name": "atis-like",
  "profile": "zipf",
  "per_intent": 300,
  "zipf_exponent": 1.1,
  "min_per_intent": 4,
  "slots": {
    "fromloc.city_name": [
      "boston",
      "denver",
      "atlanta",
      "dallas",
      "pittsburgh",
      "baltimore",
      "san francisco",
      "new york",
      "washington",
      "philadelphia",
      "salt lake city",
      "fort worth",
      "los angeles",
      "st. louis"
    ],
    "toloc.city_name": [
      "boston",
      "denver",
      "atlanta",
      "dallas",
      "pittsburgh",
      "baltimore",
      "san francisco",
      "new york",
      "washington",
      "philadelphia",
      "salt lake city",
      "fort worth",
      "los angeles",
      "st. louis"
    ],
    "stoploc.city_name": [
      "boston",
      "denver",
      "atlanta",
      "dallas",
      "pittsburgh",
      "baltimore",
      "san francisco",
      "new york",
      "salt lake city",
      "kansas city"
    ],
    "city_name": [
      "boston",
      "denver",
      "atlanta",
      "oakland",
      "new york",
      "san jose",
      "kansas city"
    ],
    "fromloc.airport_name": [
      "logan",
      "jfk",
      "ohare",
      "dfw airport",
      "stapleton"
    ],
    "airport_name": [
      "logan",
      "jfk",
      "ohare",
      "dfw airport",
      "stapleton",
      "general mitchell"
    ],
    "depart_date.day_name": [
      "monday",
      "tuesday",
      "wednesday",
      "friday",
      "sunday"
    ],
    "depart_date.month_name": [
      "june",
      "july",
      "august",
      "may"
    ],
    "depart_date.day_number": [
      "first",
      "second",
      "fifth",
      "twentieth"
    ],
    "depart_date.date_relative": [
      "tomorrow",
      "today",
      "next week"
    ],
    "arrive_date.day_name": [
      "monday",
      "thursday",
      "saturday"
    ],
    "depart_time.period_of_day": [
      "morning",
      "evening",
      "afternoon",
      "night"
    ],
    "depart_time.time": [
      "9 am",
      "noon",
      "6 pm",
      "10 am"
    ],
    "arrive_time.time": [
      "5 pm",
      "8 am",
      "midnight",
      "3 pm"
    ],
    "arrive_time.period_of_day": [
      "morning",
      "evening",
      "afternoon"
    ],
    "airline_name": [
      "delta",
      "united",
      "american airlines",
      "continental",
      "us air",
      "lufthansa"
    ],
    "airline_code": [
      "dl",
      "ua",
      "aa",
      "co"
    ],
    "class_type": [
      "first class",
      "economy",
      "business",
      "coach"
    ],
    "round_trip": [
      "round trip",
      "one way"
    ],
    "cost_relative": [
      "cheapest",
      "least expensive",
      "lowest"
    ],
    "flight_mod": [
      "earliest",
      "latest",
      "last",
      "first"
    ],
    "flight_stop": [
      "nonstop",
      "direct"
    ],
    "aircraft_code": [
      "boeing 747",
      "dc 10",
      "airbus",
      "767",
      "md 80"
    ],
    "meal": [
      "breakfast",
      "lunch",
      "dinner",
      "snack"
    ],
    "meal_description": [
      "vegetarian",
      "kosher"
    ],
    "transport_type": [
      "taxi",
      "limousine",
      "rental car",
      "bus"
    ],
    "fare_basis_code": [
      "y",
      "qx",
      "h",
      "bh",
      "qo"
    ],
    "flight_number": [
      "201",
      "83",
      "1291",
      "417",
      "3357"
    ],
    "restriction_code": [
      "ap 57",
      "ap 80",
      "s",
      "ap"
    ],
    "fare_amount": [
      "200 dollars",
      "500 dollars",
      "1000 dollars"
    ],
    "state_name": [
      "california",
      "texas",
      "georgia",
      "colorado"
    ]
  },
  "intents": [
    {
      "name": "atis_flight",
      "templates": [
        "show me flights from [fromloc.city_name] to [toloc.city_name]",
        "i want to fly from [fromloc.city_name] to [toloc.city_name] on [depart_date.day_name]",
        "list [airline_name] flights to [toloc.city_name] in the [depart_time.period_of_day]",
        "what [flight_stop] flights leave [fromloc.airport_name] [depart_date.date_relative]",
        "i need a [round_trip] flight on [depart_date.month_name] [depart_date.day_number]",
        "show the [flight_mod] flight arriving before [arrive_time.time]",
        "flights from [fromloc.city_name] with a stop in [stoploc.city_name]",
        "find a flight that arrives on [arrive_date.day_name] in the [arrive_time.period_of_day]",
        "which [airline_code] flights leave at [depart_time.time]",
        "i would like a [meal_description] meal flight to [toloc.city_name]"
      ]
    },
    {
      "name": "atis_airfare",
      "templates": [
        "how much is a [class_type] ticket to [toloc.city_name]",
        "what is the [cost_relative] fare from [fromloc.city_name]",
        "show me [round_trip] fares on [airline_name]",
        "are there fares under [fare_amount] to [toloc.city_name]"
      ]
    },
    {
      "name": "atis_ground_service",
      "templates": [
        "what ground transportation is available in [city_name]",
        "is there a [transport_type] from [airport_name] to downtown",
        "ground transportation in [state_name] please"
      ]
    },
    {
      "name": "atis_airline",
      "templates": [
        "which airlines fly to [toloc.city_name]",
        "what airline is flight [flight_number]",
        "what airline has the code [airline_code]"
      ]
    },
    {
      "name": "atis_abbreviation",
      "templates": [
        "what does fare code [fare_basis_code] mean",
        "what is [restriction_code]",
        "explain the abbreviation [airline_code]"
      ]
    },
    {
      "name": "atis_aircraft",
      "templates": [
        "what type of aircraft is used on flight [flight_number]",
        "what kind of plane is a [aircraft_code]",
        "which aircraft does [airline_name] fly"
      ]
    },
    {
      "name": "atis_flight_time",
      "templates": [
        "what time does flight [flight_number] leave",
        "when does the [flight_mod] flight to [toloc.city_name] depart",
        "give me departure times for [depart_date.day_name]"
      ]
    },
    {
      "name": "atis_quantity",
      "templates": [
        "how many flights does [airline_name] have",
        "how many [class_type] seats are on flight [flight_number]",
        "how many airlines serve [city_name]"
      ]
    },
    {
      "name": "atis_distance",
      "templates": [
        "how far is [airport_name] from downtown",
        "what is the distance from [airport_name] to [city_name]",
        "how long is the drive into [city_name]"
      ]
    },
    {
      "name": "atis_city",
      "templates": [
        "what city is [airport_name] in",
        "which cities does [airline_name] serve",
        "where is [airport_name] located"
      ]
    },
    {
      "name": "atis_airport",
      "templates": [
        "what airports are in [city_name]",
        "list the airports in [state_name]",
        "which airport does [airline_name] use"
      ]
    },
    {
      "name": "atis_ground_fare",
      "templates": [
        "how much does a [transport_type] cost in [city_name]",
        "what is the price of a [transport_type]",
        "show the [transport_type] fares"
      ]
    },
    {
      "name": "atis_capacity",
      "templates": [
        "how many passengers fit on a [aircraft_code]",
        "what is the seating capacity of the [aircraft_code]",
        "how many people can a [aircraft_code] hold"
      ]
    },
    {
      "name": "atis_flight_no",
      "templates": [
        "what is the flight number to [toloc.city_name]",
        "give me the flight numbers of [airline_name] flights",
        "which flight number leaves in the [depart_time.period_of_day]"
      ]
    },
    {
      "name": "atis_meal",
      "templates": [
        "is [meal] served on flight [flight_number]",
        "which flights serve [meal_description] [meal]",
        "what meals are offered on the [airline_name] flight"
      ]
    },
    {
      "name": "atis_restriction",
      "templates": [
        "what are the restrictions on fare [fare_basis_code]",
        "show me the restrictions for [restriction_code]",
        "are there restrictions on the [cost_relative] fare"
      ]
    }
  ]
})";

}  // namespace detail

inline std::vector<std::string> bundled_grammar_names() { return {"snips-like", "atis-like"}; }

inline GrammarSpec bundled_grammar(const std::string& name) {
  if (name == "snips-like") return grammar_from_json(nlohmann::json::parse(detail::kSnipsLikeGrammar));
  if (name == "atis-like") return grammar_from_json(nlohmann::json::parse(detail::kAtisLikeGrammar));
  throw ConfigError("unknown bundled grammar '" + name + "'");
}

// A bundled grammar name, or a path to a grammar file.
inline GrammarSpec resolve_grammar(const std::string& name_or_path) {
  for (const auto& n : bundled_grammar_names())
    if (n == name_or_path) return bundled_grammar(n);
  return load_grammar(name_or_path);
}

// Instantiates every intent `class_counts()[i]` times: a uniformly chosen
// template with a uniformly chosen value per placeholder. Records go through
// the same path as loaded files, so vocabularies match a reload.
inline Dataset generate(const GrammarSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_stream(seed, streams::kGenerate);
  const auto counts = spec.class_counts();
  std::map<std::string, std::vector<std::vector<std::string>>> values;
  for (const auto& [type, vs] : spec.slots)
    for (const auto& v : vs) values[type].push_back(GrammarSpec::split_words(v));

  Dataset ds;
  std::size_t index = 0;
  for (std::size_t i = 0; i < spec.intents.size(); ++i) {
    const auto& in = spec.intents[i];
    for (std::size_t k = 0; k < counts[i]; ++k) {
      const auto& tmpl = in.templates[uniform_index(rng, in.templates.size())];
      std::vector<std::string> tokens, slots;
      for (const auto& w : GrammarSpec::split_words(tmpl)) {
        const auto type = GrammarSpec::placeholder(w);
        if (type.empty()) {
          tokens.push_back(w);
          slots.emplace_back(kOutsideTag);
          continue;
        }
        const auto& vs = values.at(type);
        const auto& v = vs[uniform_index(rng, vs.size())];
        for (std::size_t t = 0; t < v.size(); ++t) {
          tokens.push_back(v[t]);
          slots.push_back(t == 0 ? begin_tag(type) : inside_tag(type));
        }
      }
      nlohmann::json rec = {{"id", in.name + "-" + std::to_string(k)},
                            {"tokens", tokens},
                            {"intent", in.name},
                            {"slots", slots}};
      add_record(ds, rec, index + 1, index);
      ++index;
    }
  }
  validate(ds);
  return ds;
}

// Overrides the per-intent count before generating.
inline Dataset generate(GrammarSpec spec, std::size_t per_intent, std::uint64_t seed) {
  spec.per_intent = per_intent;
  return generate(spec, seed);
}

// Every distinct word a grammar can emit.
inline std::vector<std::string> grammar_words(const GrammarSpec& spec) {
  std::set<std::string> words;
  for (const auto& in : spec.intents)
    for (const auto& t : in.templates)
      for (const auto& w : GrammarSpec::split_words(t))
        if (GrammarSpec::placeholder(w).empty()) words.insert(w);
  for (const auto& [type, vs] : spec.slots)
    for (const auto& v : vs)
      for (const auto& w : GrammarSpec::split_words(v)) words.insert(w);
  return {words.begin(), words.end()};
}

}  // namespace fsnlu
